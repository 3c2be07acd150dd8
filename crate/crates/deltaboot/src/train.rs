//! Deterministic training: Gaussian weight initialization with zero biases,
//! Adam with bias correction, piecewise-constant learning-rate schedules,
//! and fixed-order minibatches without shuffling. Every byte of the result
//! is a function of the configuration and the seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{
    accuracy, cost_with_diagnostics, grad_cost, DataView, NetworkSpec, ParamVector,
};
use crate::seed::rng_from_seed;
use rand::Rng;
use rand_distr::StandardNormal;

/// Adam moment decay rates and denominator offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Everything the optimizer loop needs besides data and a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// `(step, rate)` pairs; the rate of the last pair with step <= t is in
    /// effect at step t.
    pub schedule: Vec<(u64, f64)>,
    pub total_steps: u64,
    #[serde(default)]
    pub adam: AdamParams,
    #[serde(default = "default_init_stddev")]
    pub init_stddev: f64,
    /// Final full-batch gradient norms above this mark the run as not
    /// converged in its stats.
    #[serde(default = "default_grad_norm_warn")]
    pub grad_norm_warn: f64,
}

fn default_init_stddev() -> f64 {
    0.05
}

fn default_grad_norm_warn() -> f64 {
    0.05
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            schedule: vec![(0, 1e-3)],
            total_steps: 1000,
            adam: AdamParams::default(),
            init_stddev: default_init_stddev(),
            grad_norm_warn: default_grad_norm_warn(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidTrainConfig("batch_size must be positive".into()));
        }
        if self.schedule.is_empty() {
            return Err(Error::InvalidTrainConfig("schedule must not be empty".into()));
        }
        if self.schedule[0].0 != 0 {
            return Err(Error::InvalidTrainConfig(format!(
                "schedule must start at step 0, got {}",
                self.schedule[0].0
            )));
        }
        for w in self.schedule.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidTrainConfig(format!(
                    "schedule steps must be strictly increasing, got {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(step, rate) in &self.schedule {
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(Error::InvalidTrainConfig(format!(
                    "rate at step {step} must be a positive real, got {rate}"
                )));
            }
        }
        let last = self.schedule.last().unwrap().0;
        if self.total_steps < last {
            return Err(Error::InvalidTrainConfig(format!(
                "total_steps {} precedes the last schedule step {last}",
                self.total_steps
            )));
        }
        if !(self.init_stddev > 0.0) {
            return Err(Error::InvalidTrainConfig(format!(
                "init_stddev must be positive, got {}",
                self.init_stddev
            )));
        }
        if !(self.grad_norm_warn > 0.0) {
            return Err(Error::InvalidTrainConfig(format!(
                "grad_norm_warn must be positive, got {}",
                self.grad_norm_warn
            )));
        }
        if !(0.0..1.0).contains(&self.adam.beta1)
            || !(0.0..1.0).contains(&self.adam.beta2)
            || !(self.adam.eps > 0.0)
        {
            return Err(Error::InvalidTrainConfig(format!(
                "adam constants out of range: beta1 {}, beta2 {}, eps {}",
                self.adam.beta1, self.adam.beta2, self.adam.eps
            )));
        }
        Ok(())
    }

    /// Learning rate in effect at step `t`.
    pub fn rate_at(&self, t: u64) -> f64 {
        let mut rate = self.schedule[0].1;
        for &(step, r) in &self.schedule {
            if step <= t {
                rate = r;
            } else {
                break;
            }
        }
        rate
    }
}

/// How an ensemble assigns weight-initialization seeds to its replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedPolicy {
    pub mode: SeedMode,
    pub base_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedMode {
    /// Static: every replicate starts from the same weights.
    #[serde(rename = "SRWI")]
    Srwi,
    /// Dynamic: each replicate gets its own initialization.
    #[serde(rename = "DRWI")]
    Drwi,
}

impl SeedPolicy {
    pub fn srwi(base_seed: u64) -> Self {
        SeedPolicy {
            mode: SeedMode::Srwi,
            base_seed,
        }
    }

    pub fn drwi(base_seed: u64) -> Self {
        SeedPolicy {
            mode: SeedMode::Drwi,
            base_seed,
        }
    }

    /// Weight-initialization seed for replicate `r`.
    pub fn init_seed(&self, r: usize) -> u64 {
        match self.mode {
            SeedMode::Srwi => self.base_seed,
            SeedMode::Drwi => self.base_seed.wrapping_add(r as u64),
        }
    }
}

/// Weights drawn i.i.d. normal(0, stddev^2) in parameter order; biases
/// exactly zero. Identical seeds give bitwise identical vectors.
pub fn init_params(spec: &NetworkSpec, seed: u64, stddev: f64) -> Result<ParamVector> {
    if !(stddev > 0.0) {
        return Err(Error::InvalidTrainConfig(format!(
            "init stddev must be positive, got {stddev}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut params = ParamVector::zeros(spec);
    for seg in spec.layout().segments().to_vec() {
        let w = &mut params.values_mut()[seg.weights.start..seg.weights.end()];
        for wi in w {
            *wi = stddev * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(params)
}

/// Adam first and second moment accumulators plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }
}

/// One Adam update with bias correction. Pure: consumes state and
/// parameters, returns their successors.
pub fn adam_step(
    mut state: AdamState,
    mut params: ParamVector,
    grad: &[f64],
    rate: f64,
    hyper: &AdamParams,
) -> (AdamState, ParamVector) {
    assert_eq!(grad.len(), params.len());
    assert_eq!(state.m.len(), params.len());
    state.t += 1;
    let t = state.t as i32;
    let corr1 = 1.0 - hyper.beta1.powi(t);
    let corr2 = 1.0 - hyper.beta2.powi(t);
    let values = params.values_mut();
    for j in 0..grad.len() {
        let g = grad[j];
        state.m[j] = hyper.beta1 * state.m[j] + (1.0 - hyper.beta1) * g;
        state.v[j] = hyper.beta2 * state.v[j] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.m[j] / corr1;
        let v_hat = state.v[j] / corr2;
        values[j] -= rate * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    (state, params)
}

/// Convergence diagnostics of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub steps: u64,
    pub train_cost: f64,
    pub train_accuracy: f64,
    pub test_cost: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Norm of the full training-set cost gradient at the final weights.
    pub grad_norm: f64,
    /// Whether `grad_norm` came in under the configured threshold.
    pub converged: bool,
    /// Training examples whose true-class probability hit the log clamp
    /// during the final cost evaluation.
    pub clamped_examples: usize,
}

/// Train from a fresh initialization; see [`train_observed`].
pub fn train(
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    data: DataView<'_>,
    test: Option<DataView<'_>>,
    init_seed: u64,
) -> Result<(ParamVector, TrainingStats)> {
    train_observed(spec, cfg, data, test, init_seed, |_, _| {})
}

/// Train with a per-step observer receiving `(step, rate)`; the observer
/// exists so schedule behavior can be asserted from outside.
pub fn train_observed(
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    data: DataView<'_>,
    test: Option<DataView<'_>>,
    init_seed: u64,
    mut observe: impl FnMut(u64, f64),
) -> Result<(ParamVector, TrainingStats)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData { need: 1, got: 0 });
    }
    let n = data.len();
    let num_batches = n.div_ceil(cfg.batch_size);

    let mut params = init_params(spec, init_seed, cfg.init_stddev)?;
    let mut state = AdamState::new(params.len());

    for t in 0..cfg.total_steps {
        let rate = cfg.rate_at(t);
        observe(t, rate);
        let b = (t % num_batches as u64) as usize;
        let start = b * cfg.batch_size;
        let len = cfg.batch_size.min(n - start);
        let batch = data.narrow(start, len);
        let grad = grad_cost(spec, &params, batch);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "minibatch cost gradient".into(),
                step: t,
            });
        }
        (state, params) = adam_step(state, params, &grad, rate, &cfg.adam);
    }

    let full_grad = grad_cost(spec, &params, data);
    let grad_norm = full_grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let train_diag = cost_with_diagnostics(spec, &params, data);
    let (test_cost, test_accuracy) = match test {
        Some(view) => (
            Some(cost_with_diagnostics(spec, &params, view).cost),
            Some(accuracy(spec, &params, view)),
        ),
        None => (None, None),
    };
    let stats = TrainingStats {
        steps: cfg.total_steps,
        train_cost: train_diag.cost,
        train_accuracy: accuracy(spec, &params, data),
        test_cost,
        test_accuracy,
        grad_norm,
        converged: grad_norm <= cfg.grad_norm_warn,
        clamped_examples: train_diag.clamped,
    };
    Ok((params, stats))
}
