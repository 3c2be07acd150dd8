//! Bootstrap ensembles: resampling with replacement by index, parallel
//! replicate training under a seed policy, and the sample mean / unbiased
//! sample standard deviation of the ensemble's predictions.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::{forward, DataView, Dataset, NetworkSpec, ParamVector};
use crate::seed::derived_rng;
use crate::train::{train, SeedPolicy, TrainConfig, TrainingStats};
use rand::Rng;

/// B rows of N indices into the original training set. Only indices are
/// stored; the resampled datasets exist as views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResampleIndex {
    indices: Vec<usize>,
    b: usize,
    n: usize,
}

impl ResampleIndex {
    pub fn b(&self) -> usize {
        self.b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.indices[r * self.n..(r + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.indices.chunks_exact(self.n)
    }

    pub fn from_rows(indices: Vec<usize>, b: usize, n: usize) -> Result<Self> {
        if indices.len() != b * n || b == 0 || n == 0 {
            return Err(Error::CountMismatch(format!(
                "{} indices cannot form {b} resamples of size {n}",
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidData(format!(
                "resample index {bad} out of range for dataset of {n}"
            )));
        }
        Ok(ResampleIndex { indices, b, n })
    }
}

/// Draw `b` independent with-replacement resamples of `0..n`. Each row has
/// its own derived random stream, so the table for a given seed does not
/// depend on how many rows are drawn after it.
pub fn make_resamples(n: usize, b: usize, seed: u64) -> Result<ResampleIndex> {
    if n == 0 || b == 0 {
        return Err(Error::InvalidData(format!(
            "resampling needs positive sizes, got n = {n}, b = {b}"
        )));
    }
    let mut indices = Vec::with_capacity(b * n);
    for r in 0..b {
        let mut rng = derived_rng(seed, "resample", r as u64);
        indices.extend((0..n).map(|_| rng.random_range(0..n)));
    }
    Ok(ResampleIndex { indices, b, n })
}

/// Train one replicate per resample row, in parallel. Replicate `r` trains
/// on `data[idx.row(r)]` with the weight-init seed the policy assigns it;
/// results are ordered by replicate and independent of scheduling.
pub fn train_ensemble(
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    data: &Dataset,
    test: Option<DataView<'_>>,
    idx: &ResampleIndex,
    policy: SeedPolicy,
) -> Result<Vec<(ParamVector, TrainingStats)>> {
    if idx.n() != data.len() {
        return Err(Error::CountMismatch(format!(
            "resample rows of width {} cannot index a dataset of {}",
            idx.n(),
            data.len()
        )));
    }
    (0..idx.b())
        .into_par_iter()
        .map(|r| {
            let view = data.select(idx.row(r));
            train(spec, cfg, view, test, policy.init_seed(r))
                .map_err(|e| e.in_stage(format!("bootstrap replicate {r}")))
        })
        .collect()
}

/// Class probabilities of one model over a whole dataset, flattened
/// row-major (example-major).
pub fn predict_all(spec: &NetworkSpec, params: &ParamVector, data: DataView<'_>) -> Vec<f64> {
    let classes = spec.num_classes();
    let mut out = vec![0.0; data.len() * classes];
    out.par_chunks_mut(classes).enumerate().for_each(|(i, row)| {
        row.copy_from_slice(&forward(spec, params, data.input(i)));
    });
    out
}

/// The ensemble's B probability vectors for a single input.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePredictions {
    preds: Vec<f64>,
    classes: usize,
}

impl EnsemblePredictions {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let classes = rows
            .first()
            .map(Vec::len)
            .ok_or(Error::InsufficientReplicates { got: 0 })?;
        let mut preds = Vec::with_capacity(rows.len() * classes);
        for (b, row) in rows.iter().enumerate() {
            if row.len() != classes {
                return Err(Error::CountMismatch(format!(
                    "prediction {b} has {} classes, expected {classes}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidData(format!(
                    "prediction {b} is not a probability vector (sum {sum})"
                )));
            }
            preds.extend_from_slice(row);
        }
        Ok(EnsemblePredictions { preds, classes })
    }

    pub fn b(&self) -> usize {
        self.preds.len() / self.classes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.preds[b * self.classes..(b + 1) * self.classes]
    }
}

/// Elementwise arithmetic mean over the ensemble.
pub fn boot_mean(preds: &EnsemblePredictions) -> Vec<f64> {
    let b = preds.b();
    let mut mean = vec![0.0; preds.classes()];
    for r in 0..b {
        for (m, &p) in mean.iter_mut().zip(preds.row(r)) {
            *m += p;
        }
    }
    for m in &mut mean {
        *m /= b as f64;
    }
    mean
}

/// Elementwise unbiased sample standard deviation (divisor B - 1) over the
/// ensemble.
pub fn boot_sigma(preds: &EnsemblePredictions) -> Result<Vec<f64>> {
    let b = preds.b();
    if b < 2 {
        return Err(Error::InsufficientReplicates { got: b });
    }
    let mean = boot_mean(preds);
    let mut var = vec![0.0; preds.classes()];
    for r in 0..b {
        for (v, (&p, &m)) in var.iter_mut().zip(preds.row(r).iter().zip(&mean)) {
            let d = p - m;
            *v += d * d;
        }
    }
    Ok(var
        .into_iter()
        .map(|v| (v / (b - 1) as f64).sqrt())
        .collect())
}

/// Mean and sigma for every test example at once, computed from the first
/// `use_b` replicates of per-replicate prediction matrices (each flattened
/// example-major). Using a prefix makes ensemble-size sweeps reuse the same
/// trained models.
pub fn ensemble_sigma_first(
    per_replicate: &[Vec<f64>],
    use_b: usize,
    classes: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if use_b < 2 || use_b > per_replicate.len() {
        return Err(Error::InsufficientReplicates {
            got: use_b.min(per_replicate.len()),
        });
    }
    let cells = per_replicate[0].len();
    if cells == 0 || cells % classes != 0 {
        return Err(Error::CountMismatch(format!(
            "prediction matrix of {cells} values is not a multiple of {classes} classes"
        )));
    }
    for (r, m) in per_replicate.iter().enumerate().take(use_b) {
        if m.len() != cells {
            return Err(Error::CountMismatch(format!(
                "replicate {r} predicts {} values, expected {cells}",
                m.len()
            )));
        }
    }
    let mut mean = vec![0.0; cells];
    for m in per_replicate.iter().take(use_b) {
        for (acc, &p) in mean.iter_mut().zip(m) {
            *acc += p;
        }
    }
    for acc in &mut mean {
        *acc /= use_b as f64;
    }
    let mut var = vec![0.0; cells];
    for m in per_replicate.iter().take(use_b) {
        for (v, (&p, &mu)) in var.iter_mut().zip(m.iter().zip(&mean)) {
            let d = p - mu;
            *v += d * d;
        }
    }
    let sigma = var
        .into_iter()
        .map(|v| (v / (use_b - 1) as f64).sqrt())
        .collect();
    Ok((mean, sigma))
}

/// As [`ensemble_sigma_first`] with every replicate included.
pub fn ensemble_sigma(
    per_replicate: &[Vec<f64>],
    classes: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    ensemble_sigma_first(per_replicate, per_replicate.len(), classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ActShape;
    use approx::assert_relative_eq;

    #[test]
    fn resamples_are_deterministic_and_in_range() {
        let a = make_resamples(17, 5, 99).unwrap();
        let b = make_resamples(17, 5, 99).unwrap();
        let c = make_resamples(17, 5, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.rows().all(|row| row.iter().all(|&i| i < 17)));
    }

    #[test]
    fn rows_do_not_depend_on_how_many_follow() {
        let five = make_resamples(29, 5, 7).unwrap();
        let two = make_resamples(29, 2, 7).unwrap();
        assert_eq!(five.row(0), two.row(0));
        assert_eq!(five.row(1), two.row(1));
    }

    #[test]
    fn single_element_dataset_resamples_to_zeros() {
        let idx = make_resamples(1, 3, 0).unwrap();
        assert!(idx.rows().all(|row| row.iter().all(|&i| i == 0)));
    }

    #[test]
    fn coverage_matches_with_replacement_statistics() {
        // A with-replacement sample of size N from N items covers about
        // 1 - 1/e of them.
        let n = 10_000;
        let idx = make_resamples(n, 1, 2024).unwrap();
        let mut seen = vec![false; n];
        for &i in idx.row(0) {
            seen[i] = true;
        }
        let distinct = seen.iter().filter(|&&s| s).count() as f64 / n as f64;
        let expected = 1.0 - (-1.0f64).exp();
        assert!(
            (distinct - expected).abs() < 0.02,
            "coverage {distinct} vs {expected}"
        );
    }

    fn preds(rows: &[&[f64]]) -> EnsemblePredictions {
        EnsemblePredictions::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn mean_and_sigma_hand_cases() {
        let p = preds(&[&[0.2, 0.8], &[0.4, 0.6]]);
        let mean = boot_mean(&p);
        assert_relative_eq!(mean[0], 0.3);
        assert_relative_eq!(mean[1], 0.7);
        let sigma = boot_sigma(&p).unwrap();
        assert_relative_eq!(sigma[0], 0.02f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(sigma[1], 0.02f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn symmetric_deviations_scale_sigma() {
        let d = 0.05;
        let p = preds(&[&[0.3 + d, 0.7 - d], &[0.3 - d, 0.7 + d]]);
        let sigma = boot_sigma(&p).unwrap();
        assert_relative_eq!(sigma[0], d * 2.0f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(sigma[1], d * 2.0f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn identical_rows_have_zero_sigma() {
        let p = preds(&[&[0.25, 0.75], &[0.25, 0.75], &[0.25, 0.75]]);
        assert!(boot_sigma(&p).unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn sigma_requires_two_replicates() {
        let p = preds(&[&[1.0, 0.0]]);
        assert!(matches!(
            boot_sigma(&p),
            Err(Error::InsufficientReplicates { got: 1 })
        ));
    }

    #[test]
    fn rejects_non_probability_rows() {
        assert!(EnsemblePredictions::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(EnsemblePredictions::new(vec![vec![-0.1, 1.1]]).is_err());
        assert!(EnsemblePredictions::new(vec![]).is_err());
    }

    #[test]
    fn prefix_sigma_matches_direct_computation() {
        let a = vec![0.2, 0.8, 0.5, 0.5];
        let b = vec![0.4, 0.6, 0.7, 0.3];
        let c = vec![0.3, 0.7, 0.1, 0.9];
        let all = vec![a.clone(), b.clone(), c.clone()];
        let (_, first_two) = ensemble_sigma_first(&all, 2, 2).unwrap();
        let (_, direct) = ensemble_sigma(&[a, b].to_vec(), 2).unwrap();
        assert_eq!(first_two, direct);
    }

    #[test]
    fn srwi_and_drwi_ensembles_behave_as_named() {
        let spec = NetworkSpec::dense_classifier(2, &[4], 2, 0.001).unwrap();
        let data = Dataset::from_class_indices(
            vec![vec![1.5, 0.0], vec![-1.5, 0.0], vec![1.2, 0.3], vec![-1.2, -0.3]],
            &[0, 1, 0, 1],
            2,
            ActShape::Flat { len: 2 },
        )
        .unwrap();
        let cfg = TrainConfig {
            batch_size: 4,
            schedule: vec![(0, 1e-2)],
            total_steps: 30,
            ..TrainConfig::default()
        };
        // Identical resample rows isolate the init-seed policy.
        let idx = ResampleIndex::from_rows(vec![0, 1, 2, 3, 0, 1, 2, 3], 2, 4).unwrap();

        let srwi =
            train_ensemble(&spec, &cfg, &data, None, &idx, SeedPolicy::srwi(8)).unwrap();
        assert_eq!(srwi[0].0.values(), srwi[1].0.values());

        let drwi =
            train_ensemble(&spec, &cfg, &data, None, &idx, SeedPolicy::drwi(8)).unwrap();
        assert_ne!(drwi[0].0.values(), drwi[1].0.values());
    }
}
