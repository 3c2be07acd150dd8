//! The staged experiment pipeline: network training, bootstrap ensembles,
//! curvature eigendecomposition, paired tables and regressions, and the K/B
//! sweeps. Every stage persists its outputs under the run directory and
//! later stages read them back, so long phases are independently resumable
//! and a failed run keeps its partial artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bootstrap::{ensemble_sigma, ensemble_sigma_first, make_resamples, predict_all, train_ensemble};
use crate::compare::{
    build_table, regress_table, sweep_b, sweep_k, BSweepRep, KSweepRep, RegressionResult,
    SweepAxis, SweepSummary, TableMeta,
};
use crate::delta::{
    lanczos_topk, project_sensitivities, sigma_from_projection, EigenPairs, GradMatrix,
    OpgOperator, ProjectedSensitivity, Uncertainty,
};
use crate::error::{Error, Result};
use crate::io::checkpoint;
use crate::io::svg::{scatter_svg, sweep_svg, write_svg, SweepMetric};
use crate::io::table_csv::write_table;
use crate::io::timing::{Bucket, TimingBuilder, TimingReport};
use crate::io::ExperimentConfig;
use crate::net::{Dataset, NetworkSpec, ParamVector};
use crate::seed::derive_seed;
use crate::train::{init_params, train, SeedPolicy, TrainingStats};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Train,
    Bootstrap,
    Delta,
    Compare,
    Sweep,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Train,
        Stage::Bootstrap,
        Stage::Delta,
        Stage::Compare,
        Stage::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Bootstrap => "bootstrap",
            Stage::Delta => "delta",
            Stage::Compare => "compare",
            Stage::Sweep => "sweep",
        }
    }
}

/// Locations of every artifact a run produces. Repetitions are 1-based in
/// file names.
#[derive(Debug, Clone)]
pub struct RunPaths {
    root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunPaths { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolved_config(&self) -> PathBuf {
        self.root.join("resolved_config.json")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("MANIFEST.json")
    }

    fn rep_dir(&self, rep: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("rep{rep}"))
    }

    pub fn boot_init(&self, rep: usize, r: usize) -> PathBuf {
        self.rep_dir(rep).join(format!("boot_r{r:03}_init.ckpt"))
    }

    pub fn boot_final(&self, rep: usize, r: usize) -> PathBuf {
        self.rep_dir(rep).join(format!("boot_r{r:03}_final.ckpt"))
    }

    pub fn boot_preds(&self, rep: usize, split: Split) -> PathBuf {
        self.rep_dir(rep).join(format!("boot_preds_{}.ckpt", split.name()))
    }

    pub fn boot_mean(&self, rep: usize) -> PathBuf {
        self.rep_dir(rep).join("boot_mean_test.ckpt")
    }

    pub fn boot_sigma(&self, rep: usize) -> PathBuf {
        self.rep_dir(rep).join("boot_sigma_test.ckpt")
    }

    pub fn delta_init(&self, rep: usize) -> PathBuf {
        self.rep_dir(rep).join("delta_init.ckpt")
    }

    pub fn delta_final(&self, rep: usize) -> PathBuf {
        self.rep_dir(rep).join("delta_final.ckpt")
    }

    pub fn grads(&self, rep: usize) -> PathBuf {
        self.rep_dir(rep).join("grads.ckpt")
    }

    pub fn eigen(&self, rep: usize) -> PathBuf {
        self.rep_dir(rep).join("eigen.ckpt")
    }

    pub fn delta_uncertainty(&self, rep: usize, split: Split) -> PathBuf {
        self.rep_dir(rep).join(format!("delta_{}.ckpt", split.name()))
    }

    pub fn table(&self, b: usize, k: usize, rep: usize) -> PathBuf {
        self.root
            .join("tables")
            .join(format!("uncertainty_B{b}_K{k}_rep{rep}.csv"))
    }

    pub fn regressions(&self) -> PathBuf {
        self.root.join("summaries").join("regressions.json")
    }

    pub fn training_stats(&self) -> PathBuf {
        self.root.join("summaries").join("training_stats.json")
    }

    pub fn sweep_summary(&self, axis: SweepAxis) -> PathBuf {
        let name = match axis {
            SweepAxis::K => "sweep_k.json",
            SweepAxis::B => "sweep_b.json",
        };
        self.root.join("summaries").join(name)
    }

    pub fn timing(&self) -> PathBuf {
        self.root.join("summaries").join("timing.json")
    }

    pub fn scatter_plot(&self, rep: usize) -> PathBuf {
        self.root.join("plots").join(format!("scatter_rep{rep}.svg"))
    }

    pub fn sweep_plot(&self, axis: SweepAxis, metric: SweepMetric) -> PathBuf {
        let axis_name = match axis {
            SweepAxis::K => "k",
            SweepAxis::B => "b",
        };
        let metric_name = match metric {
            SweepMetric::RSquared => "r2",
            SweepMetric::Beta => "beta",
            SweepMetric::MaxEpsilon => "epsilon",
        };
        self.root
            .join("plots")
            .join(format!("sweep_{axis_name}_{metric_name}.svg"))
    }

    fn ensure_dirs(&self, repetitions: usize) -> Result<()> {
        for rep in 1..=repetitions {
            std::fs::create_dir_all(self.rep_dir(rep))?;
        }
        std::fs::create_dir_all(self.root.join("tables"))?;
        std::fs::create_dir_all(self.root.join("summaries"))?;
        std::fs::create_dir_all(self.root.join("plots"))?;
        Ok(())
    }
}

/// Data split a persisted artifact refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Which stages have completed; written after every stage so interrupted
/// runs leave an honest record next to their partial outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub completed: Vec<String>,
    pub failed: Option<String>,
}

impl Manifest {
    pub fn load_or_default(path: &Path) -> Result<Manifest> {
        match std::fs::read_to_string(path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn is_complete(&self, stage: Stage) -> bool {
        self.completed.iter().any(|s| s == stage.name())
    }

    fn mark_complete(&mut self, stage: Stage) {
        if !self.is_complete(stage) {
            self.completed.push(stage.name().to_string());
        }
        if self.failed.as_deref() == Some(stage.name()) {
            self.failed = None;
        }
    }

    fn mark_failed(&mut self, stage: Stage) {
        self.failed = Some(stage.name().to_string());
    }
}

/// Per-network training statistics for the whole run: one entry per
/// repetition for the delta-route network, one entry per (repetition,
/// replicate) for the bootstrap ensembles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummaries {
    pub delta: Vec<TrainingStats>,
    pub bootstrap: Vec<Vec<TrainingStats>>,
}

impl TrainingSummaries {
    fn load_or_default(path: &Path) -> Result<TrainingSummaries> {
        match std::fs::read_to_string(path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(TrainingSummaries::default()),
            Err(e) => Err(e.into()),
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// One fitted cell of the (B, K, repetition) grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionRecord {
    pub b: usize,
    pub k: usize,
    pub rep: usize,
    #[serde(flatten)]
    pub fit: RegressionResult,
}

fn missing(path: &Path, produced_by: Stage) -> Error {
    Error::InvalidData(format!(
        "missing artifact {}; run the {} stage first",
        path.display(),
        produced_by.name()
    ))
}

fn load_params_for(spec: &NetworkSpec, path: &Path, produced_by: Stage) -> Result<ParamVector> {
    if !path.exists() {
        return Err(missing(path, produced_by));
    }
    let values = checkpoint::load_params(path)?;
    ParamVector::from_values(spec, values)
}

fn load_eigen_for(path: &Path) -> Result<EigenPairs> {
    if !path.exists() {
        return Err(missing(path, Stage::Delta));
    }
    checkpoint::load_eigen(path)
}

/// Everything the stage bodies share.
struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    paths: &'a RunPaths,
    train_data: &'a Dataset,
    test_data: &'a Dataset,
    spec: &'a NetworkSpec,
}

impl Ctx<'_> {
    fn reps(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.cfg.repetitions
    }

    /// Weight-initialization seed of the delta-route network of `rep`.
    fn delta_seed(&self, rep: usize) -> u64 {
        derive_seed(self.cfg.base_seed, "delta-init", rep as u64)
    }
}

fn stage_train(ctx: &Ctx<'_>, timer: &mut TimingBuilder) -> Result<()> {
    let mut summaries = TrainingSummaries::load_or_default(&ctx.paths.training_stats())?;
    summaries.delta.clear();
    for rep in ctx.reps() {
        let seed = ctx.delta_seed(rep);
        let stats = timer.time(Bucket::DeltaTraining, || -> Result<_> {
            let init = init_params(ctx.spec, seed, ctx.cfg.train.init_stddev)?;
            checkpoint::save_params(&ctx.paths.delta_init(rep), init.values())?;
            let (params, stats) = train(
                ctx.spec,
                &ctx.cfg.train,
                ctx.train_data.view(),
                Some(ctx.test_data.view()),
                seed,
            )?;
            checkpoint::save_params(&ctx.paths.delta_final(rep), params.values())?;
            Ok(stats)
        })?;
        summaries.delta.push(stats);
    }
    summaries.save(&ctx.paths.training_stats())
}

fn stage_bootstrap(ctx: &Ctx<'_>, timer: &mut TimingBuilder) -> Result<()> {
    let mut summaries = TrainingSummaries::load_or_default(&ctx.paths.training_stats())?;
    summaries.bootstrap.clear();
    let b = ctx.cfg.ensemble_size;
    let n = ctx.train_data.len();
    let classes = ctx.spec.num_classes();
    for rep in ctx.reps() {
        let policy = SeedPolicy {
            mode: ctx.cfg.seed_policy,
            base_seed: derive_seed(ctx.cfg.base_seed, "boot-init", rep as u64),
        };
        let resample_seed = derive_seed(ctx.cfg.base_seed, "resample", rep as u64);
        let ensemble = timer.time(Bucket::BootstrapInitial, || -> Result<_> {
            let idx = make_resamples(n, b, resample_seed)?;
            for r in 0..b {
                let init = init_params(ctx.spec, policy.init_seed(r), ctx.cfg.train.init_stddev)?;
                checkpoint::save_params(&ctx.paths.boot_init(rep, r), init.values())?;
            }
            let ensemble = train_ensemble(
                ctx.spec,
                &ctx.cfg.train,
                ctx.train_data,
                Some(ctx.test_data.view()),
                &idx,
                policy,
            )?;
            for (r, (params, _)) in ensemble.iter().enumerate() {
                checkpoint::save_params(&ctx.paths.boot_final(rep, r), params.values())?;
            }
            Ok(ensemble)
        })?;

        let preds_test = timer.time(Bucket::BootstrapPredictTest, || -> Result<_> {
            let preds: Vec<Vec<f64>> = ensemble
                .iter()
                .map(|(params, _)| predict_all(ctx.spec, params, ctx.test_data.view()))
                .collect();
            checkpoint::save_preds(
                &ctx.paths.boot_preds(rep, Split::Test),
                &preds,
                ctx.test_data.len(),
                classes,
            )?;
            Ok(preds)
        })?;
        timer.time(Bucket::BootstrapPredictTrain, || -> Result<_> {
            let preds: Vec<Vec<f64>> = ensemble
                .iter()
                .map(|(params, _)| predict_all(ctx.spec, params, ctx.train_data.view()))
                .collect();
            checkpoint::save_preds(
                &ctx.paths.boot_preds(rep, Split::Train),
                &preds,
                n,
                classes,
            )
        })?;

        timer.time(Bucket::Analysis, || -> Result<_> {
            let (mean, sigma) = ensemble_sigma(&preds_test, classes)?;
            checkpoint::save_matrix(&ctx.paths.boot_mean(rep), &mean, ctx.test_data.len(), classes)?;
            checkpoint::save_matrix(&ctx.paths.boot_sigma(rep), &sigma, ctx.test_data.len(), classes)
        })?;

        summaries
            .bootstrap
            .push(ensemble.into_iter().map(|(_, stats)| stats).collect());
    }
    summaries.save(&ctx.paths.training_stats())
}

fn stage_delta(ctx: &Ctx<'_>, timer: &mut TimingBuilder) -> Result<()> {
    let lambda = ctx.spec.reg_rate();
    let k_max = ctx.cfg.k_max();
    let n_train = ctx.train_data.len();
    for rep in ctx.reps() {
        let params = load_params_for(ctx.spec, &ctx.paths.delta_final(rep), Stage::Train)?;
        let eigen = timer.time(Bucket::DeltaInitial, || -> Result<_> {
            let grads = GradMatrix::compute(ctx.spec, &params, ctx.train_data.view());
            checkpoint::save_grads(&ctx.paths.grads(rep), &grads)?;
            let op = OpgOperator::new(&grads, lambda)?;
            let eigen = lanczos_topk(
                &op,
                k_max,
                derive_seed(ctx.cfg.base_seed, "lanczos", rep as u64),
                ctx.cfg.lanczos_tol,
                ctx.spec.param_count(),
            )?;
            checkpoint::save_eigen(&ctx.paths.eigen(rep), &eigen)?;
            Ok(eigen)
        })?;
        timer.time(Bucket::DeltaPredictTest, || -> Result<_> {
            let proj = project_sensitivities(ctx.spec, &params, &eigen, ctx.test_data.view())?;
            let u = sigma_from_projection(&proj, eigen.values(), k_max, lambda, n_train)?;
            checkpoint::save_uncertainty(&ctx.paths.delta_uncertainty(rep, Split::Test), &u)
        })?;
        timer.time(Bucket::DeltaPredictTrain, || -> Result<_> {
            let proj = project_sensitivities(ctx.spec, &params, &eigen, ctx.train_data.view())?;
            let u = sigma_from_projection(&proj, eigen.values(), k_max, lambda, n_train)?;
            checkpoint::save_uncertainty(&ctx.paths.delta_uncertainty(rep, Split::Train), &u)
        })?;
    }
    Ok(())
}

fn stage_compare(ctx: &Ctx<'_>, timer: &mut TimingBuilder) -> Result<()> {
    timer.time(Bucket::Analysis, || -> Result<_> {
        let lambda = ctx.spec.reg_rate();
        let n_train = ctx.train_data.len();
        let classes = ctx.spec.num_classes();
        let b_values = ctx.cfg.b_values_or_default();
        let b_max = *b_values.last().expect("validated non-empty");
        let k_max = ctx.cfg.k_max();
        let mut records: Vec<RegressionRecord> = Vec::new();
        for rep in ctx.reps() {
            let preds_path = ctx.paths.boot_preds(rep, Split::Test);
            if !preds_path.exists() {
                return Err(missing(&preds_path, Stage::Bootstrap));
            }
            let (per_replicate, _, _) = checkpoint::load_preds(&preds_path)?;
            let params = load_params_for(ctx.spec, &ctx.paths.delta_final(rep), Stage::Train)?;
            let eigen = load_eigen_for(&ctx.paths.eigen(rep))?;
            let proj = project_sensitivities(ctx.spec, &params, &eigen, ctx.test_data.view())?;
            let boots: Vec<(usize, Vec<f64>)> = b_values
                .iter()
                .map(|&b| Ok((b, ensemble_sigma_first(&per_replicate, b, classes)?.1)))
                .collect::<Result<_>>()?;
            for &k in &ctx.cfg.k_values {
                let delta = sigma_from_projection(&proj, eigen.values(), k, lambda, n_train)?;
                for (b, boot) in &boots {
                    let b = *b;
                    let table = build_table(
                        boot,
                        &delta,
                        TableMeta {
                            dataset: ctx.cfg.dataset_id(),
                            b,
                            k,
                            rep,
                            policy: ctx.cfg.seed_policy,
                        },
                    )?;
                    let fit = regress_table(&table)?;
                    write_table(&ctx.paths.table(b, k, rep), &table)?;
                    records.push(RegressionRecord { b, k, rep, fit });
                    if b == b_max && k == k_max {
                        write_svg(&ctx.paths.scatter_plot(rep), &scatter_svg(&table, &fit)?)?;
                    }
                }
            }
        }
        std::fs::write(
            ctx.paths.regressions(),
            serde_json::to_string_pretty(&records)?,
        )?;
        Ok(())
    })
}

fn stage_sweep(ctx: &Ctx<'_>, timer: &mut TimingBuilder) -> Result<()> {
    timer.time(Bucket::Analysis, || -> Result<_> {
        let lambda = ctx.spec.reg_rate();
        let n_train = ctx.train_data.len();

        struct RepData {
            proj: ProjectedSensitivity,
            eigenvalues: Vec<f64>,
            boot_sigma: Vec<f64>,
            delta_test: Uncertainty,
            per_replicate: Vec<Vec<f64>>,
        }

        let mut rep_data = Vec::with_capacity(ctx.cfg.repetitions);
        for rep in ctx.reps() {
            let params = load_params_for(ctx.spec, &ctx.paths.delta_final(rep), Stage::Train)?;
            let eigen = load_eigen_for(&ctx.paths.eigen(rep))?;
            let proj = project_sensitivities(ctx.spec, &params, &eigen, ctx.test_data.view())?;
            let sigma_path = ctx.paths.boot_sigma(rep);
            if !sigma_path.exists() {
                return Err(missing(&sigma_path, Stage::Bootstrap));
            }
            let (boot_sigma, _, _) = checkpoint::load_matrix(&sigma_path)?;
            let delta_path = ctx.paths.delta_uncertainty(rep, Split::Test);
            if !delta_path.exists() {
                return Err(missing(&delta_path, Stage::Delta));
            }
            let delta_test = checkpoint::load_uncertainty(&delta_path)?;
            let preds_path = ctx.paths.boot_preds(rep, Split::Test);
            if !preds_path.exists() {
                return Err(missing(&preds_path, Stage::Bootstrap));
            }
            let (per_replicate, _, _) = checkpoint::load_preds(&preds_path)?;
            rep_data.push(RepData {
                proj,
                eigenvalues: eigen.values().to_vec(),
                boot_sigma,
                delta_test,
                per_replicate,
            });
        }

        let k_reps: Vec<KSweepRep<'_>> = rep_data
            .iter()
            .map(|r| KSweepRep {
                proj: &r.proj,
                eigenvalues: &r.eigenvalues,
                lambda,
                n_train,
                boot_sigma: &r.boot_sigma,
            })
            .collect();
        let k_summary = sweep_k(&k_reps, &ctx.cfg.k_values)?;
        write_summary(&ctx.paths.sweep_summary(SweepAxis::K), &k_summary)?;

        let b_reps: Vec<BSweepRep<'_>> = rep_data
            .iter()
            .map(|r| BSweepRep {
                delta: &r.delta_test,
                per_replicate: &r.per_replicate,
            })
            .collect();
        let b_summary = sweep_b(&b_reps, &ctx.cfg.b_values_or_default())?;
        write_summary(&ctx.paths.sweep_summary(SweepAxis::B), &b_summary)?;

        for (summary, metrics) in [
            (
                &k_summary,
                &[SweepMetric::RSquared, SweepMetric::Beta, SweepMetric::MaxEpsilon][..],
            ),
            (&b_summary, &[SweepMetric::RSquared, SweepMetric::Beta][..]),
        ] {
            for &metric in metrics {
                write_svg(
                    &ctx.paths.sweep_plot(summary.axis, metric),
                    &sweep_svg(summary, metric)?,
                )?;
            }
        }
        Ok(())
    })
}

fn run_stage_body(ctx: &Ctx<'_>, stage: Stage, timer: &mut TimingBuilder) -> Result<()> {
    match stage {
        Stage::Train => stage_train(ctx, timer),
        Stage::Bootstrap => stage_bootstrap(ctx, timer),
        Stage::Delta => stage_delta(ctx, timer),
        Stage::Compare => stage_compare(ctx, timer),
        Stage::Sweep => stage_sweep(ctx, timer),
    }
}

fn write_summary(path: &Path, summary: &SweepSummary) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(summary)?)?;
    Ok(())
}

fn execute(cfg: &ExperimentConfig, stages: &[Stage]) -> Result<TimingReport> {
    cfg.validate()?;
    let paths = RunPaths::new(cfg.out_dir.clone());
    paths.ensure_dirs(cfg.repetitions)?;
    std::fs::write(paths.resolved_config(), cfg.to_json()?)?;

    let mut timer = TimingBuilder::start();
    let (train_data, test_data) = timer.time(Bucket::Dataset, || cfg.build_dataset())?;
    let spec = cfg.build_network(&train_data)?;
    if test_data.shape() != train_data.shape() || test_data.num_classes() != train_data.num_classes()
    {
        return Err(Error::Config(format!(
            "train split ({}, {} classes) and test split ({}, {} classes) disagree",
            train_data.shape(),
            train_data.num_classes(),
            test_data.shape(),
            test_data.num_classes()
        )));
    }
    if cfg.k_max() > spec.param_count() {
        return Err(Error::Config(format!(
            "largest K {} exceeds the network's {} parameters",
            cfg.k_max(),
            spec.param_count()
        )));
    }

    let ctx = Ctx {
        cfg,
        paths: &paths,
        train_data: &train_data,
        test_data: &test_data,
        spec: &spec,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a {}-thread pool: {e}", cfg.threads)))?;

    let mut manifest = Manifest::load_or_default(&paths.manifest())?;
    for &stage in stages {
        let result = pool.install(|| run_stage_body(&ctx, stage, &mut timer));
        match result {
            Ok(()) => {
                manifest.mark_complete(stage);
                manifest.save(&paths.manifest())?;
            }
            Err(e) => {
                manifest.mark_failed(stage);
                manifest.save(&paths.manifest())?;
                return Err(e.in_stage(stage.name()));
            }
        }
    }

    let report = timer.finish();
    if stages.len() == Stage::ALL.len() {
        std::fs::write(paths.timing(), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}

/// Run a single pipeline stage against the artifacts already present in the
/// configured output directory.
pub fn run_stage(cfg: &ExperimentConfig, stage: Stage) -> Result<()> {
    execute(cfg, &[stage]).map(|_| ())
}

/// Run the full pipeline and leave the complete artifact tree (resolved
/// config, checkpoints, tables, summaries, plots, manifest, timing report)
/// in the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TimingReport> {
    execute(cfg, &Stage::ALL)
}
