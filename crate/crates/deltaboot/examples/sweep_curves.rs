//! Run a small experiment end to end, then read back the rank and ensemble
//! sweep summaries the pipeline wrote.

use deltaboot::compare::{SweepAxis, SweepSummary};
use deltaboot::io::{load_config, DatasetConfig, ExperimentConfig, NetworkConfig};
use deltaboot::run::{run_experiment, RunPaths};
use deltaboot::train::{SeedMode, TrainConfig};

fn small_config(out: std::path::PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetConfig::Synthetic {
            classes: 3,
            dim: 6,
            n_train: 90,
            n_test: 30,
            separation: 2.0,
        },
        network: NetworkConfig::Dense { hidden: vec![10] },
        reg_rate: 0.01,
        train: TrainConfig {
            batch_size: 30,
            schedule: vec![(0, 2e-3)],
            total_steps: 300,
            ..TrainConfig::default()
        },
        base_seed: 31,
        seed_policy: SeedMode::Drwi,
        ensemble_size: 8,
        k_values: vec![4, 8, 16, 32],
        b_values: None,
        repetitions: 2,
        lanczos_tol: 1e-8,
        out_dir: out,
        threads: 1,
    }
}

fn print_summary(summary: &SweepSummary) {
    println!("axis {:?}", summary.axis);
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10} {:>12}",
        "value", "R2 mean", "R2 band", "slope", "band", "max eps"
    );
    for p in &summary.points {
        println!(
            "{:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>12.3e}",
            p.value, p.r_squared_mean, p.r_squared_band, p.beta_mean, p.beta_band, p.max_epsilon
        );
    }
}

fn main() -> deltaboot::Result<()> {
    let dir = std::env::temp_dir().join("deltaboot_sweep_curves");
    let cfg = small_config(dir.join("run"));
    run_experiment(&cfg)?;

    let paths = RunPaths::new(&cfg.out_dir);
    for axis in [SweepAxis::K, SweepAxis::B] {
        let text = std::fs::read_to_string(paths.sweep_summary(axis))?;
        let summary: SweepSummary = serde_json::from_str(&text)?;
        print_summary(&summary);
        println!();
    }

    // The resolved config written next to the artifacts round-trips.
    let resolved = load_config(&paths.resolved_config())?;
    println!("resolved config ensemble size {}", resolved.ensemble_size);
    Ok(())
}
