use deltaboot::io::timing::TimingReport;
use deltaboot::io::{DatasetConfig, ExperimentConfig, NetworkConfig};
use deltaboot::run::{run_experiment, RunPaths};
use deltaboot::train::{SeedMode, TrainConfig};

fn main() {
    let dir = std::env::temp_dir().join("deltaboot_scratch_timing");
    let _ = std::fs::remove_dir_all(&dir);
    let cfg = ExperimentConfig {
        dataset: DatasetConfig::Synthetic {
            classes: 3,
            dim: 6,
            n_train: 60,
            n_test: 21,
            separation: 2.0,
        },
        network: NetworkConfig::Dense { hidden: vec![8] },
        reg_rate: 0.01,
        train: TrainConfig {
            batch_size: 10,
            schedule: vec![(0, 3e-3)],
            total_steps: 120,
            ..TrainConfig::default()
        },
        base_seed: 4242,
        seed_policy: SeedMode::Drwi,
        ensemble_size: 4,
        k_values: vec![4, 8, 16],
        b_values: None,
        repetitions: 2,
        lanczos_tol: 1e-8,
        out_dir: dir.clone(),
        threads: 1,
    };
    let r = run_experiment(&cfg).unwrap();
    let paths = RunPaths::new(&cfg.out_dir);

    let text = std::fs::read_to_string(paths.timing()).unwrap();
    let on_disk: TimingReport = serde_json::from_str(&text).unwrap();
    println!("on_disk == returned: {}", on_disk == r);
    println!("disk {on_disk:?}");
    println!("ret  {r:?}");
    let reser = serde_json::to_string_pretty(&r).unwrap();
    println!("reserialized == file text: {}", reser == text);
    println!("dataset {}", r.dataset);
    for (name, phase) in [("bootstrap", &r.bootstrap), ("delta", &r.delta)] {
        println!(
            "{name}: initial {} pred_train {} pred_test {} total {} (sum gap {:e})",
            phase.initial,
            phase.prediction_train,
            phase.prediction_test,
            phase.total,
            (phase.total - phase.sum_parts()).abs()
        );
    }
    println!("delta_training {}", r.delta_training);
    println!("analysis {}", r.analysis);
    println!("total {}", r.total);
    println!("coverage {}", r.coverage());
    let want = r.bootstrap.total / (r.delta_training + r.delta.total);
    println!("speedup {} recomputed {} gap {:e}", r.delta_speedup, want, (r.delta_speedup - want).abs());
}
