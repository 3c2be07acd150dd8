//! Drive the whole pipeline from a config file, exactly as the `run`
//! subcommand would, and walk the artifact tree afterwards.

use deltaboot::io::load_config;
use deltaboot::io::timing::PhaseTimes;
use deltaboot::run::{run_experiment, RunPaths};

fn phase(name: &str, t: &PhaseTimes) {
    println!(
        "{name:<10} setup {:>7.3}s  predict train {:>7.3}s  test {:>7.3}s  total {:>7.3}s",
        t.initial, t.prediction_train, t.prediction_test, t.total
    );
}

fn main() -> deltaboot::Result<()> {
    let mut cfg = load_config("configs/smoke.json".as_ref())?;
    cfg.out_dir = std::env::temp_dir().join("deltaboot_full_pipeline");
    let report = run_experiment(&cfg)?;

    phase("bootstrap", &report.bootstrap);
    phase("delta", &report.delta);
    println!("single-net training {:.3}s, analysis {:.3}s", report.delta_training, report.analysis);
    println!("delta route speedup over bootstrap: {:.2}x", report.delta_speedup);
    println!("buckets cover {:.0}% of {:.3}s wall time", 100.0 * report.coverage(), report.total);

    let paths = RunPaths::new(&cfg.out_dir);
    println!();
    println!("wrote {}", paths.resolved_config().display());
    println!("wrote {}", paths.regressions().display());
    println!("wrote {}", paths.timing().display());
    let one_table = paths.table(cfg.ensemble_size, cfg.k_values[0], 1);
    println!("wrote {} (one of the tables)", one_table.display());
    Ok(())
}
