use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deltaboot::io::{load_config, Overrides, OUT_DIR_ENV};
use deltaboot::run::{run_experiment, run_stage, Stage};

#[derive(Parser)]
#[command(
    name = "deltaboot",
    version,
    about = "Compare bootstrap and delta-method uncertainty for small neural classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Experiment config file (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides the config and the DELTABOOT_OUT
    /// environment variable.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; 0 picks the machine default.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Base seed override.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the networks the delta route differentiates, one per repetition.
    Train(StageArgs),
    /// Train the bootstrap ensembles and persist their predictions.
    Bootstrap(StageArgs),
    /// Decompose the curvature and compute delta-route uncertainties.
    Delta(StageArgs),
    /// Pair the two sigmas into tables and fit regressions.
    Compare(StageArgs),
    /// Sweep eigenpair counts and ensemble sizes.
    Sweep(StageArgs),
    /// Run every stage in order.
    Run(StageArgs),
}

impl Command {
    fn args(&self) -> &StageArgs {
        match self {
            Command::Train(a)
            | Command::Bootstrap(a)
            | Command::Delta(a)
            | Command::Compare(a)
            | Command::Sweep(a)
            | Command::Run(a) => a,
        }
    }
}

fn dispatch(command: &Command) -> deltaboot::Result<()> {
    let args = command.args();
    let mut cfg = load_config(&args.config)?;
    let env_out = std::env::var(OUT_DIR_ENV).ok();
    cfg.apply_overrides(
        &Overrides {
            out: args.out.clone(),
            threads: args.threads,
            seed: args.seed,
        },
        env_out.as_deref(),
    );
    match command {
        Command::Run(_) => {
            let report = run_experiment(&cfg)?;
            println!("run complete: {}", cfg.out_dir.display());
            println!(
                "bootstrap {:.2}s, delta route {:.2}s ({:.2}x), total {:.2}s",
                report.bootstrap.total,
                report.delta_training + report.delta.total,
                report.delta_speedup,
                report.total
            );
            Ok(())
        }
        Command::Train(_) => run_stage(&cfg, Stage::Train),
        Command::Bootstrap(_) => run_stage(&cfg, Stage::Bootstrap),
        Command::Delta(_) => run_stage(&cfg, Stage::Delta),
        Command::Compare(_) => run_stage(&cfg, Stage::Compare),
        Command::Sweep(_) => run_stage(&cfg, Stage::Sweep),
    }
    .inspect(|()| {
        if !matches!(command, Command::Run(_)) {
            println!("stage complete: {}", cfg.out_dir.display());
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
