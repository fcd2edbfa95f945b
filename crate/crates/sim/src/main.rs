use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sllg_sim::{load_config, run_study, Overrides, SimError};

/// Run a stochastic LLG study described by a TOML configuration file.
///
/// Exit status: 0 when every invariant check passes, 2 when an invariant
/// check fails, 3 on linear solver failure, 4 on configuration errors
/// (including a time step outside the admissible θ regime).
/// The worker thread count is read from SLLG_WORKERS.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Cli {
    /// Configuration file.
    config: PathBuf,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// VTK snapshot stride in steps (0 disables snapshots).
    #[arg(long)]
    snapshots: Option<usize>,
    /// Do not print the resolved configuration.
    #[arg(long, short)]
    quiet: bool,
}

fn configure_workers() -> Result<(), SimError> {
    let Ok(v) = std::env::var("SLLG_WORKERS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        SimError::Config(format!(
            "SLLG_WORKERS must be a positive integer, got `{v}`"
        ))
    })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| SimError::Config(format!("SLLG_WORKERS: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main_inner(cli: &Cli) -> Result<bool, SimError> {
    configure_workers()?;
    let overrides = Overrides {
        theta: cli.theta,
        seed: cli.seed,
        samples: cli.samples,
        levels: cli.levels,
        out: cli.out.clone(),
        snapshots: cli.snapshots,
    };
    let cfg = load_config(&cli.config, &overrides)?;
    if !cli.quiet {
        println!("{}", cfg.echo());
    }
    let report = run_study(&cfg)?;
    println!(
        "report written to {}",
        cfg.output.dir.join("report.csv").display()
    );
    for f in &report.failures {
        eprintln!("FAIL: {f}");
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(true) => {
            println!("all invariant checks passed");
            ExitCode::SUCCESS
        }
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
