//! Command-line front end for closed-loop ranking experiments.
//!
//! Exit codes: 0 on success, 2 for configuration or data problems
//! (unparseable config, missing files, invalid shapes), 3 when a solver
//! fails. Flags override config-file values, which override built-in
//! defaults.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{load_config, resolve, ConfigError, Overrides};

#[derive(Parser)]
#[command(
    name = "rankctl",
    version,
    about = "Closed-loop ranking experiments: synthetic data, episode runs, \
             price sweeps, progress forecasts, and gain tuning.",
    after_help = "Exit codes: 0 success, 2 configuration or data error, 3 solver failure."
)]
struct Cli {
    /// Experiment config file (TOML).
    #[arg(long, global = true, default_value = "experiment.toml", value_name = "FILE")]
    config: PathBuf,

    /// Override the config's seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Override the config's progress mode: expected | realized.
    #[arg(long, global = true, value_name = "MODE")]
    progress_mode: Option<String>,

    /// Override the worker thread count (0 = one per physical core).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Override the config's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the canonical synthetic dataset (contexts.csv, groups.csv).
    Synth,
    /// Run one episode per configured controller; write results and traces.
    Run,
    /// Evaluate every controller across the shortfall-price grid.
    Sweep,
    /// Fit the offline plan and write the progress-to-go table.
    Forecast,
    /// Grid-search controller parameters per (controller, price) cell.
    Tune,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let (file, sha) = load_config(&cli.config)?;
    let overrides = Overrides {
        seed: cli.seed,
        progress_mode: cli.progress_mode.clone(),
        workers: cli.workers,
        out: cli.out.clone(),
    };
    let exp = resolve(file, sha, &overrides)?;

    let workers = if exp.workers == 0 {
        num_cpus::get_physical()
    } else {
        exp.workers
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| ConfigError(format!("cannot size the worker pool: {e}")))?;

    std::fs::create_dir_all(&exp.out_dir).map_err(|e| {
        ConfigError(format!(
            "cannot create output directory {}: {e}",
            exp.out_dir.display()
        ))
    })?;

    match cli.command {
        Cmd::Synth => commands::cmd_synth(&exp),
        Cmd::Run => commands::cmd_run(&exp),
        Cmd::Sweep => commands::cmd_sweep(&exp),
        Cmd::Forecast => commands::cmd_forecast(&exp),
        Cmd::Tune => commands::cmd_tune(&exp),
    }
}

/// 2 for anything the user can fix in the config or data, 3 for solver
/// failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<rankctl::Error>() {
        Some(rankctl::Error::Solver(_)) => 3,
        _ => 2,
    }
}
