//! Batch front door: `cocycle-lab <command> --config <path>`.
//!
//! Exit codes: 0 on success, 1 on a computation error, 2 on a
//! configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cocycle_lab::config::{self, Command};
use cocycle_lab::error::Error;
use cocycle_lab::run;

#[derive(Parser)]
#[command(
    name = "cocycle-lab",
    about = "Numerical laboratory for doubling-map Schrödinger cocycles",
    version
)]
struct Cli {
    /// Subcommand: lyapunov | ap | ldt | angles | spectrum | localize |
    /// greens | holder | ids | resonance | goodset | selftest
    command: String,
    /// Flat key=value run configuration
    #[arg(long)]
    config: PathBuf,
    /// Override the configured random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured worker count
    #[arg(long)]
    workers: Option<usize>,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(cli: Cli) -> Result<run::RunOutcome, Error> {
    let command = Command::parse(&cli.command)?;
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut cfg = config::parse_config(&text)?;
    if cfg.command != command {
        return Err(Error::config(format!(
            "config declares command `{}` but the CLI asked for `{}`",
            cfg.command.name(),
            command.name()
        )));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out.display().to_string();
    }
    run::run(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(outcome) => {
            if let Some(csv) = &outcome.csv_path {
                println!("wrote {} rows to {}", outcome.rows, csv.display());
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
