//! Command-line front end for `hankel_sysid`: simulation, estimation,
//! order detection, realization, self-checks and the benchmark suites.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Outcome;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "hankel-sysid", version, about = "Hidden-state LTI system identification")]
pub struct Cli {
    /// Print only the JSON result on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a trajectory to CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full estimator on a trajectory.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print penalties and refit orders without solving.
        #[arg(long)]
        dry_run: bool,
    },
    /// Stage one only: detect the model order.
    Order {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ho-Kalman realization of a given Hankel matrix.
    Realize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the benchmark suites into a directory.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Offset added to every seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Randomized identity and inequality checks.
    Check {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn dispatch(cmd: &Command) -> CliResult<Outcome> {
    use commands::*;
    match cmd {
        Command::Simulate { config, out, seed } => cmd_simulate(config, out, *seed),
        Command::Estimate { config, trajectory, out, dry_run } => {
            cmd_estimate(config, trajectory, out.as_deref(), *dry_run)
        }
        Command::Order { config, trajectory, out } => cmd_order(config, trajectory, out.as_deref()),
        Command::Realize { config, out } => cmd_realize(config, out.as_deref()),
        Command::Bench { config, out, seed, jobs } => cmd_bench(config, out, *seed, *jobs),
        Command::Check { config, seed, out } => cmd_check(config.as_deref(), *seed, out.as_deref()),
    }
}

/// Runs a parsed command line, printing results; returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(&cli.command) {
        Ok(o) => {
            let body = if cli.json { serde_json::to_string_pretty(&o.json).unwrap_or_default() } else { o.text };
            // a closed pipe (`| head`) is not an error worth reporting
            let _ = writeln!(std::io::stdout().lock(), "{body}");
            o.exit
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
