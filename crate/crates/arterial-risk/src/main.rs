//! `arterial-risk`: reproducible crash-risk pipeline for signalized
//! arterials.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 configuration error
//! (including command-line misuse).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use arterial_risk::commands;

#[derive(Parser)]
#[command(name = "arterial-risk", version, about = "Crash-risk pipeline for signalized arterials")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corridor: detector logs, crash log, ground truth
    Simulate {
        /// World configuration JSON
        #[arg(long)]
        config: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Master seed (overrides the config's seed)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build the matched case-control dataset from detector logs
    Prepare {
        /// Preparation configuration JSON
        #[arg(long)]
        config: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Master seed (overrides the config's seed)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a Bayesian model to a prepared dataset
    Fit {
        /// Fit configuration JSON
        #[arg(long)]
        config: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Sampler seed (overrides the config's sampler.seed)
        #[arg(long)]
        seed: Option<u64>,
        /// Use this 5-minute slice's covariates (overrides the model's slice)
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        slice: Option<u8>,
        /// Maximum chains run concurrently
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        threads: u64,
    },
    /// Score a fitted model: DIC, ROC/AUC, report tables
    Evaluate {
        /// Evaluation configuration JSON
        #[arg(long)]
        config: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit and rank a list of fixed/random covariate combinations
    Sweep {
        /// Sweep configuration JSON
        #[arg(long)]
        config: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Sampler seed (overrides the config's sampler.seed)
        #[arg(long)]
        seed: Option<u64>,
        /// Use this 5-minute slice's covariates (overrides the config's slice)
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        slice: Option<u8>,
        /// Maximum chains run concurrently
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        threads: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Simulate { config, out, seed } => commands::simulate::run(&config, &out, seed),
        Cmd::Prepare { config, out, seed } => commands::prepare::run(&config, &out, seed),
        Cmd::Fit { config, out, seed, slice, threads } => {
            commands::fit::run(&config, &out, seed, slice, threads as usize)
        }
        Cmd::Evaluate { config, out } => commands::evaluate::run(&config, &out),
        Cmd::Sweep { config, out, seed, slice, threads } => {
            commands::sweep::run(&config, &out, seed, slice, threads as usize)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
