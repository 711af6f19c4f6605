//! `spinglass`: reproducible experiment runner.
//!
//! Every subcommand reads a TOML config, writes CSV tables and a
//! `manifest.json` into the output directory, and exits with
//! 0 (success), 1 (I/O), 2 (config), 3 (capacity) or 4 (numeric failure).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "spinglass", version, about = "Spin-glass overlap experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides `master_seed` from the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory; overrides `out` from the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = "SPINGLASS_WORKERS", value_name = "INT")]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Monomial estimates for exact finite-N SK Gibbs measures.
    SkObservables,
    /// Overlap samples and histograms from a Ruelle probability cascade.
    RpcSample,
    /// Time-change versus cascade construction of the same cascade.
    RpcCompare,
    /// Ghirlanda–Guerra identity check on a configured sampler.
    GgCheck,
    /// Probability that a new replica's overlap is new, as a function of s.
    Singularity,
    /// Overlap law of a cascade before and after the stochastic-stability map.
    Stability,
    /// Waiting-time and merger-size statistics of the Bolthausen–Sznitman coalescent.
    CoalescentStats,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<spinglass::Error> for Failure {
    fn from(e: spinglass::Error) -> Self {
        use spinglass::Error::*;
        let code = match &e {
            Capacity { .. } => 3,
            Numeric(_) => 4,
            Io(_) => 1,
            Dimension { .. } | Domain(_) | Invalid(_) | Json(_) => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::config("--config PATH is required"))?;
    let raw = config::load(path)?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Failure::config("--workers must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::config(e.to_string()))?;
    }
    let ctx = config::Context::new(raw, cli.seed, cli.out)?;
    match cli.command {
        Command::SkObservables => commands::sk::run(ctx),
        Command::RpcSample => commands::rpc::run_sample(ctx),
        Command::RpcCompare => commands::rpc::run_compare(ctx),
        Command::GgCheck => commands::identities::run_gg(ctx),
        Command::Singularity => commands::identities::run_singularity(ctx),
        Command::Stability => commands::rpc::run_stability(ctx),
        Command::CoalescentStats => commands::coalescent::run(ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
