use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hpband::Error;

mod commands;
mod config;

use config::{Command, Overrides, RunConfig};

/// hp-adaptive band-function sampling and band-gap optimization.
#[derive(Debug, Parser)]
#[command(name = "hpband", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON config file (a manifest from an earlier run also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for evaluation sets and the optimizer.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Stop optimizing once a proposal is no better than the start.
    #[arg(long, global = true)]
    paper_stopping: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Band frequencies along the high-symmetry path.
    Bands,
    /// Adaptive refinement and hp interpolation.
    Adapt,
    /// Adaptive vs uniform convergence study.
    Converge,
    /// Bayesian optimization of the band gap.
    Optimize,
}

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ADMISSIBILITY: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_DOMAIN: u8 = 5;

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::Json(_) | Error::Shell { .. } => EXIT_CONFIG,
        Error::Admissibility(_) => EXIT_ADMISSIBILITY,
        Error::Numerical(_) | Error::Conditioning { .. } => EXIT_NUMERICAL,
        Error::Domain { .. } => EXIT_DOMAIN,
        _ => EXIT_OTHER,
    }
}

fn run(cli: &Cli) -> hpband::Result<()> {
    let command = match cli.command {
        Cmd::Bands => Command::Bands,
        Cmd::Adapt => Command::Adapt,
        Cmd::Converge => Command::Converge,
        Cmd::Optimize => Command::Optimize,
    };
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let flags = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        paper_stopping: cli.paper_stopping,
    };
    let cfg = file.resolve(command, &flags)?;
    let workers = match cli.workers {
        Some(0) => return Err(Error::Config("--workers must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::Internal(format!("cannot start worker pool: {e}")))?;
    commands::run(&cfg, workers)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
