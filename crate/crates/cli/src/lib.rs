//! Batch driver for the clock study: single-chain analysis, optimization,
//! sweeps over chain length, power-law fits, quench sweeps and plots.

pub mod commands;
pub mod config;
pub mod plot;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use log::info;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error(transparent)]
    Core(#[from] pstclock_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration and input problems, 3 for numerical failures, 4 for resume mismatches.
    pub fn exit_code(&self) -> i32 {
        use pstclock_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Plot(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                E::ResumeMismatch(_) => 4,
                E::InvalidChain(_)
                | E::InvalidInput(_)
                | E::Fit(_)
                | E::Io(_)
                | E::Json(_)
                | E::Csv(_) => 2,
                _ => 3,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pstclock",
    version,
    about = "Spin-chain clock analysis and optimization"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the optimizer seed; for `sweep` it replaces the seed list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Checkpoint to continue an `optimize` run from.
    #[arg(long, global = true)]
    pub resume: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Survival, tick density, fidelity and tick statistics of the `[chain]` spec.
    Analyze,
    /// Optimizes the tail couplings for `[optimize] n_sites`.
    Optimize,
    /// Optimizes every (N, seed) pair of `[sweep]` and fits the scalings.
    Sweep,
    /// Effective precision against decoupling time for the given chains.
    Quench,
    /// Power-law fits over a sweep CSV.
    Fit,
    /// Redraws plots from the reports in the output directory.
    Plot,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.optimizer.seed = seed;
        cfg.sweep.seeds = vec![seed];
    }
    if cli.resume.is_some() && cli.command != Command::Optimize {
        return Err(CliError::Config(
            "--resume only applies to `optimize`".into(),
        ));
    }
    let ctx = commands::Context {
        out: cli.out.clone(),
        resume: cli.resume.clone(),
    };
    let dispatch = || match cli.command {
        Command::Analyze => commands::analyze(&cfg, &ctx).map(|_| ()),
        Command::Optimize => commands::optimize(&cfg, &ctx).map(|_| ()),
        Command::Sweep => commands::sweep(&cfg, &ctx).map(|_| ()),
        Command::Quench => commands::quench(&cfg, &ctx).map(|_| ()),
        Command::Fit => commands::fit(&cfg, &ctx).map(|_| ()),
        Command::Plot => commands::plot(&ctx),
    };
    match cli.threads {
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        Some(n) => {
            info!("using {n} worker threads");
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            pool.install(dispatch)
        }
        None => dispatch(),
    }
}
