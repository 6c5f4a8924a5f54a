use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

mod config;
mod output;
mod run;

use config::ExperimentConfig;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config error: {0}")]
    Core(#[from] fdss_se::Error),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("output error: {0}")]
    Io(String),
}

impl CliError {
    fn numeric(e: fdss_se::Error) -> Self {
        CliError::Numeric(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}

/// Reproducible FDSS and spectrum-extension experiments.
#[derive(Debug, Parser)]
#[command(name = "fdss-se", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment description (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured number of Monte Carlo trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, Subcommand)]
enum Command {
    /// PAPR or cubic-metric CCDF, optionally swept over ne, L or ripple.
    PaprCcdf,
    /// Analytical PAPR bounds over a sweep or the optimizer grid.
    BoundSweep,
    /// PAPR- and rate-optimal SE sizes.
    SeOpt,
    /// Achievable rate against SE size and SNR.
    RateSweep,
    /// Simulated and predicted QPSK bit error rate.
    Ber,
    /// Window coefficients and ripple.
    WindowDump,
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.monte_carlo.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.monte_carlo.trials = trials;
    }
    cfg.validate()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let outputs = match cli.command {
        Command::PaprCcdf => run::papr_ccdf(&cfg)?,
        Command::BoundSweep => run::bound_sweep(&cfg)?,
        Command::SeOpt => run::se_opt(&cfg)?,
        Command::RateSweep => run::rate_sweep(&cfg)?,
        Command::Ber => run::ber(&cfg)?,
        Command::WindowDump => run::window_dump(&cfg)?,
    };
    outputs.write(&cli.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            eprintln!("fdss-se: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
