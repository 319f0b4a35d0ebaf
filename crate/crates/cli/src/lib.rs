//! Command-line front end: one experiment per invocation.
//!
//! Exit codes: 0 success, 1 hard-check failure, 2 configuration error,
//! 3 resource exhaustion.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("resource exhausted: {0}")]
    Resource(String),
    #[error("hard check failed: {0}")]
    HardFailure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::HardFailure(_) => 1,
            CliError::Config { .. } => 2,
            CliError::Resource(_) => 3,
        }
    }

    /// Attaches a config key to a library error.
    pub fn at(key: &str, e: mdim::Error) -> Self {
        match e {
            mdim::Error::Resource(m) => {
                CliError::Resource(format!("{m} (while evaluating `{key}`)"))
            }
            mdim::Error::Consistency(m) => CliError::HardFailure(m),
            other => CliError::Config {
                key: key.into(),
                message: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mdim",
    version,
    about = "Mean dimension experiments on finite surrogates of G-systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Base seed; overrides `experiment.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Solver mode; overrides `experiment.mode`.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<config::ModeName>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Metric mean dimension (and optionally mean Hausdorff and Katok) estimates.
    Estimate,
    /// Executable finite-scale checks.
    Verify,
    /// Estimates under a sweep of metric transforms.
    ScanMetrics,
    /// Factor estimates against the product estimate.
    Product,
    /// Box dimension of the alphabet.
    Minkowski,
}

/// Resolved run settings after flags override the config.
pub struct Run {
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

fn resolve(cli: &Cli) -> Result<Run, CliError> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if matches!(cli.command, Command::Verify) => ExperimentConfig::default(),
        None => {
            return Err(CliError::Config {
                key: "--config".into(),
                message: "required for this subcommand".into(),
            })
        }
    };
    if let Some(s) = cli.seed {
        config.experiment.seed = s;
    }
    if let Some(m) = cli.mode {
        config.experiment.mode = m;
    }
    if let Some(w) = cli.workers {
        config.experiment.workers = w;
    }
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    Ok(Run { config, out })
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let run = resolve(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.config.experiment.workers)
        .build()
        .map_err(|e| CliError::Config {
            key: "experiment.workers".into(),
            message: e.to_string(),
        })?;
    pool.install(|| match cli.command {
        Command::Estimate => commands::estimate(&run),
        Command::Verify => commands::verify(&run),
        Command::ScanMetrics => commands::scan_metrics(&run),
        Command::Product => commands::product(&run),
        Command::Minkowski => commands::minkowski(&run),
    })
}

/// Parses arguments, runs, prints errors, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
