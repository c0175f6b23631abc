//! Command-line driver for the parareal experiments.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use parareal_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Numerical(Error),
    /// A run stopped at the iteration cap or on a failed propagation. The
    /// outputs were still written.
    #[error("{0}")]
    NotConverged(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } | Error::ChartMismatch(_) | Error::ChartFormat { .. } => {
                CliError::Config(e.to_string())
            }
            Error::Io(m) => CliError::Io(m),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    /// Process exit code: 1 for configuration and I/O problems, 2 for
    /// numerical failure or divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) | CliError::NotConverged(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmChoice {
    Classical,
    Adaptive,
    Both,
}

impl AlgorithmChoice {
    pub fn classical(self) -> bool {
        self != AlgorithmChoice::Adaptive
    }

    pub fn adaptive(self) -> bool {
        self != AlgorithmChoice::Classical
    }
}

#[derive(Debug, Parser)]
#[command(name = "parareal", version, about = "Classical and adaptive parareal experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run the fine stages sequentially.
    #[arg(long)]
    pub serial: bool,
    #[arg(long, value_enum, default_value_t = AlgorithmChoice::Both)]
    pub algorithm: AlgorithmChoice,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build accuracy charts for the coarse and fine solvers.
    Calibrate(CommonArgs),
    /// Run parareal once and write the iteration histories.
    Run(CommonArgs),
    /// Speedup table over the configured interval counts and targets.
    Sweep(CommonArgs),
    /// Compare the observed errors with the convergence bounds.
    Bounds(CommonArgs),
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Run(a) => commands::run(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Bounds(a) => commands::bounds(a),
    }
}
