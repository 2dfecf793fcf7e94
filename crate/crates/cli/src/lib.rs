//! Command-line driver for the `selfrep` solver.
//!
//! Every command reads a TOML config (see `configs/` and the README), builds
//! a scenario, runs one operation of `selfrep-core` and writes its results to
//! `<out>/<scenario>/<tag or UTC timestamp>/`. Exit status is 0 on success,
//! 2 for configuration or validation failures and 3 for runtime failures.

mod commands;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use selfrep_core::Error;

pub use output::RunDir;

#[derive(Debug, Parser)]
#[command(
    name = "selfrep",
    version,
    about = "Nonlinear elasticity with vanishing self-repulsion"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

/// Flags shared by every command.
#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Builtin scenario name or path to a mesh file.
    #[arg(long, global = true, default_value = "identity")]
    pub scenario: String,
    /// Root of the output tree.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Run directory name; defaults to a UTC timestamp.
    #[arg(long, global = true)]
    pub tag: Option<String>,
    /// Raster cells per axis for the defect meter.
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    /// Mesh cells per unit length for builtin scenarios.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Seed for random perturbations.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the exponents of a config against the admissible regime.
    ValidateParams,
    /// Energy breakdown and defect report of the scenario's initial field.
    Evaluate {
        /// Also dump the multiplicity raster as PGM.
        #[arg(long)]
        pgm: bool,
    },
    /// Minimize the penalized energy from the scenario's initial field.
    Minimize {
        /// Uniform random offset applied to interior vertices first.
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
    },
    /// Minimize along the configured ε schedule with warm starts.
    GammaSweep,
    /// Defect meter only.
    CncCheck,
    /// Time repulsion evaluations on refined squares and fit the slope.
    BenchScaling {
        /// Mesh sizes; defaults to `experiment.bench_sizes`.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
}

/// Failure classes with their exit statuses.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        use selfrep_core::{CncError, OptimizeError};
        match &e {
            Error::Config(_) | Error::Mesh(_) => CliError::Config(e.to_string()),
            Error::Cnc(CncError::Resolution(_)) => CliError::Config(e.to_string()),
            Error::Optimize(OptimizeError::InvalidParams(_) | OptimizeError::Schedule) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

macro_rules! impl_from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}
impl_from_core!(
    selfrep_core::ConfigError,
    selfrep_core::MeshError,
    selfrep_core::EnergyError,
    selfrep_core::CncError,
    selfrep_core::OptimizeError
);

/// Runs one command, on a dedicated pool when `--workers` is given.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.common.workers {
        Some(0) => Err(CliError::Config("--workers must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(|| commands::dispatch(&cli.command, &cli.common)),
        None => commands::dispatch(&cli.command, &cli.common),
    }
}
