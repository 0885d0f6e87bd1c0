//! Command-line front end: argument parsing, config loading, dispatch to the
//! simulator and the artifact writers.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use output::Manifest;

/// Exit status for a successful run.
pub const EXIT_OK: u8 = 0;
/// Any failed validation case.
pub const EXIT_VALIDATION: u8 = 1;
/// Invalid config, malformed data or unusable input values.
pub const EXIT_INPUT: u8 = 2;
/// The numerics broke down (non-finite values, lost unitarity).
pub const EXIT_NUMERIC: u8 = 3;
/// The fit did not converge; its result is still written.
pub const EXIT_NOT_CONVERGED: u8 = 4;
/// Output could not be written.
pub const EXIT_IO: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "mpa", version, about = "Multi-photon absorption in driven few-level ladders")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.directory` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for scans (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Seed for synthetic data and randomized validation samples.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time-averaged absorption spectrum of a monochromatic drive.
    Spectrum,
    /// Branch-tracked quasienergies over the scan grid.
    Quasienergies,
    /// Target-level population after a Gaussian pulse, versus centre energy.
    PulseScan,
    /// Target-level population versus drive scale at one photon energy.
    PowerScan,
    /// Fit a power law, Malus law or convolved exponential decay to CSV data.
    Fit {
        /// Two- or three-column CSV; overrides `fit.input`.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        /// power, malus or emg; overrides `fit.model`.
        #[arg(long)]
        model: Option<String>,
        /// Hold the instrument-response width fixed (emg only).
        #[arg(long, value_name = "PS")]
        fixed_sigma_ps: Option<f64>,
    },
    /// Generate a synthetic data set with known parameters.
    Synth,
    /// Run the end-to-end validation cases and write a JSON report.
    Validate {
        /// Comma-separated case numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        cases: Option<Vec<u32>>,
        /// Multiply every coupling before running.
        #[arg(long, default_value_t = 1.0)]
        coupling_scale: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::Quasienergies => "quasienergies",
            Self::PulseScan => "pulse-scan",
            Self::PowerScan => "power-scan",
            Self::Fit { .. } => "fit",
            Self::Synth => "synth",
            Self::Validate { .. } => "validate",
        }
    }
}

/// An error together with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self { code, error: error.into() }
    }

    pub fn input(msg: impl std::fmt::Display) -> Self {
        Self::new(EXIT_INPUT, anyhow::anyhow!("{msg}"))
    }
}

impl From<mpa_core::Error> for Failure {
    fn from(e: mpa_core::Error) -> Self {
        use mpa_core::Error as E;
        let code = match &e {
            E::Config(_) | E::Data(_) | E::Domain(_) | E::Precondition(_) | E::Json(_) => EXIT_INPUT,
            E::Numeric(_) | E::StepSize { .. } => EXIT_NUMERIC,
            E::Io(_) => EXIT_IO,
        };
        Self::new(code, e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_IO, e)
    }
}

/// Parse-free entry point; returns the process exit status.
pub fn run(cli: Cli) -> u8 {
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

pub fn main_exit() -> ExitCode {
    ExitCode::from(run(Cli::parse()))
}
