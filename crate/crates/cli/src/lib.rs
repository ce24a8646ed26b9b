//! Command-line front end for the spectral uncertainty toolkit: builds and
//! serializes models, propagates beliefs to per-epoch central moments, runs
//! the spectral filter over real or simulated observations, and compares
//! filter methods over seeded Monte Carlo batches. Every command writes its
//! outputs plus a manifest pinning the run's inputs into one directory.

mod bench;
mod commands;
mod output;

pub use bench::{load_bench, Bench, LINEAR_TEST};
pub use output::{csv_banner, RunManifest, CSV_VERSION, OUT_DIR_VAR};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use koopman_core::crtbp::CrtbpError;
use koopman_core::kof::KofError;
use koopman_core::koopman::KoopmanError;
use koopman_core::moments::MomentError;
use koopman_core::poly::PolyError;
use koopman_core::reference::ReferenceError;
use koopman_core::scenario::ScenarioError;
use std::ffi::OsString;
use std::path::PathBuf;

/// A command failure with its exit status attached: usage and input
/// problems exit 1, numerical failures exit 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Invalid(_)
            | ScenarioError::UnknownPreset { .. }
            | ScenarioError::Toml(_)
            | ScenarioError::Json(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

macro_rules! numeric_error {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Numeric(e.to_string())
            }
        }
    )*};
}
numeric_error!(KofError, KoopmanError, MomentError, PolyError, CrtbpError, ReferenceError);

#[derive(Parser)]
#[command(
    name = "koopman",
    version,
    about = "Spectral uncertainty propagation and filtering for libration-point orbits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the spectral model for a scenario and write it as JSON.
    Build(BuildArgs),
    /// Propagate the initial belief and write per-epoch central moments.
    Propagate(PropagateArgs),
    /// Run the spectral filter over an observation file or a simulated run.
    Filter(FilterArgs),
    /// Compare filter methods over a seeded Monte Carlo batch.
    Compare(CompareArgs),
}

#[derive(Args)]
pub(crate) struct CommonArgs {
    /// Scenario: a preset name, `linear-test`, or a TOML/JSON file.
    #[arg(long)]
    pub(crate) scenario: String,
    /// Total polynomial degree of the observable basis.
    #[arg(long, default_value_t = 3)]
    pub(crate) max_degree: u32,
    /// Override the scenario's gravity expansion order.
    #[arg(long)]
    pub(crate) order_n: Option<u32>,
    /// Output directory; defaults to $KOOPMAN_OUT_DIR, then the working directory.
    #[arg(long)]
    pub(crate) out: Option<PathBuf>,
}

#[derive(Args)]
pub(crate) struct BuildArgs {
    #[command(flatten)]
    pub(crate) common: CommonArgs,
}

#[derive(Args)]
pub(crate) struct PropagateArgs {
    #[command(flatten)]
    pub(crate) common: CommonArgs,
    /// Load the model from a build artifact instead of rebuilding it.
    #[arg(long)]
    pub(crate) model: Option<PathBuf>,
    /// Highest central-moment order to track (2-4).
    #[arg(long, default_value_t = 4)]
    pub(crate) psi: u32,
}

#[derive(Args)]
pub(crate) struct FilterArgs {
    #[command(flatten)]
    pub(crate) common: CommonArgs,
    /// Load the model from a build artifact instead of rebuilding it.
    #[arg(long)]
    pub(crate) model: Option<PathBuf>,
    /// Moment order used inside the filter (2-4).
    #[arg(long, default_value_t = 2)]
    pub(crate) psi: u32,
    /// Seed for the simulated truth and measurement noise.
    #[arg(long, default_value_t = 0)]
    pub(crate) seed: u64,
    /// Observation CSV (`t,y1..yq`); required unless --simulate is given.
    #[arg(long)]
    pub(crate) obs: Option<PathBuf>,
    /// Simulate the truth and observations from the seed, writing both.
    #[arg(long)]
    pub(crate) simulate: bool,
    /// Scale on the simulated measurement noise; 0 turns it off.
    #[arg(long, default_value_t = 1.0)]
    pub(crate) noise_scale: f64,
}

#[derive(Args)]
pub(crate) struct CompareArgs {
    #[command(flatten)]
    pub(crate) common: CommonArgs,
    /// Load the model from a build artifact instead of rebuilding it.
    #[arg(long)]
    pub(crate) model: Option<PathBuf>,
    /// Moment order used inside the spectral filter (2-4).
    #[arg(long, default_value_t = 2)]
    pub(crate) psi: u32,
    /// Monte Carlo sample count per method.
    #[arg(long, default_value_t = 50)]
    pub(crate) runs: usize,
    /// Seed shared by every method's batch.
    #[arg(long, default_value_t = 0)]
    pub(crate) seed: u64,
    /// Comma-separated subset of kof,ekf,ikf,ukf.
    #[arg(long, default_value = "kof,ekf,ikf,ukf")]
    pub(crate) methods: String,
}

/// Parses and runs a full command line (including the program name) and
/// returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Build(args) => commands::cmd_build(args),
        Command::Propagate(args) => commands::cmd_propagate(args),
        Command::Filter(args) => commands::cmd_filter(args),
        Command::Compare(args) => commands::cmd_compare(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}
