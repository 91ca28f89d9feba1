//! Batch front end for the planning pipeline.
//!
//! Every subcommand writes its tables and a `manifest.json` under `--out`.
//! Outputs hold no timestamps, so identical inputs and seed reproduce them
//! byte for byte.

pub mod cache;
mod commands;
pub mod output;
pub mod sweep;

use std::ffi::OsString;
use std::path::PathBuf;

use aerocourier::scenario::ScenarioError;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use sweep::{SweepAxis, SweepCase};

/// Exit code of a malformed command line.
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Parse(_) | ScenarioError::Validation(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "aerocourier", version, about = "Courier and drone delivery network planning")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for sampling, training, simulation and the solver.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

/// Where the scenario comes from.
#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Scenario document.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Warn about unknown keys instead of rejecting them.
    #[arg(long)]
    pub lenient: bool,
}

/// Surrogate training and caching.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Surrogate cache directory.
    #[arg(long, default_value = "models")]
    pub models: PathBuf,
    /// Grid points sampled per OD.
    #[arg(long, default_value_t = 45_000)]
    pub points: usize,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 12)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

/// MILP solver settings.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Solver backend; defaults to the AEROCOURIER_BACKEND variable, then HiGHS.
    #[arg(long)]
    pub backend: Option<String>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Relative optimality gap.
    #[arg(long, default_value_t = 1e-7)]
    pub mip_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    /// Order bundling on each OD pair.
    Bundling,
    /// Launchpad double-ended queue.
    Queue,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario document.
    Validate {
        /// Scenario document (alternative to --scenario).
        path: Option<PathBuf>,
        #[arg(long, conflicts_with = "path")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        lenient: bool,
    },
    /// Closed-form bundling equilibrium of every demand OD.
    Equilibrium {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Ground flow for every OD; defaults to each OD's demand.
        #[arg(long)]
        lambda: Option<f64>,
        /// Idle couriers; defaults to the middle of the scenario's idle range.
        #[arg(long)]
        idle: Option<f64>,
    },
    /// Compare simulators against the closed forms.
    Simulate {
        #[arg(long, value_enum)]
        kind: SimKind,
        /// Needed for bundling; supplies queue capacity and reliability grid.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        lenient: bool,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        idle: Option<f64>,
        /// Orders per bundling point.
        #[arg(long, default_value_t = 200_000)]
        orders: u64,
        /// Comma-separated reliability levels for the queue.
        #[arg(long, value_delimiter = ',')]
        gamma: Vec<f64>,
        /// Order-side queue capacity.
        #[arg(long)]
        capacity: Option<u32>,
        /// Events per queue point.
        #[arg(long, default_value_t = 1_000_000)]
        events: u64,
    },
    /// Train (or load cached) surrogates and report their accuracy.
    Train {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        models: ModelArgs,
        /// Stretch the sampled flow range by this factor.
        #[arg(long, default_value_t = 1.0)]
        lambda_scale: f64,
    },
    /// Build and solve the planning model.
    Plan {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        models: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Also write the model in LP format.
        #[arg(long)]
        export_lp: bool,
    },
    /// Solve a series of cost or demand cases.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        models: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// A case count, or a comma list of multipliers and `launchpad:kiosk` cost pairs.
        #[arg(long, default_value = "5")]
        cases: String,
    },
    /// Re-evaluate a solved plan with the exact formulas.
    Report {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Plan document written by `plan`.
        #[arg(long)]
        plan: PathBuf,
        /// Largest accepted gap between recomputed and solver objectives.
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

/// Runs the tool on `args` (program name first) and returns its exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    // A second call inside one process (tests) keeps the first logger.
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("usage: aerocourier <validate|equilibrium|simulate|train|plan|sweep|report> [OPTIONS]");
            }
            e.exit_code()
        }
    }
}
