//! Command-line driver: data generation, training, evaluation, rollout
//! export, radius analysis and gradient checks.

pub mod commands;
pub mod run_config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use run_config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(tante::Error),
    #[error("{0}")]
    Failed(String),
}

impl From<tante::Error> for CliError {
    fn from(e: tante::Error) -> Self {
        match e {
            tante::Error::Config(msg) => CliError::Usage(msg),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tante", version, about = "Time-adaptive transformer operator with a neural Taylor expansion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (manifest.json + one binary file per trajectory).
    GenerateData(GenerateArgs),
    /// Train a model; writes config.txt, checkpoints/ and metrics/loss.csv under the run directory.
    Train(TrainArgs),
    /// Score rollouts of length 4 and 8 (or --steps) and write metric reports.
    Evaluate(EvalArgs),
    /// Export one rollout trace (CSV) and its predicted frames (f32 little-endian).
    Rollout(RolloutArgs),
    /// Summarize initial radii per regime and test adjacent regimes with Mann-Whitney U.
    AnalyzeRadius(AnalyzeArgs),
    /// Compare backprop gradients with central differences, layer by layer.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Generator {
    Heat2d,
    Advection2d,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "heat2d")]
    pub generator: Generator,
    #[arg(long, default_value_t = 200)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 24)]
    pub frames: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Largest wavenumber per axis in the random initial field.
    #[arg(long, default_value_t = 4)]
    pub modes: usize,
    /// Physical time between frames.
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    /// Diffusivity (heat2d).
    #[arg(long, default_value_t = 0.01)]
    pub kappa: f64,
    /// Labelled diffusivities, e.g. `slow=0.002,fast=0.05`; trajectories are split evenly (heat2d).
    #[arg(long, value_delimiter = ',')]
    pub regimes: Vec<String>,
    /// Velocity `cx,cy` in domain lengths per time unit (advection2d).
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [1.0, 0.5])]
    pub velocity: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run directory, conventionally `runs/<name>`.
    #[arg(long)]
    pub run: PathBuf,
    /// Checkpoint stem (without extension); defaults to the latest in the run.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory; defaults to `data_dir` from the run's config.txt.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run directory, conventionally `runs/<name>`.
    #[arg(long)]
    pub run: PathBuf,
    /// Dataset directory (same as `data_dir=`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print progress every this many steps (0 = quiet).
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
    /// Config overrides, applied after the file.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8])]
    pub steps: Vec<usize>,
    /// `adaptive`, `fixed`, or `auto` (adaptive when the model has a radius head).
    #[arg(long, default_value = "auto")]
    pub mode: String,
    /// Frames between consecutive evaluation windows.
    #[arg(long, default_value_t = 4)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Index into the split's windows.
    #[arg(long, default_value_t = 0)]
    pub window: usize,
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    /// `adaptive`, `fixed`, or `auto`.
    #[arg(long, default_value = "auto")]
    pub mode: String,
    #[arg(long, default_value_t = 4)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 4)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Skip the whole-model check.
    #[arg(long)]
    pub layers_only: bool,
    /// Entries checked per model parameter tensor (0 = all).
    #[arg(long, default_value_t = 1024)]
    pub max_entries: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenerateData(a) => commands::generate_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Rollout(a) => commands::rollout(&a),
        Command::AnalyzeRadius(a) => commands::analyze_radius(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    }
}
