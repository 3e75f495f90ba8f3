//! The `mpmf` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data/model
//! mismatch, 4 solver failure.

mod commands;
pub mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

pub use output::ModelFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "mpmf",
    version,
    about = "Minimax probability machines for non-decomposable measures"
)]
pub struct Cli {
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a classifier and write model.json and trace.csv.
    Train(TrainArgs),
    /// Score a data file with a saved model.
    Predict(PredictArgs),
    /// Report every measure of a model on test data.
    Evaluate(EvaluateArgs),
    /// Solve the synthetic benchmark for all class proportions and betas.
    ReproduceSynthetic(SyntheticArgs),
    /// Time training per measure and dataset.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Training data (LIBSVM, or CSV when the name ends in .csv).
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Label that becomes the positive class.
    #[arg(long, allow_hyphen_values = true)]
    pub positive_label: Option<i64>,
    /// Label column of CSV inputs.
    #[arg(long, default_value_t = 0)]
    pub label_column: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// ar, am, qm, f1, f2, fbeta[:<beta>], hm, gm, gtppr or jac.
    #[arg(long, default_value = "f1")]
    pub measure: String,
    /// Beta of the F measure; applies to `fbeta` and the evaluation table.
    #[arg(long)]
    pub beta: Option<f64>,
    /// linear, rbf[:<gamma>] or poly:<degree>[:<coef0>]. Omit for the primal linear model.
    #[arg(long)]
    pub kernel: Option<String>,
    /// RBF width; defaults to the median heuristic.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Support points per class for kernels; 0 keeps all.
    #[arg(long, default_value_t = 200)]
    pub subsample: usize,
    /// Diagonal ridge added to the kernel quadratic forms.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Uniform rate-grid size.
    #[arg(long, conflicts_with = "grid_step")]
    pub grid_points: Option<usize>,
    /// Fixed rate-grid spacing from the lower endpoint.
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub max_rounds: usize,
    /// Relative diagonal jitter added to estimated covariances.
    #[arg(long, default_value_t = 1e-8)]
    pub jitter: f64,
    /// Train the accuracy-rate baseline instead.
    #[arg(long, value_parser = ["mpm"])]
    pub baseline: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Class moments as JSON, replacing --data.
    #[arg(long, value_name = "PATH", conflicts_with = "data")]
    pub moments: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub label_column: usize,
    /// Output CSV file.
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Saved model; otherwise a model is trained from --data.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: ModelArgs,
    /// Test data.
    #[arg(long, value_name = "PATH")]
    pub test: PathBuf,
    /// Train and evaluate one model per class of --data.
    #[arg(long, conflicts_with = "model")]
    pub one_vs_all: bool,
    /// Hold out this fraction of --data to tune the threshold.
    #[arg(long, value_name = "FRACTION")]
    pub tune_bias: Option<f64>,
    /// Output JSON file.
    #[arg(long, default_value = "metrics.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SyntheticArgs {
    #[arg(long, default_value = "synthetic_table.csv")]
    pub out: PathBuf,
    /// Rate-grid spacing.
    #[arg(long, default_value_t = crate::synthetic::TABLE_GRID_STEP, conflicts_with = "grid_points")]
    pub grid_step: f64,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub max_rounds: usize,
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Datasets, comma separated or repeated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub positive_label: Option<i64>,
    #[arg(long, default_value_t = 0)]
    pub label_column: usize,
    /// Measures, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "am,f1")]
    pub measures: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub max_rounds: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub jitter: f64,
    #[arg(long, default_value = "bench.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub pretty: bool,
}

/// Process exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Io(_) => EXIT_USAGE,
        Error::Parse { .. }
        | Error::DimensionMismatch { .. }
        | Error::DegenerateData(_)
        | Error::Json(_) => EXIT_DATA,
        Error::NotPositiveSemidefinite(_)
        | Error::ObjectiveDiverges(_)
        | Error::NonPositiveMeanGap(_)
        | Error::VanishingForm(_)
        | Error::NoSolution
        | Error::Solver(_) => EXIT_SOLVER,
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("MPMF_LOG", "warn");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match config::merge_config_args(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::ReproduceSynthetic(a) => commands::reproduce_synthetic(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
