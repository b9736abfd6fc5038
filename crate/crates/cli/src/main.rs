use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::Triple;

/// Scattered-data interpolation with stochastic local interaction models.
#[derive(Parser, Debug)]
#[command(name = "sli", version, about)]
pub struct Cli {
    /// Flat `key = value` file; flags take precedence over its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// triangular | tricube | quadratic | gaussian | exponential
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// Neighbour order for the adaptive bandwidth.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Output file, or directory for `simulate`. `-` writes to stdout where
    /// the command produces a single CSV.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate train/validation CSVs plus a metadata sidecar.
    Simulate(SimulateArgs),
    /// Fit (α1, α2, μ) by leave-one-out cross validation and write a model card.
    Fit(FitArgs),
    /// Predict at query points or on a regular grid.
    Predict(PredictArgs),
    /// Score a model on a validation set.
    Validate(ValidateArgs),
    /// Refit with each sample removed in turn.
    Stability(StabilityArgs),
    /// Check λ* and the likelihood stationarity on a small data set.
    NllCheck(NllArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// matern | testfn
    #[arg(long)]
    pub kind: Option<String>,
    /// Matérn series length.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Training-set size.
    #[arg(long)]
    pub train: Option<usize>,
    /// Validation-set size (Matérn default: the rest of the series).
    #[arg(long)]
    pub valid: Option<usize>,
    /// Noise standard deviation as a fraction of the largest training value.
    #[arg(long, conflicts_with = "noise_abs")]
    pub noise: Option<f64>,
    /// Absolute noise standard deviation.
    #[arg(long)]
    pub noise_abs: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct OptimizerArgs {
    /// Initial (α1, α2, μ), comma separated.
    #[arg(long)]
    pub init: Option<Triple>,
    #[arg(long)]
    pub lower: Option<Triple>,
    #[arg(long)]
    pub upper: Option<Triple>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Random starts added to the initial point.
    #[arg(long)]
    pub multistart: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Training CSV (c1..cd,value).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Also write leave-one-out `predicted,observed` pairs here.
    #[arg(long)]
    pub loo: Option<PathBuf>,
    #[command(flatten)]
    pub opt: OptimizerArgs,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Training CSV the model was fitted on.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Query CSV (c1..cd, optional trailing value column).
    #[arg(long, conflicts_with = "grid")]
    pub query: Option<PathBuf>,
    /// Nodes per side of a grid over the training bounding box.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Validation CSV.
    #[arg(long)]
    pub valid: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StabilityArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Refuse data sets larger than this.
    #[arg(long)]
    pub max_n: Option<usize>,
    #[command(flatten)]
    pub opt: OptimizerArgs,
}

#[derive(Args, Debug)]
pub struct NllArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub max_n: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
