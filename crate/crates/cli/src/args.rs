use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Isotonic inverse estimation and posterior sampling for one-sided
/// deconvolution.
#[derive(Debug, Parser)]
#[command(name = "isodecon", version, propagate_version = true)]
pub struct Cli {
    /// Master seed. Overrides the seed in a config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, env = "ISODECON_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the resolvent p of a noise kernel.
    Resolvent(ResolventArgs),
    /// Isotonic inverse estimate of the signal CDF.
    Iie(IieArgs),
    /// Isotonized posterior draws of the signal CDF.
    Iip(IipArgs),
    /// Pointwise credible intervals from a set of posterior draws.
    Interval(IntervalArgs),
    /// Monte Carlo table of the Bayes-Chernoff quantile function.
    Calibrate(CalibrateArgs),
    /// Coverage study of calibrated credible intervals.
    Coverage(CoverageArgs),
    /// Data files for prior/posterior draw figures, one CSV per kernel.
    Figures(FiguresArgs),
    /// Simulate observations from a scenario.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ResolventArgs {
    /// Kernel spec, e.g. `exp:rate=1`, `lomax:c=10,lambda=1` or `file:k.csv`.
    #[arg(long)]
    pub kernel: String,
    /// Horizon T.
    #[arg(long = "T", default_value_t = 10.0)]
    pub horizon: f64,
    /// Grid points N; step T/(N-1). Defaults to a step of at most 0.001.
    #[arg(long = "N")]
    pub points: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Add a renewal-series Monte Carlo column.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 100_000)]
    pub oracle_paths: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// Observations, one per line; header optional.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub kernel: String,
    /// Resolvent horizon. Defaults to 1.1 times the largest observation.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Resolvent grid points.
    #[arg(long = "N")]
    pub points: Option<usize>,
    /// Evaluation grid points.
    #[arg(long, default_value_t = 401)]
    pub grid: usize,
    /// Precomputed resolvent CSV from `isodecon resolvent`.
    #[arg(long)]
    pub resolvent: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct IieArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IipArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Number of posterior draws B.
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    /// Dirichlet-process precision M.
    #[arg(long, default_value_t = 10.0)]
    pub precision: f64,
    /// Shape of the gamma base measure.
    #[arg(long, default_value_t = 2.0)]
    pub base_shape: f64,
    /// Rate of the gamma base measure.
    #[arg(long, default_value_t = 2.0)]
    pub base_rate: f64,
    /// Output prefix: writes PREFIX.draws.csv, PREFIX.mean.csv, PREFIX.meta.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IntervalArgs {
    /// Prefix given to `isodecon iip --out`.
    #[arg(long)]
    pub draws: PathBuf,
    /// Calibration table; without it the interval uses tau = beta.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    /// Points to evaluate; all grid points when omitted.
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    /// Inner paths per sample.
    #[arg(long, default_value_t = 1000)]
    pub inner: usize,
    #[arg(long, default_value_t = 4.0)]
    pub half_width: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CoverageArgs {
    /// Scenario JSON; defaults apply to omitted fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FiguresArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Calibration table for recalibrated bands.
    #[arg(long)]
    pub calib: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sample size; overrides the config.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}
