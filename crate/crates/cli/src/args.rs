use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "qvar",
    version,
    about = "Estimate the variogram scale of a Gaussian process from quadratic a-variations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Every variant except `replay` is echoed into the run manifest and can be
/// re-run from it.
#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum Command {
    /// Draw exact sample paths (N x n matrix CSV, or a path CSV when N = 1 and --format path)
    Simulate(SimulateArgs),
    /// Estimate C from a path CSV
    Estimate(EstimateArgs),
    /// Normalized asymptotic variance of one sequence
    Vtilde(VtildeArgs),
    /// Asymptotic covariance matrix and optimal weights for a set of sequences
    Aggregate(AggregateArgs),
    /// Fisher information and Cramér–Rao bound for C
    Fisher(FisherArgs),
    /// Monte Carlo study (histogram or drift-robustness) from a JSON config
    McStudy(StudyArgs),
    /// Asymptotic variance curves (variance-curve or aggregation-curve) from a JSON config
    CurveStudy(CurveArgs),
    /// Simulate a separable exponential field on a grid
    Simulate2d(Simulate2dArgs),
    /// Four-step separable estimation on a grid CSV
    Estimate2d(Estimate2dArgs),
    /// Re-run the command recorded in a manifest
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Output {
    /// Output file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest file (default: <out>.manifest.json; stderr without --out)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimFormat {
    Matrix,
    Path,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Model descriptor, e.g. '{"model":"exp","C":3}'
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub n: usize,
    /// Grid step delta = n^-alpha
    #[arg(long, conflicts_with = "delta")]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of replicates
    #[arg(long = "N", default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Drift descriptor, e.g. '{"poly":[0,1]}'
    #[arg(long)]
    pub drift: Option<String>,
    #[arg(long, value_enum, default_value_t = SimFormat::Matrix)]
    pub format: SimFormat,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    /// Path CSV with header index,t,x
    #[arg(long)]
    pub path: PathBuf,
    /// Preset names separated by commas, or coefficient lists separated by ';'
    #[arg(long, visible_alias = "sequence", default_value = "elem1")]
    pub sequences: String,
    #[arg(long = "D", visible_alias = "d", default_value_t = 0)]
    pub d: usize,
    #[arg(long)]
    pub s: f64,
    /// Combine all sequences with the optimal weights
    #[arg(long)]
    pub aggregate: bool,
    /// paper-n (default) or unbiased-nprime
    #[arg(long, default_value = "paper-n")]
    pub denominator: String,
    /// Confidence level of the reported interval
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct VtildeArgs {
    #[arg(long)]
    pub sequence: String,
    #[arg(long = "D", visible_alias = "d", default_value_t = 0)]
    pub d: usize,
    #[arg(long)]
    pub s: f64,
    /// Print a JSON object instead of the bare value
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AggregateArgs {
    #[arg(long)]
    pub sequences: String,
    #[arg(long = "D", visible_alias = "d", default_value_t = 0)]
    pub d: usize,
    #[arg(long)]
    pub s: f64,
    /// Fail on a singular matrix instead of zero-weighting dependent sequences
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FisherArgs {
    /// fbm or slepian
    #[arg(long)]
    pub family: String,
    #[arg(long = "D", visible_alias = "d", default_value_t = 0)]
    pub d: usize,
    #[arg(long)]
    pub s: f64,
    #[arg(long = "C")]
    pub c: f64,
    #[arg(long)]
    pub n: usize,
    /// Grid step (default 1/n)
    #[arg(long)]
    pub delta: Option<f64>,
    /// Also report the efficiency 2/vtilde of this sequence
    #[arg(long)]
    pub sequence: Option<String>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct StudyArgs {
    /// Study JSON ({"study": "histogram" | "drift-robustness", ...})
    #[arg(long)]
    pub config: PathBuf,
    /// Use the full replicate count (10000) instead of the desk default
    #[arg(long)]
    pub full: bool,
    #[arg(long, conflicts_with = "full")]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CurveArgs {
    /// Study JSON ({"study": "variance-curve" | "aggregation-curve", ...});
    /// without it a variance curve of --sequences is computed
    #[arg(long, conflicts_with = "sequences")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sequences: Option<String>,
    #[arg(long = "D", visible_alias = "d", default_value_t = 0)]
    pub d: usize,
    #[arg(long, default_value_t = 0.1)]
    pub s_from: f64,
    #[arg(long, default_value_t = 1.9)]
    pub s_to: f64,
    #[arg(long, default_value_t = 0.1)]
    pub s_step: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Simulate2dArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long)]
    pub theta1: f64,
    #[arg(long)]
    pub theta2: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 16)]
    pub nx: usize,
    #[arg(long, default_value_t = 16)]
    pub ny: usize,
    /// Step along x (default 1/15)
    #[arg(long)]
    pub step_x: Option<f64>,
    /// Step along y (default 1/15)
    #[arg(long)]
    pub step_y: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stream index within the seed
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Estimate2dArgs {
    /// Headerless grid CSV, one grid row (line along x) per record
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub step_x: f64,
    #[arg(long)]
    pub step_y: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by a previous run
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write the primary output here instead of the recorded path
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn output_mut(&mut self) -> Option<&mut Output> {
        match self {
            Command::Simulate(a) => Some(&mut a.output),
            Command::Estimate(a) => Some(&mut a.output),
            Command::Vtilde(a) => Some(&mut a.output),
            Command::Aggregate(a) => Some(&mut a.output),
            Command::Fisher(a) => Some(&mut a.output),
            Command::McStudy(a) => Some(&mut a.output),
            Command::CurveStudy(a) => Some(&mut a.output),
            Command::Simulate2d(a) => Some(&mut a.output),
            Command::Estimate2d(a) => Some(&mut a.output),
            Command::Replay(_) => None,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Simulate(a) => Some(a.seed),
            Command::McStudy(a) => a.seed,
            Command::Simulate2d(a) => Some(a.seed),
            _ => None,
        }
    }
}
