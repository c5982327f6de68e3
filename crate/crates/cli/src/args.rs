use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lipbound::bounds::ConvMethod;
use lipbound::empirical::BatchMode;
use lipbound::network::Stop;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "lipbound", version, about = "Trivial, external and empirical Lipschitz bounds for small networks")]
pub struct Cli {
    /// Worker threads for parallel sections; 1 gives fully sequential runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a classifier and write it as a model file.
    Train(TrainArgs),
    /// Product of per-layer spectral norms, optionally compared with other estimates.
    Bound(BoundArgs),
    /// Sampled Lipschitz quotients over dataset batches.
    Empirical(EmpiricalArgs),
    /// Replace every convolution with an equivalent dense layer.
    Convert(ConvertArgs),
    /// Per-frequency singular values of convolution layers.
    Spectrum(SpectrumArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Synthetic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value = "mnist")]
    pub dataset: DatasetKind,
    /// Directory holding `mnist/` and `cifar10/`; defaults to $LIPBOUND_DATA_ROOT, then `./data`.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Number of synthetic samples.
    #[arg(long, default_value_t = 1000)]
    pub synthetic_size: usize,
    /// Synthetic image shape as CxHxW (train only; other commands use the model's input).
    #[arg(long, default_value = "1x8x8")]
    pub synthetic_dims: String,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `mlp-default`, `cnn-default` or `mlp:H1,H2,...`.
    #[arg(long, default_value = "mlp-default")]
    pub arch: String,
    #[arg(long, default_value_t = 4)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV; defaults to the model path with a `.log.csv` suffix.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMethodArg {
    Toeplitz,
    Fft,
}

impl From<ConvMethodArg> for ConvMethod {
    fn from(m: ConvMethodArg) -> Self {
        match m {
            ConvMethodArg::Toeplitz => ConvMethod::Toeplitz,
            ConvMethodArg::Fft => ConvMethod::Fft,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "toeplitz")]
    pub conv_method: ConvMethodArg,
    /// Externally computed tight bound to compare against.
    #[arg(long)]
    pub tight: Option<f64>,
    /// Empirical maximum to compute gaps against.
    #[arg(long)]
    pub empirical: Option<f64>,
    /// Write the report even if some power iteration did not converge.
    #[arg(long)]
    pub force: bool,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    PerBatch,
    Cumulative,
}

impl From<ModeArg> for BatchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PerBatch => BatchMode::PerBatchReset,
            ModeArg::Cumulative => BatchMode::Cumulative,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputSpaceArg {
    Logits,
    Full,
}

impl From<OutputSpaceArg> for Stop {
    fn from(o: OutputSpaceArg) -> Self {
        match o {
            OutputSpaceArg::Logits => Stop::Logits,
            OutputSpaceArg::Full => Stop::Full,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct EmpiricalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Comma-separated batch sizes N.
    #[arg(long, value_delimiter = ',', required = true)]
    pub set_size: Vec<usize>,
    #[arg(long, value_enum, default_value = "per-batch")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "logits")]
    pub output_space: OutputSpaceArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Sample this many pairs per batch instead of all of them.
    #[arg(long)]
    pub max_pairs: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ConvertArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Compare both networks on this many seeded random inputs.
    #[arg(long, default_value_t = 0)]
    pub check: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Layer index; every convolution when omitted.
    #[arg(long)]
    pub layer: Option<usize>,
    /// CSV with columns layer,u,v,index,sigma.
    #[arg(long)]
    pub out: PathBuf,
}
