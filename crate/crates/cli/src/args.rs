use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use perturbkit::{Activation, Exponent, LossKind};

#[derive(Debug, Parser)]
#[command(
    name = "perturbkit",
    version,
    about = "Adversarial perturbations for small feedforward models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Attack every example and write one JSON record per line.
    Attack(AttackCmd),
    /// Fooling ratio (classification) or PSNR (regression) over a grid of budgets.
    Sweep(SweepCmd),
    /// Robustness measures of a classifier.
    Robustness(RobustnessCmd),
    /// Train a small MLP with full-batch gradient descent.
    TrainToy(TrainCmd),
    /// Write a synthetic dataset.
    GenData(GenDataCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

/// Flags shared by `attack` and `sweep`.
#[derive(Debug, Args)]
pub struct AttackOpts {
    #[arg(long)]
    pub p: Option<Exponent>,
    /// Iterations (or subsets, for multi-subset attacks).
    #[arg(long = "T")]
    pub steps: Option<usize>,
    /// none, first=eps, first=<r>, all=eps or all=<r>.
    #[arg(long)]
    pub dither: Option<String>,
    /// Partition JSON file, `singletons` or `contiguous:<Z>`. Defaults to singletons.
    #[arg(long)]
    pub partition: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// margin, simplified, cross-entropy or targeted:<l>.
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long, value_enum)]
    pub early_stop: Option<OnOff>,
    /// Iteration cap of the DeepFool-style attack.
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    /// Peak signal value used for PSNR.
    #[arg(long, default_value_t = 1.0)]
    pub peak: f64,
}

#[derive(Debug, Args)]
pub struct AttackCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub attack: String,
    #[arg(long)]
    pub eps: Option<f64>,
    #[command(flatten)]
    pub opts: AttackOpts,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma separated attack names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub attack: Vec<String>,
    /// Comma separated budgets.
    #[arg(long, value_delimiter = ',', required = true)]
    pub eps: Vec<f64>,
    #[command(flatten)]
    pub opts: AttackOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RobustnessCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "inf")]
    pub p: Exponent,
    /// Budgets searched for the smallest one at which the DeepFool-style attack fools
    /// more than 99%. Defaults to the norms the attack itself reaches.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[arg(long)]
    pub data: PathBuf,
    /// Layer widths, e.g. 2,16,3.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value = "tanh")]
    pub hidden: Activation,
    #[arg(long, default_value = "identity")]
    pub output: Activation,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenDataCmd {
    #[command(subcommand)]
    pub kind: DataKind,
}

#[derive(Debug, Subcommand)]
pub enum DataKind {
    /// Labelled Gaussian blobs.
    Blobs {
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        #[arg(long, default_value_t = 0.6)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smooth low-rank signals with target = input.
    Patterns {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 6)]
        rank: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}
