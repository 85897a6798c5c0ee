//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(
    name = "fabry",
    version,
    about = "Fabry-Perot surrogates, latent analysis and inverse design"
)]
pub struct Cli {
    /// JSON file supplying flags (a run manifest also works); explicit
    /// flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labeled dataset from the closed-form transmission.
    #[command(args_override_self = true)]
    GenData(GenDataArgs),
    /// Train a forward surrogate.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Score a trained surrogate on one split.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Train one or more beta-VAEs on the spectra of a dataset.
    #[command(args_override_self = true)]
    TrainVae(TrainVaeArgs),
    /// Per-dimension KL and correlations of a VAE's latent means.
    #[command(args_override_self = true)]
    AnalyzeLatent(AnalyzeLatentArgs),
    /// Inverse design of a single target through a frozen surrogate.
    #[command(args_override_self = true)]
    Invert(InvertArgs),
    /// Inverse design over many test-set targets, with an error histogram.
    #[command(args_override_self = true)]
    InvertBatch(InvertBatchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::TrainVae(_) => "train-vae",
            Command::AnalyzeLatent(_) => "analyze-latent",
            Command::Invert(_) => "invert",
            Command::InvertBatch(_) => "invert-batch",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenDataArgs {
    /// lambda, theta or fd
    #[arg(long)]
    pub problem: String,

    /// Output directory; receives data.csv and its sidecar.
    #[arg(long)]
    pub out: PathBuf,

    /// Fixes the test split recorded with the data.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Dataset directory or CSV.
    #[arg(long)]
    pub data: PathBuf,

    /// Hidden layers: "200x6" or "200,100,50".
    #[arg(long, default_value = "200x6")]
    pub layers: String,

    #[arg(long, default_value = "swish")]
    pub activation: String,

    #[arg(long, default_value_t = 30)]
    pub patience: usize,

    #[arg(long, default_value_t = 1000)]
    pub max_epochs: usize,

    #[arg(long, default_value_t = 200)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,

    /// Weight init and train/validation shuffle.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,

    /// Print a progress line every this many epochs; 0 is silent.
    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,

    #[arg(long)]
    pub data: PathBuf,

    /// train, validation or test
    #[arg(long, default_value = "test")]
    pub split: String,

    /// Number of prediction panels in the figure.
    #[arg(long, default_value_t = 4)]
    pub samples: usize,

    /// Output prefix; defaults to the model path with an `.eval-<split>` suffix.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainVaeArgs {
    #[arg(long)]
    pub data: PathBuf,

    /// One value, or a comma-separated sweep.
    #[arg(long, default_value = "0.01")]
    pub beta: String,

    #[arg(long, default_value_t = 1.0)]
    pub recon_scale: f64,

    #[arg(long, default_value_t = 5)]
    pub latent_dim: usize,

    #[arg(long, default_value_t = 100)]
    pub epochs: usize,

    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Model file; sweeps write one file per beta next to it.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AnalyzeLatentArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Dataset (lambda or fd) providing spectra and their (F, delta0).
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long, default_value = "test")]
    pub split: String,

    /// Output prefix; defaults to the model path with a `.latent` suffix.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct InvertArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// `test:IDX` (IDX-th test-split sample of --data) or a CSV of
    /// (wavelength_nm, value) pairs.
    #[arg(long)]
    pub target: String,

    /// Dataset for `test:` targets.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// mse, fourier or combined
    #[arg(long, default_value = "combined")]
    pub init_loss: String,

    /// Re-initialization period in steps; 0 disables.
    #[arg(long, default_value_t = 100)]
    pub reinit: usize,

    #[arg(long, default_value_t = 1000)]
    pub iters: usize,

    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,

    #[arg(long, default_value_t = 200)]
    pub grid_points: usize,

    /// Let parameters leave the normalized training range.
    #[arg(long)]
    pub no_clamp: bool,

    /// Normalized starting point, comma-separated; skips the section searches.
    #[arg(long)]
    pub init_params: Option<String>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output prefix; defaults to `<model dir>/invert`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct InvertBatchArgs {
    #[arg(long)]
    pub model: PathBuf,

    #[arg(long)]
    pub data: PathBuf,

    /// Number of test-split targets, drawn with --seed.
    #[arg(long, default_value_t = 200)]
    pub count: usize,

    #[arg(long, default_value = "combined")]
    pub init_loss: String,

    #[arg(long, default_value_t = 100)]
    pub reinit: usize,

    #[arg(long, default_value_t = 1000)]
    pub iters: usize,

    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,

    #[arg(long, default_value_t = 200)]
    pub grid_points: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 1)]
    pub threads: usize,

    /// Output prefix; defaults to `<model dir>/batch`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
