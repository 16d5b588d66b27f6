//! Command-line front end: cost estimates, instrumented verification, and
//! the training and generation demos.

pub mod commands;
pub mod config_file;
pub mod error;
pub mod render;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flopscale::ModelConfig;

pub use error::{exit, CliError, CliResult};

/// Environment variable naming a default hardware profile file.
pub const HARDWARE_ENV: &str = "FLOPSCALE_HARDWARE";

#[derive(Debug, Parser)]
#[command(
    name = "flopscale",
    version,
    about = "Transformer scaling arithmetic and an instrumented reference model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form parameter, memory, flop and cost estimates.
    Estimate(EstimateArgs),
    /// Run a small model through the ledger and compare with the closed forms.
    Verify(VerifyArgs),
    /// Train a character-level model on a text corpus with plain SGD.
    Train(TrainArgs),
    /// Generate text with the cached decoder.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// DeepSeek-V3 mixture-of-experts figures.
    Deepseek,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct EstimateSource {
    /// A, B, C, D-low, D-high, or "all".
    #[arg(long)]
    pub preset: Option<String>,
    /// Model dimensions file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
}

#[derive(Debug, Args)]
pub struct HardwareArgs {
    /// Hardware profile file; keys flops_per_second, cost_per_year, seconds_per_year.
    #[arg(long, value_name = "FILE", env = HARDWARE_ENV)]
    pub hardware: Option<PathBuf>,
    /// Sustained device throughput in flops per second.
    #[arg(long, value_name = "FLOPS")]
    pub gpu_flops: Option<f64>,
    /// Dollars per device-year.
    #[arg(long, value_name = "DOLLARS")]
    pub gpu_cost: Option<f64>,
    #[arg(long, value_name = "SECONDS")]
    pub seconds_per_year: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub source: EstimateSource,
    #[command(flatten)]
    pub hardware: HardwareArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Include the embedding and unembedding terms in training flops.
    #[arg(long)]
    pub vocab_terms: bool,
    /// Bytes per stored element for the memory rows.
    #[arg(long, default_value_t = 2)]
    pub bytes_per_element: u32,
}

/// Model dimensions, from a file or individual flags.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Model dimensions file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Context window.
    #[arg(long, conflicts_with = "config")]
    pub n: Option<usize>,
    /// Vocabulary size (for training, a cap on the character vocabulary).
    #[arg(long, conflicts_with = "config")]
    pub vocab: Option<usize>,
    #[arg(long, conflicts_with = "config")]
    pub d_emb: Option<usize>,
    /// Attention heads; `verify` accepts a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub heads: Vec<usize>,
    #[arg(long, conflicts_with = "config")]
    pub layers: Option<usize>,
    /// Feed-forward width; defaults to 4 * d_emb.
    #[arg(long, conflicts_with = "config")]
    pub d_ff: Option<usize>,
}

impl ModelArgs {
    /// The configured model; `--heads` must hold at most one value.
    pub fn resolve(&self, default: ModelConfig) -> CliResult<ModelConfig> {
        match self.heads.as_slice() {
            [] => {
                let base = self.base(default)?;
                with_heads(base, base.heads)
            }
            [h] => with_heads(self.base(default)?, *h),
            _ => Err(CliError::usage(
                "--heads takes a single value for this command",
            )),
        }
    }

    /// One configuration per `--heads` value, or the base one if none given.
    pub fn resolve_all(&self, default: ModelConfig) -> CliResult<Vec<ModelConfig>> {
        let base = self.base(default)?;
        if self.heads.is_empty() {
            return Ok(vec![with_heads(base, base.heads)?]);
        }
        self.heads.iter().map(|&h| with_heads(base, h)).collect()
    }

    /// Unvalidated until the head count is settled.
    fn base(&self, default: ModelConfig) -> CliResult<ModelConfig> {
        if let Some(path) = &self.config {
            return config_file::load_model_config(path);
        }
        let d_emb = self.d_emb.unwrap_or(default.d_emb);
        let d_ff = match (self.d_ff, self.d_emb) {
            (Some(d_ff), _) => d_ff,
            (None, Some(d)) => 4 * d,
            (None, None) => default.d_ff,
        };
        Ok(ModelConfig {
            context: self.n.unwrap_or(default.context),
            vocab: self.vocab.unwrap_or(default.vocab),
            d_emb,
            heads: default.heads,
            layers: self.layers.unwrap_or(default.layers),
            d_ff,
            activation: default.activation,
        })
    }
}

fn with_heads(cfg: ModelConfig, heads: usize) -> CliResult<ModelConfig> {
    let cfg = ModelConfig { heads, ..cfg };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parameters sampled by the finite-difference check.
    #[arg(long, default_value_t = 256)]
    pub grad_samples: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Perturb one expected value to exercise the failure path.
    #[arg(long, hide = true)]
    pub corrupt_expected: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Training text; defaults to the bundled demo corpus.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the trained parameters and vocabulary here.
    #[arg(long, value_name = "FILE")]
    pub save: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Trained checkpoint; without one a freshly initialized model is used.
    #[arg(long, value_name = "FILE", conflicts_with = "config")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub prompt: String,
    /// Tokens to generate after the prompt.
    #[arg(long, default_value_t = 16)]
    pub steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Always take the most likely token.
    #[arg(long, conflicts_with = "temperature")]
    pub greedy: bool,
    /// Seeds both the fresh model and the sampler.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the uncached decoder that reruns the full forward pass.
    #[arg(long)]
    pub reference: bool,
}

/// Runs one command, writing its report to `out`; returns the exit code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<u8> {
    match &cli.command {
        Command::Estimate(args) => commands::estimate::run(args, out),
        Command::Verify(args) => commands::verify::run(args, out),
        Command::Train(args) => commands::train::run(args, out),
        Command::Generate(args) => commands::generate::run(args, out),
    }
}
