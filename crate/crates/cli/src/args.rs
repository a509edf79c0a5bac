use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use kermit_core::describe::WireSchema;
use kermit_core::{Direction, MarginMode, Pooling, PositionKind, SequenceMode, Split};

use crate::config::{split_assignment, ConfigError};

#[derive(Debug, Parser)]
#[command(
    name = "kermit",
    version,
    about = "Knowledge graph completion with generated descriptions of the missing entity"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a dataset, validate its relation registry and write the
    /// forward and backward queries of every split
    Prepare(PrepareArgs),
    /// Generate a predictive description for every query (service or stub)
    Describe(DescribeArgs),
    /// Train the query and entity encoders
    Train(TrainArgs),
    /// Rank every entity for each query of a split and report MRR and Hit@k
    Eval(EvalArgs),
    /// Top-k entities for one ad-hoc query
    Predict(PredictArgs),
    /// Write a small synthetic dataset
    Synth(SynthArgs),
}

/// Flags shared by every subcommand. Precedence: built-in defaults, then
/// `--config`, then flags.
#[derive(Debug, Args)]
pub struct Common {
    /// Flat key = value configuration file
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the stage
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset directory (train.txt, valid.txt, test.txt, entities.tsv)
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Relation registry: a relations.json path, or the bundled wn18rr / fb15k237
    #[arg(long)]
    pub registry: Option<String>,
    /// Output directory for artifacts and run metadata
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Any configuration key, e.g. --set tau=0.1 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CacheArgs {
    /// Description cache file (default <out>/descriptions.<dataset>.jsonl)
    #[arg(long, value_name = "FILE")]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Query sequence layout
    #[arg(long)]
    pub mode: Option<SequenceMode>,
    /// Embedding width
    #[arg(long)]
    pub dim: Option<usize>,
    /// Sequence length after padding or truncation
    #[arg(long)]
    pub max_len: Option<usize>,
    /// mean or cls
    #[arg(long)]
    pub pooling: Option<Pooling>,
    /// learned or sinusoidal
    #[arg(long)]
    pub positions: Option<PositionKind>,
    /// Self-attention layers on top of the embeddings
    #[arg(long)]
    pub layers: Option<usize>,
    /// Minimum token count for the vocabulary
    #[arg(long)]
    pub min_freq: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Additive margin
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Softmax temperature
    #[arg(long)]
    pub tau: Option<f64>,
    /// positive_only or literal
    #[arg(long)]
    pub margin_mode: Option<MarginMode>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Save a checkpoint every N epochs (0 disables)
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServiceArgs {
    /// Fill the cache with deterministic stub text instead of calling the service
    #[arg(long)]
    pub stub: bool,
    /// Request/response format: chat or plain
    #[arg(long)]
    pub schema: Option<WireSchema>,
    /// Per-request timeout in seconds
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    /// Retries after the first attempt
    #[arg(long)]
    pub retries: Option<u32>,
    /// Requests per second
    #[arg(long)]
    pub rate: Option<f64>,
    /// Concurrent requests
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Prompt template file with {h_name}, {h_desp} and {r_name} slots
    #[arg(long, value_name = "FILE")]
    pub template: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub service: ServiceArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct ModelFiles {
    /// Trained model (default <out>/model.bin)
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Vocabulary (default <out>/vocab.tsv)
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub files: ModelFiles,
    /// Split to evaluate
    #[arg(long, default_value = "test")]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub files: ModelFiles,
    /// Source entity key
    #[arg(long)]
    pub source: String,
    /// Relation key as stored in the triple files
    #[arg(long)]
    pub relation: String,
    /// fwd asks for tails of (source, relation, ?); bwd for heads of (?, relation, source)
    #[arg(long, default_value = "fwd")]
    pub direction: Direction,
    /// Number of entities to list
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    /// Keep entities already known to answer the query
    #[arg(long)]
    pub no_filter: bool,
    /// Use stub text when the cache has no description for the query
    #[arg(long)]
    pub stub: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 50)]
    pub entities: usize,
    #[arg(long, default_value_t = 4)]
    pub relations: usize,
}

fn push<T: ToString>(out: &mut Vec<(String, String)>, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        out.push((key.to_string(), v.to_string()));
    }
}

fn push_path(out: &mut Vec<(String, String)>, key: &str, value: &Option<PathBuf>) {
    push(out, key, &value.as_ref().map(|p| p.display().to_string()));
}

impl Common {
    pub fn overrides(&self) -> Result<Vec<(String, String)>, ConfigError> {
        let mut out = Vec::new();
        for s in &self.set {
            out.push(split_assignment(s)?);
        }
        push(&mut out, "seed", &self.seed);
        push_path(&mut out, "data", &self.data);
        push(&mut out, "registry", &self.registry);
        push_path(&mut out, "out", &self.out);
        Ok(out)
    }
}

impl CacheArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        push_path(&mut out, "cache", &self.cache);
        out
    }
}

impl ModelArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        push(&mut out, "mode", &self.mode.map(|m| m.as_str()));
        push(&mut out, "dim", &self.dim);
        push(&mut out, "max_len", &self.max_len);
        push(&mut out, "pooling", &self.pooling);
        push(&mut out, "positions", &self.positions);
        push(&mut out, "layers", &self.layers);
        push(&mut out, "min_freq", &self.min_freq);
        out
    }
}

impl FitArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        push(&mut out, "learning_rate", &self.learning_rate);
        push(&mut out, "epochs", &self.epochs);
        push(&mut out, "batch_size", &self.batch_size);
        push(&mut out, "gamma", &self.gamma);
        push(&mut out, "tau", &self.tau);
        push(&mut out, "margin_mode", &self.margin_mode);
        push(&mut out, "weight_decay", &self.weight_decay);
        push(&mut out, "checkpoint_every", &self.checkpoint_every);
        out
    }
}

impl ServiceArgs {
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let schema = self.schema.map(|s| match s {
            WireSchema::ChatCompletions => "chat",
            WireSchema::Plain => "plain",
        });
        push(&mut out, "service_schema", &schema);
        push(&mut out, "service_timeout_secs", &self.timeout_secs);
        push(&mut out, "service_retries", &self.retries);
        push(&mut out, "service_rate", &self.rate);
        push(&mut out, "service_max_in_flight", &self.max_in_flight);
        push_path(&mut out, "template", &self.template);
        out
    }
}
