use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "oosguard", version, about = "Out-of-scope intent detection: train, calibrate, evaluate and serve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the encoder and fit class statistics; writes a model file.
    Train(TrainArgs),
    /// Set the OOS threshold from validation data.
    Calibrate(CalibrateArgs),
    /// Evaluate a model on test data.
    Eval(EvalArgs),
    /// Split a labeled corpus into train/validation/test with OOS held out.
    Split(SplitArgs),
    /// Generate a synthetic Gaussian-cluster dataset.
    Synth(SynthArgs),
    /// Score a single query.
    Score(ScoreArgs),
    /// Serve newline-delimited JSON scoring requests.
    Serve(ServeArgs),
    /// Train one model per alpha and pick the best validation AUPR.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML training config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named hyperparameter preset (overrides the config's `preset`).
    #[arg(long)]
    pub preset: Option<String>,
    /// Dataset directory (uses train.*) or a single .emb/.jsonl file.
    #[arg(long)]
    pub data: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory (uses validation.*) or a single file.
    #[arg(long)]
    pub data: PathBuf,
    /// `is-recall@<r>` or `f1-oos`.
    #[arg(long, default_value = "is-recall@0.95")]
    pub policy: String,
    /// Write here instead of updating the model in place.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory (uses test.*) or a single file.
    #[arg(long)]
    pub data: PathBuf,
    /// Threshold to report instead of the model's.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Also write the report as JSON to this path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print JSON instead of key=value lines.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Procedure {
    /// Labels covering 75% of examples are in-scope, the rest OOS.
    Stackoverflow,
    /// Designated labels are OOS.
    OosDomain,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Labeled corpus (.jsonl or .emb).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Procedure::Stackoverflow)]
    pub procedure: Procedure,
    /// Comma-separated OOS labels (oos-domain only).
    #[arg(long, value_delimiter = ',')]
    pub oos_labels: Vec<String>,
    /// Drop in-scope classes smaller than this (oos-domain only).
    #[arg(long, default_value_t = 10)]
    pub min_per_class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OosModeArg {
    Shell,
    UniformBox,
    HeldOutClusters,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML synthetic spec.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long, value_enum)]
    pub oos_mode: Option<OosModeArg>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, conflicts_with = "embedding", required_unless_present = "embedding")]
    pub text: Option<String>,
    /// Comma-separated embedding values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub embedding: Option<Vec<f32>>,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub addr: String,
    /// Read requests from stdin and answer on stdout.
    #[arg(long)]
    pub stdio: bool,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// Dataset directory with train.* and validation.*.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated alpha values.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the sweep report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
