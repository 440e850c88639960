mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use saeft_core::RegKind;

#[derive(Parser)]
#[command(name = "saeft", version, about = "SAE-regularized fine-tuning and representation drift analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic superposition dataset (RDS1 train/eval + class embeddings).
    Synth(SynthArgs),
    /// Write a zero-shot encoder checkpoint (identity MLP unless --hidden is given).
    InitEncoder(InitEncoderArgs),
    /// Train a Top-K SAE on a representation file.
    TrainSae(TrainSaeArgs),
    /// Fine-tune an encoder with an optional regularizer.
    Finetune(FinetuneArgs),
    /// Drift report of fine-tuned encoders against the zero-shot encoder.
    Analyze(AnalyzeArgs),
    /// Per-sample SAE feature diff between two encoders.
    Diff(DiffArgs),
    /// synth -> train-sae -> finetune (one run per regularizer) -> analyze.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// JSON synth config; defaults to the toy classification task.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 1)]
    pub split_seed: u64,
}

#[derive(Args)]
pub struct InitEncoderArgs {
    #[arg(long)]
    pub d: usize,
    /// Hidden widths of a randomly initialized MLP.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainSaeArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Dictionary size (default 4d).
    #[arg(long)]
    pub p: Option<usize>,
    /// Active features (default d/32).
    #[arg(long)]
    pub k: Option<usize>,
    /// JSON training config (epochs, batch_size, learning_rate, adam, seed).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Zero-shot encoder checkpoint.
    #[arg(long)]
    pub encoder: PathBuf,
    /// Head checkpoint; built from --class-embeddings when omitted.
    #[arg(long, conflicts_with = "class_embeddings")]
    pub head: Option<PathBuf>,
    #[arg(long)]
    pub class_embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    pub tau: f64,
    #[arg(long)]
    pub sae: Option<PathBuf>,
    /// Fit a PCA basis with this many components on the zero-shot train representations.
    #[arg(long, default_value_t = 16)]
    pub pca_components: usize,
    #[arg(long, default_value = "none", value_parser = parse_kind)]
    pub reg: RegKind,
    /// Overall regularization scale.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_resid: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_kind: f64,
    /// JSON fine-tune config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub zero_shot: PathBuf,
    /// `NAME=ENCODER,HEAD`; repeat for several models.
    #[arg(long = "model")]
    pub models: Vec<String>,
    #[arg(long)]
    pub sae: PathBuf,
    #[arg(long)]
    pub eval: PathBuf,
    /// Train set for the train accuracy column (defaults to --eval).
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub class_embeddings: PathBuf,
    /// Logit scale of the zero-shot head.
    #[arg(long, default_value_t = 10.0)]
    pub tau: f64,
    /// Overlap denominator: `k` or `union`.
    #[arg(long, default_value = "k")]
    pub overlap_norm: String,
    #[arg(long)]
    pub out_json: PathBuf,
    #[arg(long)]
    pub out_csv: PathBuf,
}

#[derive(Args)]
pub struct DiffArgs {
    #[arg(long)]
    pub zero_shot: PathBuf,
    #[arg(long)]
    pub finetuned: PathBuf,
    #[arg(long)]
    pub sae: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub sample: usize,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PipelineArgs {
    /// JSON pipeline config; defaults reproduce the toy experiment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_kind(s: &str) -> Result<RegKind, String> {
    s.parse().map_err(|e: saeft_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                // --help / --version
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", error::CliError::usage(e.to_string().trim()).to_json());
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::InitEncoder(a) => commands::init_encoder(&a),
        Command::TrainSae(a) => commands::train_sae(&a),
        Command::Finetune(a) => commands::finetune(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Diff(a) => commands::diff(&a),
        Command::Pipeline(a) => commands::pipeline(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}
