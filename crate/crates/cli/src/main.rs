mod commands;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lls_core::corpus::TokenizerMode;
use lls_core::explain::Method;
use lls_core::overlap::DistanceUnit;
use lls_core::trainer::Order;
use lls_core::weights::{ConflictPolicy, FreqNormalization};

#[derive(Parser, Debug)]
#[command(name = "lls", version, about = "Corpus bias auditing and shortcut-aware example reweighting")]
struct Cli {
    /// Seed for every stochastic step
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving outputs and manifest.json
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Suppress progress output
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Word statistics, biased-word table and dataset report
    Analyze(AnalyzeArgs),
    /// Per-example loss weights
    Weights(WeightsArgs),
    /// Generate a synthetic corpus with planted biases
    Synth(SynthArgs),
    /// Train the bag-of-words classifier
    Train(TrainArgs),
    /// Accuracy and per-example predictions
    Eval(EvalArgs),
    /// Word-contribution rankings
    Explain(ExplainArgs),
    /// Prediction tendency on biased and focus-biased examples
    Tendency(TendencyArgs),
    /// Consolidated summary of a run directory
    Report(ReportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerArg {
    Whitespace,
    Pretok,
    Char,
}

impl From<TokenizerArg> for TokenizerMode {
    fn from(t: TokenizerArg) -> Self {
        match t {
            TokenizerArg::Whitespace => TokenizerMode::Whitespace,
            TokenizerArg::Pretok => TokenizerMode::PreTokenized,
            TokenizerArg::Char => TokenizerMode::Char,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitArg {
    Token,
    Char,
}

impl From<UnitArg> for DistanceUnit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Token => DistanceUnit::Token,
            UnitArg::Char => DistanceUnit::Char,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct CorpusArgs {
    /// Line-delimited JSON records
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "whitespace")]
    pub tokenizer: TokenizerArg,
    #[arg(long)]
    pub lowercase: bool,
    /// Comma-separated label space; inferred from the data when absent
    #[arg(long)]
    pub labels: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value_t = 3)]
    pub min_freq: usize,
    #[arg(long, default_value_t = 0.8)]
    pub min_degree: f64,
    #[arg(long, default_value = "bias_table.jsonl")]
    pub out_table: PathBuf,
    #[arg(long, default_value = "stats_report.json")]
    pub out_report: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    D,
    Df,
    Full,
    RewBias,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreqNormArg {
    MaxFreq,
    None,
}

impl From<FreqNormArg> for FreqNormalization {
    fn from(f: FreqNormArg) -> Self {
        match f {
            FreqNormArg::MaxFreq => FreqNormalization::MaxFreq,
            FreqNormArg::None => FreqNormalization::None,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictArg {
    Overlap,
    MixedLabels,
}

impl From<ConflictArg> for ConflictPolicy {
    fn from(c: ConflictArg) -> Self {
        match c {
            ConflictArg::Overlap => ConflictPolicy::Overlap,
            ConflictArg::MixedLabels => ConflictPolicy::MixedLabels,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct WeightsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Biased-word table written by `analyze`
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub min_freq: usize,
    #[arg(long, default_value_t = 0.8)]
    pub min_degree: f64,
    #[arg(long, value_enum, default_value = "full")]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.3)]
    pub tau: f64,
    #[arg(long, value_enum, default_value = "max-freq")]
    pub freq_norm: FreqNormArg,
    #[arg(long, value_enum, default_value = "overlap")]
    pub conflict_policy: ConflictArg,
    /// Label implied by high overlap (default: second label)
    #[arg(long)]
    pub positive_label: Option<String>,
    #[arg(long, value_enum, default_value = "token")]
    pub distance_unit: UnitArg,
    /// Bias-only model training (rew-bias only)
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value = "weights.tsv")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    /// JSON document mirroring the synthetic corpus configuration
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderArg {
    Random,
    BiasFirst,
    BiasLast,
}

impl From<OrderArg> for Order {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Random => Order::Random,
            OrderArg::BiasFirst => Order::BiasFirst,
            OrderArg::BiasLast => Order::BiasLast,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Weight table (tab-separated id, weight)
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "random")]
    pub order: OrderArg,
    /// Biased-word table, required for curriculum orders
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub min_freq: usize,
    #[arg(long, default_value_t = 0.8)]
    pub min_degree: f64,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Hidden layer width; linear model when absent
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub loss_log_every: usize,
    /// Continue on forgotten examples for this many epochs
    #[arg(long)]
    pub forgetting_epochs: Option<usize>,
    #[arg(long, default_value = "model.json")]
    pub model_out: PathBuf,
    #[arg(long, default_value = "loss.log")]
    pub loss_log: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Strategy name recorded for the report
    #[arg(long, default_value = "finetune")]
    pub strategy: String,
    /// Split name recorded for the report (default: input file stem)
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long, default_value = "predictions.jsonl")]
    pub out: PathBuf,
    /// Accuracy summary (default: eval_<strategy>_<split>.json)
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Lime,
    Occlusion,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lime => Method::Lime,
            MethodArg::Occlusion => Method::Occlusion,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value = "lime")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 1000)]
    pub n_samples: usize,
    #[arg(long)]
    pub kernel_width: Option<f64>,
    /// Explain only examples holding a biased word from this table
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub min_freq: usize,
    #[arg(long, default_value_t = 0.8)]
    pub min_degree: f64,
    /// Also write top-k biased/random word ratios (needs --table)
    #[arg(long)]
    pub top_k: Option<usize>,
    /// One stopword per line, excluded from the random-word baseline
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, default_value = "rankings.jsonl")]
    pub out: PathBuf,
    #[arg(long, default_value = "topk_ratios.json")]
    pub out_topk: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct TendencyArgs {
    /// Predictions written by `eval`
    #[arg(long)]
    pub pred: PathBuf,
    /// Gold dataset the predictions were made on
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value = "whitespace")]
    pub tokenizer: TokenizerArg,
    #[arg(long)]
    pub lowercase: bool,
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub min_freq: usize,
    #[arg(long, default_value_t = 0.8)]
    pub min_degree: f64,
    #[arg(long)]
    pub rankings: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub max_dist: usize,
    #[arg(long, value_enum, default_value = "token")]
    pub distance_unit: UnitArg,
    #[arg(long, default_value = "tendency.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    /// Directory holding pipeline artifacts (default: --out-dir)
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
}

pub struct Globals {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let globals = Globals {
        seed: cli.seed,
        out_dir: cli.out_dir,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Analyze(a) => commands::analyze(&globals, a),
        Command::Weights(a) => commands::weights(&globals, a),
        Command::Synth(a) => commands::synth(&globals, a),
        Command::Train(a) => commands::train(&globals, a),
        Command::Eval(a) => commands::eval(&globals, a),
        Command::Explain(a) => commands::explain(&globals, a),
        Command::Tendency(a) => commands::tendency(&globals, a),
        Command::Report(a) => report::report(&globals, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = if e.chain().any(|c| c.is::<std::io::Error>()) {
                "io"
            } else {
                "failure"
            };
            let line = serde_json::json!({
                "error": kind,
                "message": format!("{e:#}"),
            });
            eprintln!("{line}");
            ExitCode::from(1)
        }
    }
}
