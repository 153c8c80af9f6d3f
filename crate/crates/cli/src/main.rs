mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Pretrain a bag-of-words document model on unlabeled text and use it for
/// low-resource text classification.
#[derive(Debug, Parser)]
#[command(name = "vampire", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// JSON file with optional sections corpus, vampire, classifier, search, protocol
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config file
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log filter for stderr (error, warn, info, debug, trace)
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize JSONL, build the vocabulary and write a count cache
    Preprocess(PreprocessArgs),
    /// Pretrain a document model (.vam) with epoch log
    Pretrain(PretrainArgs),
    /// Random hyperparameter search over pretraining configs
    Search(SearchArgs),
    /// Print the top words of every topic, with NPMI when a reference corpus is given
    Topics(TopicsArgs),
    /// Train a classifier (.dan), optionally on frozen document-model features
    Train(TrainArgs),
    /// Self-training on labeled plus unlabeled documents
    Selftrain(SelftrainArgs),
    /// Accuracy of a classifier on labeled JSONL
    Evaluate(EvaluateArgs),
    /// Multi-seed comparison of methods across label budgets
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// JSONL with a `text` field (and optional `id`, `label`)
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Receives vocab.txt and counts.bin
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Maximum vocabulary size [default: vampire.vocab_size = 30000]
    #[arg(long)]
    pub vocab_size: Option<usize>,
}

/// Pretraining overrides shared by `pretrain` and `search`.
#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Unlabeled training JSONL
    #[arg(long)]
    pub train: PathBuf,
    /// Validation JSONL for the stopping criterion
    #[arg(long)]
    pub val: PathBuf,
    /// Vocabulary file: read if it exists, otherwise built from --train and written here
    /// [default: <out> with extension vocab.txt]
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Best checkpoint
    #[arg(long)]
    pub out: PathBuf,
    /// JSON-lines epoch log [default: <out> with extension log.jsonl]
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Topic count K [default: vampire.hidden_dim = 64]
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Encoder depth, 1 to 3 [default: vampire.encoder_layers = 2]
    #[arg(long)]
    pub encoder_layers: Option<usize>,
    /// linear, sigmoid or constant [default: vampire.kl_schedule.kind = linear]
    #[arg(long)]
    pub kl_schedule: Option<String>,
    /// [default: vampire.learning_rate = 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// [default: vampire.max_epochs = 50]
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// [default: vampire.patience = 5]
    #[arg(long)]
    pub patience: Option<usize>,
    /// npmi or nll [default: vampire.stopping_criterion = npmi]
    #[arg(long)]
    pub criterion: Option<String>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Copy of the best trial's checkpoint
    #[arg(long)]
    pub out: PathBuf,
    /// Trial checkpoints, trials.jsonl and summary.json [default: <out> with extension trials]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// [default: search.n_trials = 60]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Concurrent trials [default: search.parallelism = 1]
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// npmi or nll [default: search.criterion = npmi]
    #[arg(long)]
    pub criterion: Option<String>,
}

/// A frozen document model for feature extraction.
#[derive(Debug, Args)]
pub struct VampireArgs {
    /// Pretrained .vam checkpoint
    #[arg(long)]
    pub vampire: Option<PathBuf>,
    /// Its vocabulary [default: <vampire> with extension vocab.txt]
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TopicsArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// [default: <model> with extension vocab.txt]
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// JSONL whose document co-occurrences score NPMI
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

/// Classifier overrides shared by `train`, `selftrain` and `experiment`.
#[derive(Debug, Args)]
pub struct ClassifierArgs {
    /// [default: classifier.learning_rate = 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// [default: classifier.max_epochs = 50]
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// [default: classifier.patience = 5]
    #[arg(long)]
    pub patience: Option<usize>,
    /// [default: classifier.dropout = 0.5]
    #[arg(long)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled training JSONL
    #[arg(long)]
    pub train: PathBuf,
    /// Labeled validation JSONL
    #[arg(long)]
    pub val: PathBuf,
    /// Classifier checkpoint; its token list goes to <out>.vocab
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub features: VampireArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
}

#[derive(Debug, Args)]
pub struct SelftrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Unlabeled pool JSONL (labels, if any, are ignored)
    #[arg(long)]
    pub unlabeled: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON-lines iteration log [default: <out> with extension iterations.jsonl]
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub features: VampireArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Classifier checkpoint
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled JSONL
    #[arg(long)]
    pub input: PathBuf,
    /// Report file; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub features: VampireArgs,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Labeled JSONL that labeled subsets are drawn from
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Extra unlabeled JSONL for self-training
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    /// Protocol JSON {label_budgets, seeds, methods}; replaces the config section
    #[arg(long)]
    pub protocol: Option<PathBuf>,
    /// Results JSON; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Table of mean (std) accuracy, methods by label budget
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub features: VampireArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.global.log_level)
        .target(env_logger::Target::Stderr)
        .init();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// `VAMPIRE_THREADS` caps the global worker pool.
fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("VAMPIRE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("VAMPIRE_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}
