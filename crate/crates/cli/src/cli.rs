use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "modguard", version, about = "Two-stage multimodal harmful-content detection")]
pub struct Cli {
    /// TOML config file with defaults for shared flags.
    #[arg(long, global = true, env = "MODGUARD_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true, env = "MODGUARD_SEED")]
    pub seed: Option<u64>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Model,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Embedding backend.
    #[arg(long, value_enum, env = "MODGUARD_BACKEND")]
    pub backend: Option<BackendKind>,
    /// Model sidecar JSON for `--backend model`.
    #[arg(long = "model-file", env = "MODGUARD_MODEL_FILE")]
    pub model_file: Option<PathBuf>,
    /// Mock backend width.
    #[arg(long, env = "MODGUARD_DIM")]
    pub dim: Option<usize>,
    #[arg(long, env = "MODGUARD_BATCH_SIZE")]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Text,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Logreg,
    Svm,
    Knn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Pca,
    Umap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IngestFormat {
    /// Tweet CSV with `class` and `tweet` columns; class 1 kept as label 1.
    HateSpeechCsv,
    /// RedCaps annotation JSON; every entry becomes a label-0 image.
    Redcaps,
    /// Reviewed image manifest CSV.
    Manifest,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Weight examples by n / (2 n_class).
    #[arg(long)]
    pub class_weighting: bool,
}

#[derive(Debug, Clone, Args)]
pub struct LlmArgs {
    /// Use the offline deterministic stub instead of the language model.
    #[arg(long)]
    pub stub: bool,
    #[arg(long, env = "MODGUARD_LLM_URL")]
    pub llm_url: Option<String>,
    #[arg(long, env = "MODGUARD_LLM_MODEL")]
    pub llm_model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub timeout_s: Option<f64>,
    #[arg(long)]
    pub max_retries: Option<usize>,
    #[arg(long)]
    pub max_concurrency: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean the `text` field of JSONL records.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed JSONL records into a binary store plus `.meta` sidecar.
    Embed {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        modality: ModalityArg,
        /// Alias of `--model-file`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Train a classifier on a store.
    Train {
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long)]
        store: PathBuf,
        /// Labels sidecar; defaults to `<store>.meta`.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Neighbours for knn (odd).
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Sweep the learning-rate x l2 grid on a held-out fifth and keep the best.
        #[arg(long)]
        grid: bool,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Warm-start a linear model on new examples plus a replay sample.
    Update {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        new: PathBuf,
        #[arg(long)]
        replay: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score every row of a store.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model against labelled rows.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        roc_csv: Option<PathBuf>,
    },
    /// Project a store to 2D/3D and write a plot-ready CSV.
    Reduce {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, value_enum, default_value = "umap")]
        method: Method,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15)]
        n_neighbors: usize,
        #[arg(long, default_value_t = 0.1)]
        min_dist: f64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        /// File with one id per line to flag in a `highlight` column.
        #[arg(long)]
        highlight: Option<PathBuf>,
        /// Also print trustworthiness for this neighbourhood size.
        #[arg(long)]
        trust_k: Option<usize>,
    },
    /// Add paraphrased synthetic examples to a corpus.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Only paraphrase this label (default: the minority with --balance, else all).
        #[arg(long)]
        label: Option<u8>,
        /// Grow the minority class to this fraction of the majority instead.
        #[arg(long)]
        balance: Option<f64>,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Extract search keywords for each text record.
    Keywords {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Convert a source dataset into corpus JSONL.
    Ingest {
        #[arg(long, value_enum)]
        format: IngestFormat,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Image root for RedCaps entries.
        #[arg(long, default_value = "images")]
        images_dir: PathBuf,
    },
    /// Deterministic train/test split of a corpus.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        #[arg(long)]
        no_stratify: bool,
    },
    /// Print label/modality counts of a corpus as JSON.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Search and download candidate images, then write a review manifest.
    FetchImages {
        /// JSONL rows with `text` and/or `keywords` to search for.
        #[arg(long, conflicts_with = "urls")]
        queries: Option<PathBuf>,
        /// Lines of `url<TAB>proposed query` to download directly.
        #[arg(long)]
        urls: Option<PathBuf>,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Results per query.
        #[arg(long, default_value_t = 10)]
        limit: usize,
        /// Canned search results instead of the live search API.
        #[arg(long)]
        search_fixture: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        max_hosts: usize,
        #[arg(long, default_value_t = 500)]
        delay_ms: u64,
    },
    /// preprocess, split, embed, train, eval, predict and reduce in one go.
    Pipeline {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        work: PathBuf,
        #[arg(long, value_enum, default_value = "logreg")]
        algo: Algo,
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Run the HTTP classification service.
    Serve {
        /// Classifier model file.
        #[arg(long, env = "MODGUARD_MODEL")]
        model: Option<PathBuf>,
        #[arg(long, env = "MODGUARD_BIND")]
        bind: Option<String>,
        #[arg(long, env = "MODGUARD_MAX_BODY_BYTES")]
        max_body_bytes: Option<usize>,
        /// Replaces the threshold of every loaded model.
        #[arg(long, env = "MODGUARD_THRESHOLD_OVERRIDE")]
        threshold_override: Option<f64>,
        /// Concurrent embedding jobs.
        #[arg(long, env = "MODGUARD_WORKERS")]
        workers: Option<usize>,
        #[command(flatten)]
        backend: BackendArgs,
    },
}
