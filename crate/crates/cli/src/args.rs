use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "elastic", version, about = "Elastic masked-LM encoder toolkit")]
pub struct Cli {
    /// Seed for every random choice in the command.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Run config (JSON with model/data/schedule/curriculum/optimizer/stage).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Validate inputs and configs, then exit without doing the work.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Directory for artifacts whose path is not given explicitly.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenizer training, overlap and embedding transplant.
    #[command(subcommand)]
    Tok(TokCommand),
    /// Document curation and packing.
    #[command(subcommand)]
    Data(DataCommand),
    /// Pre-training stage from a config or preset.
    Train(TrainArgs),
    /// Vocabulary adaptation: swap the tokenizer, then continue training.
    Adapt(AdaptArgs),
    /// Domain adaptation by continued pre-training.
    AdaptDomain(AdaptDomainArgs),
    /// Export the sub-network at one granularity as a standalone checkpoint.
    Slice(SliceArgs),
    /// Inference throughput across granularities.
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
pub enum TokCommand {
    Train {
        /// Text file, NDJSON document file, or directory of them.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Overlap {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    Transplant {
        #[arg(long)]
        src_vocab: PathBuf,
        /// Checkpoint whose token embeddings are transplanted.
        #[arg(long)]
        src_emb: PathBuf,
        #[arg(long)]
        dst_vocab: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Biomed,
    Legal,
    None,
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    Curate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        quality_threshold: f64,
        #[arg(long, value_enum, default_value_t = DomainArg::None)]
        domain: DomainArg,
    },
    Pack {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 1024)]
        len: usize,
        /// Masking rate applied at pack time; omit to store unmasked rows.
        #[arg(long)]
        mlm: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct DataFlags {
    /// Packed training rows; overrides the config's data.train.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Packed held-out rows, scored at every curriculum granularity at the end.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    /// Token budget for a preset stage; defaults to one pass over the data.
    #[arg(long)]
    pub tokens: Option<u64>,
    /// Override the preset sequence length (must match the pack file).
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// Override the batch size.
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub preset: Option<String>,
    /// Training checkpoint to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Vocabulary; overrides the config's data.vocab.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataFlags,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    /// Source model checkpoint.
    #[arg(long)]
    pub init: PathBuf,
    /// Target vocabulary.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Vocabulary the source model was trained with.
    #[arg(long)]
    pub src_vocab: PathBuf,
    /// Initialize embeddings by transplant instead of at random.
    #[arg(long)]
    pub transplant: bool,
    #[arg(long, default_value = "adapt-lang")]
    pub preset: String,
    #[command(flatten)]
    pub data: DataFlags,
}

#[derive(Debug, Args)]
pub struct AdaptDomainArgs {
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, value_enum)]
    pub domain: DomainChoice,
    /// Passes over the data; defaults to the preset's value.
    #[arg(long)]
    pub epochs: Option<u32>,
    #[command(flatten)]
    pub data: DataFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainChoice {
    Legal,
    Biomed,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub heads: f64,
    #[arg(long)]
    pub mlp: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    /// Only the checkpoint as stored.
    Full,
    /// Head fractions 0.25..1.0 with the full MLP.
    Heads,
    /// MLP fractions 0.25..1.0 with all heads.
    Mlp,
    /// All 16 pairs.
    All,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_enum, default_value_t = GridArg::Heads)]
    pub grid: GridArg,
    #[arg(long, default_value_t = 8192)]
    pub seq: usize,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value_t = 9)]
    pub repeats: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
