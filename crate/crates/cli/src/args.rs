use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use recallfeed::corpus::SplitName;
use recallfeed::engine::BackendKind;
use recallfeed::feedback::{AverageMode, StrategyKind};
use recallfeed::ranking::{QueryPolicy, RankMode};

#[derive(Debug, Parser)]
#[command(name = "recallfeed", version, about = "Recall-oriented document retrieval with iterative relevance feedback")]
pub struct Cli {
    /// Workspace directory holding the corpus, indexes and manifest.
    #[arg(long, global = true, env = "RECALLFEED_WORKSPACE", default_value = "workspace")]
    pub workspace: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read raw documents into the workspace corpus.
    Ingest(IngestArgs),
    /// Draw seeded per-topic train/validation/test and ambiguous splits.
    Sample(SampleArgs),
    /// Build a TF-IDF or dense index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Embed corpus paragraphs with the deterministic hash embedder.
    Embed(EmbedArgs),
    /// Rank the documents most similar to a query document.
    Search(SearchArgs),
    /// Query-by-document recall and precision curves as CSV.
    Evaluate(EvaluateArgs),
    /// Simulated review sessions; writes the experiment table as CSV.
    Simulate(SimulateArgs),
    /// Serve the review-session HTTP API.
    Serve(ServeArgs),
    /// Generate a labeled synthetic corpus, its embeddings and a test split.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Jsonl,
    #[value(name = "rcv1-xml")]
    Rcv1Xml,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Input files, or directories whose files are read in name order.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Documents drawn per topic.
    #[arg(long, default_value_t = 300)]
    pub per_topic: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Unrelated topics shared out over train, validation and test.
    #[arg(long, default_value_t = 15)]
    pub unrelated_topics: usize,
    /// Explicit unrelated topics (comma separated); sampled when empty.
    #[arg(long, value_delimiter = ',')]
    pub topics: Vec<String>,
    /// Parent topic whose children form the ambiguous split.
    #[arg(long)]
    pub ambiguous_parent: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub ambiguous_count: usize,
    /// Explicit ambiguous topics (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub ambiguous_topics: Vec<String>,
    /// RCV1 topic hierarchy file (`parent: X child: Y ...` per line).
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
    /// Take every document of a topic that has fewer than --per-topic.
    #[arg(long)]
    pub allow_short_topics: bool,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// TF-IDF index for MoreLikeThis search and keyword extraction.
    Tfidf(TfidfArgs),
    /// HNSW index over paragraph embeddings.
    Dense(DenseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    Document,
    Paragraph,
}

#[derive(Debug, Args)]
pub struct TfidfArgs {
    #[arg(long, value_enum, default_value_t = GranularityArg::Paragraph)]
    pub granularity: GranularityArg,
    /// Sentences per paragraph.
    #[arg(long, default_value_t = 3)]
    pub group_size: usize,
    /// Index only this split's documents.
    #[arg(long)]
    pub split: Option<SplitName>,
}

#[derive(Debug, Args)]
pub struct DenseArgs {
    /// EMB1 embedding file to import; defaults to the workspace embeddings.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub hnsw_m: usize,
    #[arg(long, default_value_t = 200)]
    pub ef_construction: usize,
    #[arg(long, default_value_t = 100)]
    pub ef_search: usize,
    /// Seed of the level draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Index only this split's documents.
    #[arg(long)]
    pub split: Option<SplitName>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sentences per paragraph.
    #[arg(long, default_value_t = 3)]
    pub group_size: usize,
    /// Words per paragraph before truncation.
    #[arg(long, default_value_t = 384)]
    pub word_limit: usize,
    /// Embed only this split's documents.
    #[arg(long)]
    pub split: Option<SplitName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchBackend {
    /// MoreLikeThis over whole documents.
    MltDoc,
    /// MoreLikeThis over paragraphs.
    MltPara,
    /// HNSW dense-vector search.
    Dvs,
    /// Exhaustive dense-vector search.
    Exact,
}

#[derive(Debug, Clone, Args)]
pub struct MltArgs {
    #[arg(long, default_value_t = 25)]
    pub max_query_terms: usize,
    /// Minimum document-frequency fraction of a query term.
    #[arg(long, default_value_t = 0.0)]
    pub min_df: f64,
    /// Maximum document-frequency fraction of a query term.
    #[arg(long, default_value_t = 0.8)]
    pub max_df: f64,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Document or paragraph id to query with.
    #[arg(long)]
    pub query_id: String,
    #[arg(long, value_enum, default_value_t = SearchBackend::Dvs)]
    pub backend: SearchBackend,
    /// Document ranking: `first` or `count`.
    #[arg(long, default_value_t = RankMode::First)]
    pub rank: RankMode,
    /// Documents to return.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub ef_search: usize,
    /// Use indexes built for this split.
    #[arg(long)]
    pub split: Option<SplitName>,
    #[command(flatten)]
    pub mlt: MltArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, default_value_t = SplitName::Test)]
    pub split: SplitName,
    /// Backends to evaluate (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [SearchBackend::MltDoc, SearchBackend::MltPara, SearchBackend::Dvs])]
    pub backend: Vec<SearchBackend>,
    /// Rank modes to evaluate (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [RankMode::First, RankMode::Count])]
    pub rank: Vec<RankMode>,
    /// `first-paragraph` or `random-paragraph`.
    #[arg(long, default_value_t = QueryPolicy::FirstParagraph)]
    pub query_policy: QueryPolicy,
    #[arg(long, default_value_t = 10)]
    pub k_min: usize,
    #[arg(long, default_value_t = 300)]
    pub k_max: usize,
    #[arg(long, default_value_t = 10)]
    pub k_step: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Average over queries instead of per topic.
    #[arg(long)]
    pub per_query: bool,
    #[arg(long, default_value_t = 100)]
    pub ef_search: usize,
    #[command(flatten)]
    pub mlt: MltArgs,
    /// CSV output path; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Strategies (comma separated): none, keyword-expansion, rocchio, average, sum.
    #[arg(long, value_delimiter = ',', default_values_t = [StrategyKind::Sum])]
    pub strategy: Vec<StrategyKind>,
    /// Cumulative settings to sweep (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [true], action = clap::ArgAction::Set)]
    pub cumulative: Vec<bool>,
    /// Amplification settings to sweep (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [false], action = clap::ArgAction::Set)]
    pub amplify: Vec<bool>,
    /// Rocchio weight of the original query.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Rocchio weight of the positive centroid.
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Keywords taken from each accepted document.
    #[arg(long, default_value_t = 3)]
    pub keywords_per_doc: usize,
    #[arg(long, value_enum, default_value_t = AverageModeArg::Sequential)]
    pub average_mode: AverageModeArg,
    #[arg(long, default_value_t = 0.8)]
    pub target_recall: f64,
    /// Documents per batch.
    #[arg(long, default_value_t = 10)]
    pub batch: usize,
    #[arg(long, default_value_t = RankMode::First)]
    pub rank: RankMode,
    /// `exact` or `hnsw`.
    #[arg(long, default_value_t = BackendKind::Exact)]
    pub backend: BackendKind,
    #[arg(long, default_value_t = 100)]
    pub ef_search: usize,
    #[arg(long, default_value_t = SplitName::Test)]
    pub split: SplitName,
    /// Query documents per topic; every document when absent.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = QueryPolicy::FirstParagraph)]
    pub query_policy: QueryPolicy,
    /// CSV output path; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Per-session JSON records.
    #[arg(long)]
    pub sessions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AverageModeArg {
    Sequential,
    Global,
}

impl From<AverageModeArg> for AverageMode {
    fn from(a: AverageModeArg) -> Self {
        match a {
            AverageModeArg::Sequential => AverageMode::Sequential,
            AverageModeArg::Global => AverageMode::Global,
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// `exact` or `hnsw`.
    #[arg(long, default_value_t = BackendKind::Exact)]
    pub backend: BackendKind,
    #[arg(long, default_value_t = 10)]
    pub batch: usize,
    #[arg(long, default_value_t = RankMode::First)]
    pub rank: RankMode,
    #[arg(long, default_value_t = 100)]
    pub ef_search: usize,
    /// Serve this split's indexes and report recall against its labels.
    #[arg(long)]
    pub split: Option<SplitName>,
    /// Session log; defaults to `sessions.log` in the workspace.
    #[arg(long)]
    pub session_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    pub topics: usize,
    #[arg(long, default_value_t = 300)]
    pub docs_per_topic: usize,
    #[arg(long, default_value_t = 1)]
    pub paragraphs_per_doc: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Weight of the direction all topic centroids share.
    #[arg(long, default_value_t = 1.0)]
    pub shared_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub doc_noise: f64,
    #[arg(long, default_value_t = 0.5)]
    pub paragraph_noise: f64,
    #[arg(long, default_value_t = 60)]
    pub topic_vocabulary: usize,
    #[arg(long, default_value_t = 600)]
    pub shared_vocabulary: usize,
    #[arg(long, default_value_t = 0.25)]
    pub topic_word_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
