mod backends;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use docrel_core::corpus::Split;
use docrel_core::pipeline::{GroupFilter, StageMode};
use serde::de::DeserializeOwned;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "docrel", version, about = "Few-shot document-level relation extraction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate DocRED-format split files and write an ingested corpus with statistics.
    Ingest(IngestArgs),
    /// Select the demonstration pool from the training split.
    Pool(PoolArgs),
    /// Run extraction, verification and gap filling over a corpus split.
    Run(Box<RunArgs>),
    /// Recompute metrics for an existing run, optionally with judge scores.
    Evaluate(EvaluateArgs),
    /// Render result tables across runs.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Relation metadata JSON; the bundled file when omitted.
    #[arg(long)]
    pub relinfo: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PoolArgs {
    /// Ingested corpus directory or its corpus.json.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = docrel_core::icl::DEFAULT_POOL_SIZE)]
    pub size: usize,
    #[arg(long, default_value_t = docrel_core::icl::DEFAULT_KNN)]
    pub knn: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub embed: EmbedArgs,
    /// Output pool JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Replay,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    #[default]
    Hashmock,
    Http,
}

#[derive(Args, Clone, Debug, Default)]
pub struct EmbedArgs {
    /// Embedding backend for pool selection, outlier scoring and topical similarity.
    #[arg(long, value_enum)]
    pub embed_backend: Option<EmbedKind>,
    #[arg(long)]
    pub embed_endpoint: Option<String>,
    #[arg(long)]
    pub embed_model: Option<String>,
    /// Expected vector size of the HTTP embedder.
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Seed of the offline hash embedder.
    #[arg(long)]
    pub embed_seed: Option<u64>,
}

fn serde_value<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Args)]
pub struct RunArgs {
    /// TOML or JSON run configuration; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ingested corpus directory or its corpus.json.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Pool JSON from `docrel pool`; every training document when omitted.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub relinfo: Option<PathBuf>,
    /// Split to extract from (train, dev or test).
    #[arg(long, value_parser = serde_value::<Split>)]
    pub split: Option<Split>,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub ensemble_shots: Option<usize>,
    /// Density group filter (all, sparse, normal or dense).
    #[arg(long, value_parser = serde_value::<GroupFilter>)]
    pub group: Option<GroupFilter>,
    /// Pipeline stages (decomposed, full or baseline).
    #[arg(long, value_parser = serde_value::<StageMode>)]
    pub stage: Option<StageMode>,
    #[arg(long)]
    pub sample_per_group: Option<usize>,
    #[arg(long)]
    pub max_docs: Option<usize>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Base URL of an OpenAI-compatible API, e.g. http://localhost:8000/v1.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Replay fixture served by `--backend replay`.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub budget_tokens: Option<usize>,
    #[command(flatten)]
    pub embed: EmbedArgs,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum JudgeKind {
    None,
    Http,
    Replay,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Corpus holding the gold labels; the corpus recorded in the run manifest when omitted.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub relinfo: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = JudgeKind::None)]
    pub judge: JudgeKind,
    #[arg(long)]
    pub judge_endpoint: Option<String>,
    #[arg(long, default_value = "default")]
    pub judge_model: String,
    #[arg(long)]
    pub judge_replay: Option<PathBuf>,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Md,
    Json,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Run directories, one table row each.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Row labels; the run directory names when omitted.
    #[arg(long, num_args = 1..)]
    pub names: Vec<String>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Md)]
    pub format: ReportFormat,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::Pool(a) => commands::pool(&a),
        Command::Run(a) => commands::run(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let reason = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {reason}");
            ExitCode::FAILURE
        }
    }
}
