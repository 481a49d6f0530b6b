//! Run configuration: an optional TOML or JSON file merged with flags.
//!
//! ```toml
//! corpus = "ingested"
//! backend = "replay"
//! replay = "fixtures/replay.jsonl"
//!
//! [pipeline]
//! shots = 3
//! stage = "full"
//! ```
//!
//! Relative paths in the file are resolved against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use docrel_core::corpus::Split;
use docrel_core::pipeline::RunConfig;
use serde::Deserialize;

use crate::{BackendKind, EmbedArgs, EmbedKind, RunArgs};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    corpus: Option<PathBuf>,
    pool: Option<PathBuf>,
    relinfo: Option<PathBuf>,
    split: Option<Split>,
    backend: Option<BackendKind>,
    endpoint: Option<String>,
    replay: Option<PathBuf>,
    embed_backend: Option<EmbedKind>,
    embed_endpoint: Option<String>,
    embed_model: Option<String>,
    embed_dim: Option<usize>,
    embed_seed: Option<u64>,
    pipeline: RunConfig,
}

/// Everything `run` needs once file and flags are merged.
#[derive(Debug)]
pub struct ResolvedRun {
    pub corpus: PathBuf,
    pub pool: Option<PathBuf>,
    pub relinfo: Option<PathBuf>,
    pub split: Split,
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub replay: Option<PathBuf>,
    pub embed: EmbedArgs,
    pub pipeline: RunConfig,
    pub out: PathBuf,
}

fn load_file(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let mut cfg: FileConfig = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text).with_context(|| format!("config {}", path.display()))?,
        _ => toml::from_str(&text).with_context(|| format!("config {}", path.display()))?,
    };
    let base = path.parent().unwrap_or(Path::new("."));
    for p in [&mut cfg.corpus, &mut cfg.pool, &mut cfg.relinfo, &mut cfg.replay]
        .into_iter()
        .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

pub fn resolve(args: &RunArgs) -> Result<ResolvedRun> {
    let file = match &args.config {
        Some(p) => load_file(p)?,
        None => FileConfig::default(),
    };
    let mut pipeline = file.pipeline;
    macro_rules! flag {
        ($field:ident) => {
            if let Some(v) = args.$field.clone() {
                pipeline.$field = v;
            }
        };
    }
    flag!(shots);
    flag!(group);
    flag!(stage);
    flag!(model);
    flag!(temperature);
    flag!(concurrency);
    flag!(seed);
    flag!(budget_tokens);
    if args.ensemble_shots.is_some() {
        pipeline.ensemble_shots = args.ensemble_shots;
    }
    if args.sample_per_group.is_some() {
        pipeline.sample_per_group = args.sample_per_group;
    }
    if args.max_docs.is_some() {
        pipeline.max_docs = args.max_docs;
    }

    let Some(corpus) = args.corpus.clone().or(file.corpus) else {
        bail!("no corpus given (--corpus or `corpus` in the config file)");
    };
    let Some(backend) = args.backend.or(file.backend) else {
        bail!("no backend given (--backend http|replay or `backend` in the config file)");
    };
    let e = &args.embed;
    Ok(ResolvedRun {
        corpus,
        pool: args.pool.clone().or(file.pool),
        relinfo: args.relinfo.clone().or(file.relinfo),
        split: args.split.or(file.split).unwrap_or(Split::Test),
        backend,
        endpoint: args.endpoint.clone().or(file.endpoint),
        replay: args.replay.clone().or(file.replay),
        embed: EmbedArgs {
            embed_backend: e.embed_backend.or(file.embed_backend),
            embed_endpoint: e.embed_endpoint.clone().or(file.embed_endpoint),
            embed_model: e.embed_model.clone().or(file.embed_model),
            embed_dim: e.embed_dim.or(file.embed_dim),
            embed_seed: e.embed_seed.or(file.embed_seed),
        },
        pipeline,
        out: args.out.clone(),
    })
}
