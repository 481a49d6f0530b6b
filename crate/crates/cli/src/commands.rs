use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use docrel_core::corpus::{load_corpus, Corpus, Document, Split};
use docrel_core::icl::{build_pool, PrototypePool};
use docrel_core::llm::{CachedGenerator, HttpBackend, HttpConfig, ReplayBackend, ResponseCache};
use docrel_core::metrics::{evaluate as score, render_macro_table, render_main_table, DocEval, Judge, LlmJudge, MetricsReport};
use docrel_core::par::Parallelism;
use docrel_core::pipeline::{
    load_run, predictions_by_doc, rate_counts, run_pipeline, select_documents, sha256_hex, PipelineInputs,
    METRICS_FILE,
};
use docrel_core::relmeta::{load_registry, RelationRegistry, BUILTIN_REL_INFO};
use serde_json::{json, Value};

use crate::{backends, config, EvaluateArgs, IngestArgs, JudgeKind, PoolArgs, ReportArgs, ReportFormat, RunArgs};

const CORPUS_FILE: &str = "corpus.json";
const STATS_FILE: &str = "stats.json";
const RELINFO_FILE: &str = "rel_info.json";
const JUDGE_CACHE_FILE: &str = "generations/judge_cache.jsonl";

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("path not found: {}", path.display());
    }
    Ok(())
}

fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Accepts an ingest output directory or the corpus file inside it.
fn corpus_file(path: &Path) -> Result<PathBuf> {
    require(path)?;
    let file = if path.is_dir() { path.join(CORPUS_FILE) } else { path.to_path_buf() };
    require(&file)?;
    Ok(file)
}

fn read_corpus(path: &Path) -> Result<(PathBuf, Corpus)> {
    let file = corpus_file(path)?;
    let text = fs::read_to_string(&file).with_context(|| format!("cannot read {}", file.display()))?;
    let corpus = serde_json::from_str(&text).with_context(|| format!("{} is not an ingested corpus", file.display()))?;
    Ok((file, corpus))
}

fn registry(relinfo: Option<&Path>) -> Result<RelationRegistry> {
    match relinfo {
        Some(p) => {
            require(p)?;
            load_registry(p).with_context(|| format!("relation metadata {}", p.display()))
        }
        None => Ok(RelationRegistry::builtin()),
    }
}

/// Writes to stdout; a closed pipe (`docrel report | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn file_record(path: &Path) -> Result<Value> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(json!({"path": path.display().to_string(), "sha256": sha256_hex(&bytes)}))
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    for p in [&args.train, &args.dev, &args.test] {
        require(p)?;
    }
    let registry = registry(args.relinfo.as_deref())?;
    let corpus = load_corpus(&args.train, &args.dev, &args.test)?;
    for split in [Split::Train, Split::Dev, Split::Test] {
        for doc in corpus.split(split) {
            if let Some(g) = doc.gold.iter().find(|g| registry.get(&g.relation).is_none()) {
                bail!("{}: gold relation {} is not in the relation metadata", doc.doc_id, g.relation);
            }
        }
    }
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write_json(&args.out.join(CORPUS_FILE), &corpus)?;
    let stats = corpus.stats();
    write_json(&args.out.join(STATS_FILE), &stats)?;
    let relinfo = match &args.relinfo {
        Some(p) => fs::read_to_string(p)?,
        None => BUILTIN_REL_INFO.to_string(),
    };
    fs::write(args.out.join(RELINFO_FILE), relinfo)?;

    println!("split  docs  words/doc  entities/doc  triplets/doc  pairs/doc  sparse/normal/dense");
    for (name, s) in [("train", &stats.train), ("dev", &stats.dev), ("test", &stats.test)] {
        println!(
            "{name:<5} {:>5} {:>10.1} {:>13.1} {:>13.1} {:>10.1}  {}/{}/{}",
            s.documents, s.mean_words, s.mean_entities, s.mean_triplets, s.mean_query_pairs, s.sparse, s.normal, s.dense
        );
    }
    Ok(())
}

pub fn pool(args: &PoolArgs) -> Result<()> {
    let (_, corpus) = read_corpus(&args.corpus)?;
    let embedder = backends::embedder(&args.embed)?;
    let pool = build_pool(
        &corpus.train,
        embedder.as_ref(),
        args.knn,
        args.size,
        args.seed,
        Parallelism::default(),
    )?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_json(&args.out, &pool)?;
    println!(
        "selected {} of {} training documents into {}",
        pool.doc_ids.len(),
        corpus.train.len(),
        args.out.display()
    );
    Ok(())
}

pub fn run(args: &RunArgs) -> Result<()> {
    let cfg = config::resolve(args)?;
    for p in [&cfg.pool, &cfg.relinfo, &cfg.replay].into_iter().flatten() {
        require(p)?;
    }
    let (corpus_path, corpus) = read_corpus(&cfg.corpus)?;
    let registry = registry(cfg.relinfo.as_deref())?;

    let pool_docs: Vec<&Document> = match &cfg.pool {
        Some(p) => {
            let pool: PrototypePool = serde_json::from_str(&fs::read_to_string(p)?)
                .with_context(|| format!("{} is not a pool file", p.display()))?;
            let docs = pool.documents(&corpus.train);
            if docs.len() != pool.doc_ids.len() {
                bail!(
                    "pool {} names {} documents absent from the training split",
                    p.display(),
                    pool.doc_ids.len() - docs.len()
                );
            }
            docs
        }
        None => {
            log::warn!("no --pool given; every training document is a demonstration candidate");
            corpus.train.iter().collect()
        }
    };
    let docs = select_documents(corpus.split(cfg.split), &cfg.pipeline);
    if docs.is_empty() {
        bail!("no {} documents pass the group filter", cfg.split.as_str());
    }

    let generator = backends::generator(cfg.backend, cfg.endpoint.as_deref(), cfg.replay.as_deref())?;
    let embedder = backends::embedder(&cfg.embed)?;
    let optional = |p: &Option<PathBuf>| -> Result<Value> { p.as_deref().map_or(Ok(Value::Null), file_record) };
    let provenance = json!({
        "corpus": file_record(&corpus_path)?,
        "split": cfg.split.as_str(),
        "pool": optional(&cfg.pool)?,
        "relinfo": optional(&cfg.relinfo)?,
        "replay": optional(&cfg.replay)?,
        "endpoint": cfg.endpoint,
    });
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    let inputs = PipelineInputs {
        docs: &docs,
        pool: &pool_docs,
        registry: &registry,
        generator: generator.as_ref(),
        embedder: embedder.as_ref(),
    };
    let summary = run_pipeline(&cfg.pipeline, &inputs, &cfg.out, provenance)?;
    let m = &summary.metrics;
    println!(
        "{}: {} documents, {} prompts, {} backend calls, {} failures",
        cfg.out.display(),
        docs.len(),
        summary.manifest.prompt_count,
        summary.manifest.backend_calls,
        summary.manifest.failures.len()
    );
    println!(
        "micro P/R/F1 {:.2}/{:.2}/{:.2}  outlier rate {:.2}%  missing rate {:.2}%",
        100.0 * m.micro.precision,
        100.0 * m.micro.recall,
        100.0 * m.micro.f1,
        100.0 * m.outlier_rate,
        100.0 * m.missing_rate
    );
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    require(&args.run)?;
    let artifacts = load_run(&args.run)?;
    let manifest = &artifacts.manifest;
    let gold_path = match &args.gold {
        Some(p) => p.clone(),
        None => match manifest.inputs["corpus"]["path"].as_str() {
            Some(p) => PathBuf::from(p),
            None => bail!("the run manifest records no corpus; pass --gold"),
        },
    };
    let (_, corpus) = read_corpus(&gold_path)?;
    let registry = registry(args.relinfo.as_deref())?;
    let by_id: HashMap<&str, &Document> = [&corpus.train, &corpus.dev, &corpus.test]
        .into_iter()
        .flatten()
        .map(|d| (d.doc_id.as_str(), d))
        .collect();
    let preds = predictions_by_doc(&artifacts.triplets);
    let empty = Vec::new();
    let mut items = Vec::with_capacity(manifest.doc_ids.len());
    for id in &manifest.doc_ids {
        let Some(doc) = by_id.get(id.as_str()) else {
            bail!("document {id} of the run is not in {}", gold_path.display());
        };
        items.push(DocEval {
            doc,
            preds: preds.get(id).unwrap_or(&empty),
        });
    }

    let judge: Option<Box<dyn Judge>> = match args.judge {
        JudgeKind::None => None,
        JudgeKind::Http => {
            let Some(endpoint) = &args.judge_endpoint else {
                bail!("--judge-endpoint is required with --judge http");
            };
            let cache_path = args.run.join(JUDGE_CACHE_FILE);
            if let Some(dir) = cache_path.parent() {
                fs::create_dir_all(dir)?;
            }
            let backend = CachedGenerator::new(
                HttpBackend::new(HttpConfig::new(endpoint))?,
                ResponseCache::open(&cache_path)?,
            );
            Some(Box::new(LlmJudge::new(backend, args.judge_model.clone())))
        }
        JudgeKind::Replay => {
            let Some(path) = &args.judge_replay else {
                bail!("--judge-replay is required with --judge replay");
            };
            require(path)?;
            Some(Box::new(LlmJudge::new(ReplayBackend::load(path)?, args.judge_model.clone())))
        }
    };
    let embedder = backends::embedder(&args.embed)?;
    let report = score(
        &items,
        &registry,
        embedder.as_ref(),
        judge.as_deref(),
        manifest.config.uniqueness,
        rate_counts(&artifacts.verifications),
    )?;
    write_json(&args.run.join(METRICS_FILE), &report)?;
    emit(&render_main_table(&[(run_name(&args.run), report)]))
}

fn run_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

pub fn report(args: &ReportArgs) -> Result<()> {
    if !args.names.is_empty() && args.names.len() != args.runs.len() {
        bail!("{} names given for {} runs", args.names.len(), args.runs.len());
    }
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    for (i, dir) in args.runs.iter().enumerate() {
        let path = dir.join(METRICS_FILE);
        require(&path)?;
        let text = fs::read_to_string(&path)?;
        let metrics: MetricsReport =
            serde_json::from_str(&text).with_context(|| format!("{} is not a metrics file", path.display()))?;
        let name = args.names.get(i).cloned().unwrap_or_else(|| run_name(dir));
        rows.push((name, metrics));
    }
    let text = match args.format {
        ReportFormat::Md => format!("{}\n{}", render_main_table(&rows), render_macro_table(&rows)),
        ReportFormat::Json => {
            let out: Vec<Value> = rows.iter().map(|(n, m)| json!({"run": n, "metrics": m})).collect();
            serde_json::to_string_pretty(&out)? + "\n"
        }
    };
    emit(&text)
}
