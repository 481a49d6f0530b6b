//! End-to-end run over a set of target documents: decomposed prompting per
//! relation type, verification, and graph-enhanced re-prompting of missing
//! pairs. Every run writes its artifacts to a run directory:
//!
//! ```text
//! manifest.json           config, hashes, backend ids, timings, failures
//! prompts/<doc>.jsonl     every prompt sent, with its cache key
//! generations/cache.jsonl response cache (re-runs are served from here)
//! triplets.jsonl          every accepted triplet with its disposition
//! verifier.json           per-document verifier reports and defects
//! subgraphs/<doc>_<h>_<t>.json
//! metrics.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{DensityGroup, Document, QueryMode, QueryPair};
use crate::extract::{parse_generation, parse_mask_answer, Defect, DefectCounts, Stage, Triplet};
use crate::gog::{association_subgraph, build_graph, AssociationSubgraph, GogError, SubgraphParams};
use crate::icl::{demos_for_type, demos_random};
use crate::llm::{
    cache_key, CachedGenerator, Embedder, GenerationRequest, Generator, LlmError, ResponseCache,
    DECOMPOSED_MAX_NEW_TOKENS, DEFAULT_TEMPERATURE, GRAPH_MAX_NEW_TOKENS,
};
use crate::metrics::{evaluate, DocEval, MetricsReport, RateCounts, UniquenessMode};
use crate::par::Parallelism;
use crate::prompts::{
    build_decomposed_prompt, build_ensemble_baseline_prompt, build_graph_ensemble_prompt, Prompt, PromptError,
    DEFAULT_BUDGET_TOKENS,
};
use crate::relmeta::{RelationRegistry, RelationType};
use crate::verifier::{verify, OutlierParams, VerifierError, VerifierReport};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRIPLETS_FILE: &str = "triplets.jsonl";
pub const VERIFIER_FILE: &str = "verifier.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const CACHE_FILE: &str = "generations/cache.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupFilter {
    #[default]
    All,
    Sparse,
    Normal,
    Dense,
}

impl GroupFilter {
    pub fn admits(self, group: DensityGroup) -> bool {
        match self {
            GroupFilter::All => true,
            GroupFilter::Sparse => group == DensityGroup::Sparse,
            GroupFilter::Normal => group == DensityGroup::Normal,
            GroupFilter::Dense => group == DensityGroup::Dense,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageMode {
    /// Decomposed prompting and verification only.
    Decomposed,
    /// Decomposed prompting, verification and graph-ensemble filling.
    #[default]
    Full,
    /// One ensemble prompt per document with the whole relation list.
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Demos per decomposed prompt.
    pub shots: usize,
    /// Demos per graph-ensemble or baseline prompt; defaults to `shots`.
    pub ensemble_shots: Option<usize>,
    pub group: GroupFilter,
    pub stage: StageMode,
    /// Seeded sample of this many documents per density group.
    pub sample_per_group: Option<usize>,
    pub max_docs: Option<usize>,
    pub model: String,
    pub temperature: f64,
    pub concurrency: usize,
    pub seed: u64,
    pub budget_tokens: usize,
    pub verifier: OutlierParams,
    pub subgraph: SubgraphParams,
    pub query_mode: QueryMode,
    pub uniqueness: UniquenessMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            shots: 3,
            ensemble_shots: None,
            group: GroupFilter::All,
            stage: StageMode::Full,
            sample_per_group: None,
            max_docs: None,
            model: "default".into(),
            temperature: DEFAULT_TEMPERATURE,
            concurrency: 8,
            seed: 0,
            budget_tokens: DEFAULT_BUDGET_TOKENS,
            verifier: OutlierParams::default(),
            subgraph: SubgraphParams::default(),
            query_mode: QueryMode::default(),
            uniqueness: UniquenessMode::default(),
        }
    }
}

impl RunConfig {
    pub fn ensemble_shots(&self) -> usize {
        self.ensemble_shots.unwrap_or(self.shots)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seed for one sub-task, derived from the run seed and string labels.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Applies the group filter, the optional per-group sample and `max_docs`,
/// keeping corpus order.
pub fn select_documents<'a>(docs: &'a [Document], config: &RunConfig) -> Vec<&'a Document> {
    let admitted: Vec<&Document> = docs.iter().filter(|d| config.group.admits(d.density_group())).collect();
    let mut chosen: Vec<&Document> = match config.sample_per_group {
        None => admitted,
        Some(n) => {
            let mut keep = BTreeSet::new();
            for group in [DensityGroup::Sparse, DensityGroup::Normal, DensityGroup::Dense] {
                let members: Vec<usize> = (0..admitted.len())
                    .filter(|&i| admitted[i].density_group() == group)
                    .collect();
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &["group-sample", group.as_str()]));
                for j in sample(&mut rng, members.len(), n.min(members.len())) {
                    keep.insert(members[j]);
                }
            }
            keep.into_iter().map(|i| admitted[i]).collect()
        }
    };
    if let Some(m) = config.max_docs {
        chosen.truncate(m);
    }
    chosen
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("JSON encoding: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
enum DocError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error(transparent)]
    Graph(#[from] GogError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocFailure {
    pub doc_id: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub cache_key: String,
    #[serde(flatten)]
    pub prompt: Prompt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    /// Decomposed-stage triplet that passed verification.
    Kept,
    /// Decomposed-stage triplet flagged by LOF.
    Outlier,
    /// Graph-ensemble answer for a missing pair.
    Filled,
    /// Graph-ensemble answer "no relation"; not a prediction.
    NaAnswer,
    /// Ensemble-baseline triplet.
    Baseline,
}

impl Disposition {
    pub fn is_prediction(self) -> bool {
        matches!(self, Disposition::Kept | Disposition::Filled | Disposition::Baseline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub doc_id: String,
    pub disposition: Disposition,
    pub lof: Option<f64>,
    pub triplet: Triplet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub doc_id: String,
    pub missing: QueryPair,
    pub subgraph: AssociationSubgraph,
    pub cache_key: String,
    pub response: String,
    pub answer: Option<Triplet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidDefect {
    pub rid: Option<String>,
    #[serde(flatten)]
    pub defect: Defect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocVerification {
    pub doc_id: String,
    pub failed: bool,
    pub report: Option<VerifierReport>,
    pub defects: Vec<RidDefect>,
    /// Missing pairs left after the ensemble stage.
    pub final_missing: Vec<QueryPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config: RunConfig,
    pub config_hash: String,
    /// Caller-supplied provenance such as corpus file hashes.
    pub inputs: serde_json::Value,
    pub registry_hash: String,
    pub backend_id: String,
    pub embedder_id: String,
    pub pool_size: usize,
    pub doc_ids: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub backend_calls: u64,
    pub prompt_count: usize,
    pub failures: Vec<DocFailure>,
}

pub struct PipelineInputs<'a> {
    /// Target documents in run order.
    pub docs: &'a [&'a Document],
    /// Prototype pool documents.
    pub pool: &'a [&'a Document],
    pub registry: &'a RelationRegistry,
    pub generator: &'a dyn Generator,
    pub embedder: &'a dyn Embedder,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub manifest: Manifest,
    pub metrics: MetricsReport,
    pub triplets: Vec<TripletRecord>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let mut bytes = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut bytes, r)?;
        bytes.push(b'\n');
    }
    write_file(path, &bytes)
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Per-document state carried between stages.
struct DocState<'a> {
    doc: &'a Document,
    prompts: Vec<PromptRecord>,
    accepted: Vec<Triplet>,
    defects: Vec<RidDefect>,
    defect_counts: DefectCounts,
    report: Option<VerifierReport>,
    ensemble: Vec<EnsembleRecord>,
    failure: Option<DocFailure>,
}

impl<'a> DocState<'a> {
    fn new(doc: &'a Document) -> Self {
        Self {
            doc,
            prompts: Vec::new(),
            accepted: Vec::new(),
            defects: Vec::new(),
            defect_counts: DefectCounts::default(),
            report: None,
            ensemble: Vec::new(),
            failure: None,
        }
    }

    fn fail(&mut self, stage: &str, err: impl std::fmt::Display) {
        if self.failure.is_none() {
            log::warn!("{}: {stage} failed: {err}", self.doc.doc_id);
            self.failure = Some(DocFailure {
                doc_id: self.doc.doc_id.clone(),
                stage: stage.to_string(),
                error: err.to_string(),
            });
        }
    }
}

struct Ctx<'a> {
    config: &'a RunConfig,
    inputs: &'a PipelineInputs<'a>,
    generator: &'a dyn Generator,
}

impl Ctx<'_> {
    fn request(&self, prompt: &Prompt, max_new_tokens: u32) -> GenerationRequest {
        let mut req = GenerationRequest::new(&self.config.model, &prompt.text, max_new_tokens);
        req.temperature = self.config.temperature;
        req.seed = Some(self.config.seed);
        req
    }

    fn decomposed_unit(&self, doc: &Document, rel: &RelationType) -> Result<(PromptRecord, crate::extract::ParseReport), DocError> {
        let demos = demos_for_type(
            self.inputs.pool,
            rel,
            self.config.shots,
            derive_seed(self.config.seed, &["decomposed", &rel.rid]),
        );
        let prompt = build_decomposed_prompt(rel, &demos, doc, self.inputs.registry, self.config.budget_tokens)?;
        let req = self.request(&prompt, DECOMPOSED_MAX_NEW_TOKENS);
        let key = cache_key(&req);
        let resp = self.generator.generate(&req)?;
        let stage = Stage::Decomposed { rid: rel.rid.clone() };
        let report = parse_generation(&resp.text, doc, &stage, self.inputs.registry);
        Ok((PromptRecord { cache_key: key, prompt }, report))
    }

    fn baseline_unit(&self, doc: &Document) -> Result<(PromptRecord, crate::extract::ParseReport), DocError> {
        let demos = demos_random(
            self.inputs.pool,
            self.inputs.registry,
            self.config.ensemble_shots(),
            derive_seed(self.config.seed, &["baseline"]),
        );
        let prompt = build_ensemble_baseline_prompt(self.inputs.registry, &demos, doc, self.config.budget_tokens)?;
        let req = self.request(&prompt, DECOMPOSED_MAX_NEW_TOKENS);
        let key = cache_key(&req);
        let resp = self.generator.generate(&req)?;
        let report = parse_generation(&resp.text, doc, &Stage::EnsembleBaseline, self.inputs.registry);
        Ok((PromptRecord { cache_key: key, prompt }, report))
    }

    fn ensemble_unit(
        &self,
        doc: &Document,
        kept: &[Triplet],
        missing: QueryPair,
    ) -> Result<(PromptRecord, EnsembleRecord), DocError> {
        let graph = build_graph(kept, doc)?;
        let sub = association_subgraph(&graph, missing, doc, &self.config.subgraph);
        let pair_label = format!("{}-{}", missing.head, missing.tail);
        let demos = demos_random(
            self.inputs.pool,
            self.inputs.registry,
            self.config.ensemble_shots(),
            derive_seed(self.config.seed, &["ensemble", &doc.doc_id, &pair_label]),
        );
        let prompt = build_graph_ensemble_prompt(
            self.inputs.registry,
            &sub,
            missing,
            doc,
            &demos,
            self.config.budget_tokens,
        )?;
        let req = self.request(&prompt, GRAPH_MAX_NEW_TOKENS);
        let key = cache_key(&req);
        let resp = self.generator.generate(&req)?;
        let answer = parse_mask_answer(&resp.text, missing, doc, self.inputs.registry);
        Ok((
            PromptRecord {
                cache_key: key.clone(),
                prompt,
            },
            EnsembleRecord {
                doc_id: doc.doc_id.clone(),
                missing,
                subgraph: sub,
                cache_key: key,
                response: resp.text,
                answer,
            },
        ))
    }
}

fn absorb_report(state: &mut DocState<'_>, rid: Option<&str>, report: crate::extract::ParseReport) {
    state.defect_counts.add(&report.defect_counts());
    state.defects.extend(report.defects.into_iter().map(|defect| RidDefect {
        rid: rid.map(str::to_string),
        defect,
    }));
    state.accepted.extend(report.triplets);
}

/// Runs every stage for `inputs.docs` and writes the run directory. Errors in
/// one document are recorded and never stop the others; only I/O on the run
/// directory and metric computation abort the run.
pub fn run_pipeline(
    config: &RunConfig,
    inputs: &PipelineInputs<'_>,
    run_dir: &Path,
    provenance: serde_json::Value,
) -> Result<RunSummary, PipelineError> {
    let started = now_unix();
    for sub in ["prompts", "generations", "subgraphs"] {
        let p = run_dir.join(sub);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    // Stale per-pair files from an earlier run of another config would be misleading.
    let sub_dir = run_dir.join("subgraphs");
    for entry in fs::read_dir(&sub_dir).map_err(io_err(&sub_dir))? {
        let path = entry.map_err(io_err(&sub_dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
    }
    let cache = ResponseCache::open(&run_dir.join(CACHE_FILE))?;
    let cached = CachedGenerator::new(inputs.generator, cache);
    let ctx = Ctx {
        config,
        inputs,
        generator: &cached,
    };
    let par = Parallelism::with_threads(config.concurrency);
    let mut states: Vec<DocState> = inputs.docs.iter().map(|d| DocState::new(d)).collect();

    // Stage 1.
    if config.stage == StageMode::Baseline {
        let results = par.map(inputs.docs, |doc| ctx.baseline_unit(doc));
        for (state, result) in states.iter_mut().zip(results) {
            match result {
                Ok((prompt, report)) => {
                    state.prompts.push(prompt);
                    absorb_report(state, None, report);
                }
                Err(e) => state.fail("baseline", e),
            }
        }
    } else {
        let relations: Vec<&RelationType> = inputs.registry.non_na().collect();
        let units: Vec<(usize, usize)> = (0..inputs.docs.len())
            .flat_map(|d| (0..relations.len()).map(move |r| (d, r)))
            .collect();
        let results = par.map(&units, |&(d, r)| ctx.decomposed_unit(inputs.docs[d], relations[r]));
        for (&(d, r), result) in units.iter().zip(results) {
            let state = &mut states[d];
            match result {
                Ok((prompt, report)) => {
                    state.prompts.push(prompt);
                    absorb_report(state, Some(&relations[r].rid), report);
                }
                Err(e) => state.fail("decomposed", e),
            }
        }
    }

    log::info!("stage 1 done: {} documents", states.len());

    // Stage 2.
    let verifier_params = if config.stage == StageMode::Baseline {
        // The baseline keeps everything it parses; only missing pairs are reported.
        OutlierParams {
            min_group: usize::MAX,
            ..config.verifier
        }
    } else {
        config.verifier
    };
    let reports = par.map(&states, |s| {
        if s.failure.is_some() {
            return None;
        }
        let q = s.doc.query_pairs_with(config.query_mode);
        Some(verify(
            &s.doc.doc_id,
            &s.accepted,
            s.defect_counts,
            &q,
            inputs.embedder,
            &verifier_params,
            Parallelism::Sequential,
        ))
    });
    for (state, report) in states.iter_mut().zip(reports) {
        match report {
            None => {}
            Some(Ok(r)) => state.report = Some(r),
            Some(Err(e)) => state.fail("verify", e),
        }
    }

    log::info!(
        "verified: {} outliers",
        states.iter().filter_map(|s| s.report.as_ref()).map(|r| r.outliers.len()).sum::<usize>()
    );

    // Stage 3.
    if config.stage == StageMode::Full {
        let units: Vec<(usize, QueryPair)> = states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.failure.is_none())
            .flat_map(|(d, s)| {
                s.report
                    .as_ref()
                    .map(|r| r.missing.clone())
                    .unwrap_or_default()
                    .into_iter()
                    .map(move |p| (d, p))
            })
            .collect();
        log::info!("stage 3: {} unresolved pairs", units.len());
        let results = par.map(&units, |&(d, pair)| {
            let s = &states[d];
            let kept = s.report.as_ref().map(|r| r.kept.as_slice()).unwrap_or(&[]);
            ctx.ensemble_unit(s.doc, kept, pair)
        });
        for (&(d, _), result) in units.iter().zip(results) {
            let state = &mut states[d];
            match result {
                Ok((prompt, record)) => {
                    state.prompts.push(prompt);
                    state.ensemble.push(record);
                }
                Err(e) => state.fail("ensemble", e),
            }
        }
    }

    // Assembly, single-threaded and in document order.
    let mut triplets: Vec<TripletRecord> = Vec::new();
    let mut verifications: Vec<DocVerification> = Vec::new();
    let mut predictions: Vec<Vec<Triplet>> = Vec::new();
    let mut counts = RateCounts::default();
    let mut failures = Vec::new();
    let mut prompt_count = 0;

    for state in &states {
        let doc_id = &state.doc.doc_id;
        prompt_count += state.prompts.len();
        let prompt_path = run_dir.join("prompts").join(format!("{doc_id}.jsonl"));
        write_jsonl(&prompt_path, &state.prompts)?;

        let query_pairs = state.doc.query_pairs_with(config.query_mode);
        let q_len = query_pairs.len();
        if let Some(f) = &state.failure {
            failures.push(f.clone());
            // Nothing of a failed document counts as found.
            verifications.push(DocVerification {
                doc_id: doc_id.clone(),
                failed: true,
                report: None,
                defects: state.defects.clone(),
                final_missing: query_pairs,
            });
            predictions.push(Vec::new());
            counts.query_pairs += q_len;
            counts.missing += q_len;
            continue;
        }
        let report = state.report.as_ref().expect("verified when not failed");
        let mut preds = Vec::new();
        for s in &report.scored {
            let disposition = match (s.outlier, config.stage) {
                (true, _) => Disposition::Outlier,
                (false, StageMode::Baseline) => Disposition::Baseline,
                (false, _) => Disposition::Kept,
            };
            if disposition.is_prediction() {
                preds.push(s.triplet.clone());
            }
            triplets.push(TripletRecord {
                doc_id: doc_id.clone(),
                disposition,
                lof: s.lof,
                triplet: s.triplet.clone(),
            });
        }
        let mut filled: BTreeSet<QueryPair> = BTreeSet::new();
        for rec in &state.ensemble {
            let path = run_dir
                .join("subgraphs")
                .join(format!("{doc_id}_{}_{}.json", rec.missing.head, rec.missing.tail));
            write_json(&path, rec)?;
            if let Some(answer) = &rec.answer {
                let disposition = if answer.is_na() {
                    Disposition::NaAnswer
                } else {
                    filled.insert(rec.missing);
                    preds.push(answer.clone());
                    Disposition::Filled
                };
                triplets.push(TripletRecord {
                    doc_id: doc_id.clone(),
                    disposition,
                    lof: None,
                    triplet: answer.clone(),
                });
            }
        }
        let final_missing: Vec<QueryPair> = report.missing.iter().copied().filter(|p| !filled.contains(p)).collect();
        counts.outliers += report.outliers.len();
        counts.accepted += report.accepted_count;
        counts.missing += final_missing.len();
        counts.query_pairs += q_len;
        verifications.push(DocVerification {
            doc_id: doc_id.clone(),
            failed: false,
            report: Some(report.clone()),
            defects: state.defects.clone(),
            final_missing,
        });
        predictions.push(preds);
    }

    write_jsonl(&run_dir.join(TRIPLETS_FILE), &triplets)?;
    write_json(&run_dir.join(VERIFIER_FILE), &verifications)?;

    let items: Vec<DocEval> = inputs
        .docs
        .iter()
        .zip(&predictions)
        .map(|(doc, preds)| DocEval { doc, preds })
        .collect();
    let metrics = evaluate(&items, inputs.registry, inputs.embedder, None, config.uniqueness, counts)?;
    write_json(&run_dir.join(METRICS_FILE), &metrics)?;

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        config_hash: config.hash(),
        inputs: provenance,
        registry_hash: sha256_hex(&serde_json::to_vec(&inputs.registry.iter().collect::<Vec<_>>())?),
        backend_id: inputs.generator.backend_id(),
        embedder_id: inputs.embedder.embedder_id(),
        pool_size: inputs.pool.len(),
        doc_ids: inputs.docs.iter().map(|d| d.doc_id.clone()).collect(),
        started_unix: started,
        finished_unix: now_unix(),
        backend_calls: cached.backend_calls(),
        prompt_count,
        failures,
    };
    write_json(&run_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(RunSummary {
        run_dir: run_dir.to_path_buf(),
        manifest,
        metrics,
        triplets,
    })
}

/// Verifier counts pooled over a run's verifier file contents, the same
/// counts the run itself fed into its metrics. A failed document contributes
/// all its query pairs as missing.
pub fn rate_counts(verifications: &[DocVerification]) -> RateCounts {
    let mut c = RateCounts::default();
    for v in verifications {
        c.missing += v.final_missing.len();
        match &v.report {
            Some(r) => {
                c.outliers += r.outliers.len();
                c.accepted += r.accepted_count;
                c.query_pairs += r.query_pairs.len();
            }
            None => c.query_pairs += v.final_missing.len(),
        }
    }
    c
}

/// Loaded artifacts of a finished run.
pub struct RunArtifacts {
    pub manifest: Manifest,
    pub triplets: Vec<TripletRecord>,
    pub verifications: Vec<DocVerification>,
}

pub fn load_run(run_dir: &Path) -> Result<RunArtifacts, PipelineError> {
    let read = |name: &str| {
        let p = run_dir.join(name);
        fs::read_to_string(&p).map_err(|source| PipelineError::Io { path: p, source })
    };
    let manifest: Manifest = serde_json::from_str(&read(MANIFEST_FILE)?)?;
    let verifications: Vec<DocVerification> = serde_json::from_str(&read(VERIFIER_FILE)?)?;
    let triplets = read(TRIPLETS_FILE)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<Vec<TripletRecord>, _>>()?;
    Ok(RunArtifacts {
        manifest,
        triplets,
        verifications,
    })
}

/// Final predictions per document id, in record order.
pub fn predictions_by_doc(triplets: &[TripletRecord]) -> BTreeMap<String, Vec<Triplet>> {
    let mut out: BTreeMap<String, Vec<Triplet>> = BTreeMap::new();
    for r in triplets.iter().filter(|r| r.disposition.is_prediction()) {
        out.entry(r.doc_id.clone()).or_default().push(r.triplet.clone());
    }
    out
}
