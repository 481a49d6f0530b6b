//! Scoring against gold: micro/macro PRF, uniqueness (US), topical similarity
//! (TS), judge-based FS/GS/CS, and table rendering.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::extract::Triplet;
use crate::llm::{cosine, Embedder, GenerationRequest, Generator, LlmError};
use crate::relmeta::{linearize, RelationRegistry, NA_RID};

/// A scored fact: document, head index, relation id, tail index.
pub type FactKey = (String, usize, String, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub pred_count: usize,
    pub gold_count: usize,
}

impl Prf {
    pub fn from_counts(tp: usize, pred_count: usize, gold_count: usize) -> Self {
        if pred_count == 0 && gold_count == 0 {
            return Self {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                tp,
                pred_count,
                gold_count,
            };
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, pred_count);
        let recall = ratio(tp, gold_count);
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            pred_count,
            gold_count,
        }
    }
}

/// Facts of non-NA, fully resolved triplets.
pub fn pred_facts(doc_id: &str, preds: &[Triplet]) -> BTreeSet<FactKey> {
    preds
        .iter()
        .filter(|t| !t.is_na())
        .filter_map(|t| t.key().map(|(h, r, tl)| (doc_id.to_string(), h, r.to_string(), tl)))
        .collect()
}

pub fn gold_facts(doc: &Document) -> BTreeSet<FactKey> {
    doc.gold
        .iter()
        .filter(|g| g.relation != NA_RID)
        .map(|g| (doc.doc_id.clone(), g.head, g.relation.clone(), g.tail))
        .collect()
}

pub fn micro_prf(pred: &BTreeSet<FactKey>, gold: &BTreeSet<FactKey>) -> Prf {
    let pred: BTreeSet<&FactKey> = pred.iter().filter(|k| k.2 != NA_RID).collect();
    let tp = pred.iter().filter(|k| gold.contains(**k)).count();
    Prf::from_counts(tp, pred.len(), gold.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub rid: String,
    pub name: String,
    pub prf: Prf,
}

/// Macro averages over relation types with gold support, and the per-type
/// table in registry order (unknown rids last, sorted).
pub fn macro_prf(pred: &BTreeSet<FactKey>, gold: &BTreeSet<FactKey>, registry: &RelationRegistry) -> (Prf, Vec<TypeRow>) {
    let gold_types: BTreeSet<&str> = gold.iter().map(|k| k.2.as_str()).collect();
    let mut order: Vec<&str> = registry.iter().map(|r| r.rid.as_str()).filter(|r| gold_types.contains(r)).collect();
    let mut unknown: Vec<&str> = gold_types.iter().copied().filter(|r| registry.get(r).is_none()).collect();
    unknown.sort();
    order.extend(unknown);

    let rows: Vec<TypeRow> = order
        .into_iter()
        .map(|rid| {
            let g = gold.iter().filter(|k| k.2 == rid).count();
            let p: Vec<&FactKey> = pred.iter().filter(|k| k.2 == rid).collect();
            let tp = p.iter().filter(|k| gold.contains(**k)).count();
            TypeRow {
                rid: rid.to_string(),
                name: registry.name_of(rid).to_string(),
                prf: Prf::from_counts(tp, p.len(), g),
            }
        })
        .collect();

    if rows.is_empty() {
        let pred_count = pred.iter().filter(|k| k.2 != NA_RID).count();
        return (Prf::from_counts(0, pred_count, 0), rows);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&Prf) -> f64| rows.iter().map(|r| f(&r.prf)).sum::<f64>() / n;
    let macro_prf = Prf {
        precision: mean(|p| p.precision),
        recall: mean(|p| p.recall),
        f1: mean(|p| p.f1),
        tp: rows.iter().map(|r| r.prf.tp).sum(),
        pred_count: rows.iter().map(|r| r.prf.pred_count).sum(),
        gold_count: rows.iter().map(|r| r.prf.gold_count).sum(),
    };
    (macro_prf, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniquenessMode {
    /// Distinct `(head, rid, tail)` over predicted triplets.
    #[default]
    DistinctTriplets,
    /// Distinct relation ids over predicted triplets.
    DistinctRelationTypes,
}

/// Per-document uniqueness of non-NA resolved predictions; 1.0 for documents
/// without predictions. Returns the mean over documents (1.0 for none).
pub fn uniqueness(preds_by_doc: &[&[Triplet]], mode: UniquenessMode) -> f64 {
    if preds_by_doc.is_empty() {
        return 1.0;
    }
    let per_doc = preds_by_doc.iter().map(|preds| {
        let keys: Vec<(usize, &str, usize)> = preds.iter().filter(|t| !t.is_na()).filter_map(Triplet::key).collect();
        if keys.is_empty() {
            return 1.0;
        }
        let distinct = match mode {
            UniquenessMode::DistinctTriplets => keys.iter().collect::<HashSet<_>>().len(),
            UniquenessMode::DistinctRelationTypes => keys.iter().map(|k| k.1).collect::<HashSet<_>>().len(),
        };
        distinct as f64 / keys.len() as f64
    });
    per_doc.sum::<f64>() / preds_by_doc.len() as f64
}

/// One sentence per non-NA prediction, canonical relation name.
pub fn linearized_predictions(preds: &[Triplet], registry: &RelationRegistry) -> Vec<String> {
    preds
        .iter()
        .filter(|t| !t.is_na())
        .filter_map(|t| {
            let rel = registry.get(&t.rid)?;
            linearize(rel, &t.head_surface, &t.tail_surface, 0).ok()
        })
        .collect()
}

/// Cosine between the document text and its newline-joined linearized
/// predictions, clamped to [0, 1]; 0 without predictions.
pub fn topical_similarity(
    doc: &Document,
    preds: &[Triplet],
    registry: &RelationRegistry,
    embedder: &dyn Embedder,
) -> Result<f64, LlmError> {
    let lines = linearized_predictions(preds, registry);
    if lines.is_empty() {
        return Ok(0.0);
    }
    let v = embedder.embed(&[doc.plain_text(), lines.join("\n")])?;
    Ok(cosine(&v[0], &v[1]).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMetric {
    Factualness,
    Granularity,
    Completeness,
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge response has no score in [0, 1]: {0:?}")]
    Unparseable(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
}

pub trait Judge: Send + Sync {
    fn score(&self, metric: JudgeMetric, prompt: &str) -> Result<f64, JudgeError>;

    fn judge_id(&self) -> String;
}

/// Returns a fixed score per metric.
#[derive(Debug, Clone, Copy)]
pub struct MockJudge {
    pub fs: f64,
    pub gs: f64,
    pub cs: f64,
}

impl MockJudge {
    pub fn constant(score: f64) -> Self {
        Self {
            fs: score,
            gs: score,
            cs: score,
        }
    }
}

impl Judge for MockJudge {
    fn score(&self, metric: JudgeMetric, _prompt: &str) -> Result<f64, JudgeError> {
        Ok(match metric {
            JudgeMetric::Factualness => self.fs,
            JudgeMetric::Granularity => self.gs,
            JudgeMetric::Completeness => self.cs,
        })
    }

    fn judge_id(&self) -> String {
        format!("mock:{}/{}/{}", self.fs, self.gs, self.cs)
    }
}

pub const FACTUALNESS_TEMPLATE: &str = "Context: {context}\n\nTriplet: {triplet}\n\nIs the triplet entailed by the context? Answer with a single number between 0 and 1, where 1 means fully supported and 0 means contradicted or absent.\nScore:";
pub const GRANULARITY_TEMPLATE: &str = "Triplet: {triplet}\n\nCan this triple be split into finer sub-triples that each state a single relation? Answer with a single number between 0 and 1, where 1 means it is already atomic and 0 means it should be split.\nScore:";
pub const COMPLETENESS_TEMPLATE: &str = "Context: {context}\n\nExtracted triplets:\n{triplets}\n\nWhat fraction of the relational facts stated in the context is covered by the extracted triplets? Answer with a single number between 0 and 1.\nScore:";

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in pairs {
        out = out.replace(k, v);
    }
    out
}

/// First number in `text`, accepted when it lies in [0, 1].
pub fn parse_judge_score(text: &str) -> Option<f64> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() || (bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            let value: f64 = text[start..i].trim_end_matches('.').parse().ok()?;
            return (0.0..=1.0).contains(&value).then_some(value);
        }
        i += 1;
    }
    None
}

/// Scores prompts with a generation backend.
pub struct LlmJudge<G> {
    generator: G,
    model: String,
}

impl<G: Generator> LlmJudge<G> {
    pub fn new(generator: G, model: impl Into<String>) -> Self {
        Self {
            generator,
            model: model.into(),
        }
    }
}

impl<G: Generator> Judge for LlmJudge<G> {
    fn score(&self, _metric: JudgeMetric, prompt: &str) -> Result<f64, JudgeError> {
        let mut req = GenerationRequest::new(&self.model, prompt, 16);
        req.temperature = 0.0;
        let resp = self.generator.generate(&req)?;
        parse_judge_score(&resp.text).ok_or(JudgeError::Unparseable(resp.text))
    }

    fn judge_id(&self) -> String {
        format!("llm:{}:{}", self.generator.backend_id(), self.model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeFailure {
    pub doc_id: String,
    pub metric: JudgeMetric,
    pub item: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub fs: f64,
    pub gs: f64,
    pub cs: f64,
    pub failures: Vec<JudgeFailure>,
}

/// FS and GS average per-triplet scores, CS is one score per document.
/// Unparseable answers are recorded and skipped; backend errors abort.
pub fn judge_scores(
    doc: &Document,
    preds: &[Triplet],
    registry: &RelationRegistry,
    judge: &dyn Judge,
) -> Result<JudgeOutcome, LlmError> {
    let lines = linearized_predictions(preds, registry);
    let mut outcome = JudgeOutcome::default();
    if lines.is_empty() {
        return Ok(outcome);
    }
    let context = doc.plain_text();
    let mut ask = |metric: JudgeMetric, item: &str, prompt: String| -> Result<Option<f64>, LlmError> {
        match judge.score(metric, &prompt) {
            Ok(s) => Ok(Some(s)),
            Err(JudgeError::Unparseable(response)) => {
                outcome.failures.push(JudgeFailure {
                    doc_id: doc.doc_id.clone(),
                    metric,
                    item: item.to_string(),
                    response,
                });
                Ok(None)
            }
            Err(JudgeError::Backend(e)) => Err(e),
        }
    };
    let mean = |xs: Vec<f64>| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };

    let mut fs = Vec::new();
    let mut gs = Vec::new();
    for line in &lines {
        let p = fill(FACTUALNESS_TEMPLATE, &[("{context}", &context), ("{triplet}", line)]);
        fs.extend(ask(JudgeMetric::Factualness, line, p)?);
        let p = fill(GRANULARITY_TEMPLATE, &[("{triplet}", line)]);
        gs.extend(ask(JudgeMetric::Granularity, line, p)?);
    }
    let joined = lines.join("\n");
    let p = fill(COMPLETENESS_TEMPLATE, &[("{context}", &context), ("{triplets}", &joined)]);
    let cs = ask(JudgeMetric::Completeness, "document", p)?;

    outcome.fs = mean(fs);
    outcome.gs = mean(gs);
    outcome.cs = cs.unwrap_or(0.0);
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub doc_count: usize,
    pub micro: Prf,
    #[serde(rename = "macro")]
    pub macro_: Prf,
    pub per_type: Vec<TypeRow>,
    /// Micro PRF restricted to documents of each density group present.
    pub by_group: BTreeMap<String, Prf>,
    pub ts: f64,
    pub us: f64,
    pub uniqueness_mode: UniquenessMode,
    pub fs: Option<f64>,
    pub gs: Option<f64>,
    pub cs: Option<f64>,
    pub judge_failures: Vec<JudgeFailure>,
    pub outlier_rate: f64,
    pub missing_rate: f64,
}

/// Per-document input to [`evaluate`].
pub struct DocEval<'a> {
    pub doc: &'a Document,
    pub preds: &'a [Triplet],
}

/// Verifier counts pooled over documents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateCounts {
    pub outliers: usize,
    pub accepted: usize,
    pub missing: usize,
    pub query_pairs: usize,
}

pub fn evaluate(
    items: &[DocEval<'_>],
    registry: &RelationRegistry,
    embedder: &dyn Embedder,
    judge: Option<&dyn Judge>,
    uniqueness_mode: UniquenessMode,
    rates: RateCounts,
) -> Result<MetricsReport, LlmError> {
    let mut pred = BTreeSet::new();
    let mut gold = BTreeSet::new();
    let mut groups: BTreeMap<String, (BTreeSet<FactKey>, BTreeSet<FactKey>)> = BTreeMap::new();
    for it in items {
        let p = pred_facts(&it.doc.doc_id, it.preds);
        let g = gold_facts(it.doc);
        let entry = groups.entry(it.doc.density_group().as_str().to_string()).or_default();
        entry.0.extend(p.iter().cloned());
        entry.1.extend(g.iter().cloned());
        pred.extend(p);
        gold.extend(g);
    }
    let micro = micro_prf(&pred, &gold);
    let (macro_, per_type) = macro_prf(&pred, &gold, registry);
    let by_group = groups.into_iter().map(|(k, (p, g))| (k, micro_prf(&p, &g))).collect();

    let mut ts = 0.0;
    for it in items {
        ts += topical_similarity(it.doc, it.preds, registry, embedder)?;
    }
    let n = items.len().max(1) as f64;
    let preds: Vec<&[Triplet]> = items.iter().map(|i| i.preds).collect();

    let (mut fs, mut gs, mut cs, mut failures) = (None, None, None, Vec::new());
    if let Some(judge) = judge {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for it in items {
            let o = judge_scores(it.doc, it.preds, registry, judge)?;
            a += o.fs;
            b += o.gs;
            c += o.cs;
            failures.extend(o.failures);
        }
        fs = Some(a / n);
        gs = Some(b / n);
        cs = Some(c / n);
    }

    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(MetricsReport {
        doc_count: items.len(),
        micro,
        macro_,
        per_type,
        by_group,
        ts: ts / n,
        us: uniqueness(&preds, uniqueness_mode),
        uniqueness_mode,
        fs,
        gs,
        cs,
        judge_failures: failures,
        outlier_rate: ratio(rates.outliers, rates.accepted),
        missing_rate: ratio(rates.missing, rates.query_pairs),
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn opt_pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), pct)
}

/// Main-results layout: micro-F1 per density group, then micro-F1, TS, US,
/// FS, GS and CS over all documents. Scores are percentages.
pub fn render_main_table(runs: &[(String, MetricsReport)]) -> String {
    let mut out = String::from(
        "| Run | Sparse | Normal | Dense | Micro-F1 | TS | US | FS | GS | CS | Outlier | Missing |\n|---|---|---|---|---|---|---|---|---|---|---|---|\n",
    );
    for (name, r) in runs {
        let g = |k: &str| r.by_group.get(k).map_or_else(|| "-".to_string(), |p| pct(p.f1));
        let _ = writeln!(
            out,
            "| {name} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            g("sparse"),
            g("normal"),
            g("dense"),
            pct(r.micro.f1),
            pct(r.ts),
            pct(r.us),
            opt_pct(r.fs),
            opt_pct(r.gs),
            opt_pct(r.cs),
            pct(r.outlier_rate),
            pct(r.missing_rate)
        );
    }
    out
}

/// Macro layout: recall, precision, F1.
pub fn render_macro_table(runs: &[(String, MetricsReport)]) -> String {
    let mut out = String::from("| Run | Macro-Rec | Macro-Pre | Macro-F1 |\n|---|---|---|---|\n");
    for (name, r) in runs {
        let _ = writeln!(
            out,
            "| {name} | {} | {} | {} |",
            pct(r.macro_.recall),
            pct(r.macro_.precision),
            pct(r.macro_.f1)
        );
    }
    out
}

pub fn render_type_table(report: &MetricsReport) -> String {
    let mut out = String::from("| Relation | Gold | Pred | TP | P | R | F1 |\n|---|---|---|---|---|---|---|\n");
    for row in &report.per_type {
        let p = &row.prf;
        let _ = writeln!(
            out,
            "| {} ({}) | {} | {} | {} | {} | {} | {} |",
            row.name,
            row.rid,
            p.gold_count,
            p.pred_count,
            p.tp,
            pct(p.precision),
            pct(p.recall),
            pct(p.f1)
        );
    }
    out
}
