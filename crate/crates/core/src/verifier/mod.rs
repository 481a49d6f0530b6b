//! Calibration of parsed output: LOF outliers over explanation embeddings per
//! relation type, missing query pairs and the outlier/missing rates.

pub mod lof;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lof::{lof_scores, DISTANCE_FLOOR};

use crate::corpus::QueryPair;
use crate::extract::{DefectCounts, Triplet};
use crate::llm::{Embedder, LlmError};
use crate::par::Parallelism;

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("LOF needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("LOF neighbourhood size must be at least 1")]
    InvalidK,
    #[error("points of mixed dimension: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierParams {
    /// LOF neighbourhood size.
    pub k: usize,
    /// Triplets scoring above this are outlier candidates.
    pub threshold: f64,
    /// At most `ceil(cap_fraction * group size)` triplets are flagged per group.
    pub cap_fraction: f64,
    /// Smaller groups are kept without scoring.
    pub min_group: usize,
}

impl Default for OutlierParams {
    fn default() -> Self {
        Self {
            k: 5,
            threshold: 1.5,
            cap_fraction: 0.10,
            min_group: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriplet {
    pub triplet: Triplet,
    /// Absent for triplets in groups too small to score.
    pub lof: Option<f64>,
    pub outlier: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutlierSplit {
    pub kept: Vec<Triplet>,
    pub outliers: Vec<(Triplet, f64)>,
    /// Every input triplet in input order with its score.
    pub scored: Vec<ScoredTriplet>,
}

/// Flags LOF outliers within each relation-type group. `kept` and `outliers`
/// partition the input and both preserve input order.
pub fn detect_outliers(
    triplets: &[Triplet],
    embedder: &dyn Embedder,
    params: &OutlierParams,
    par: Parallelism,
) -> Result<OutlierSplit, VerifierError> {
    // Groups in order of first appearance.
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, t) in triplets.iter().enumerate() {
        match groups.iter_mut().find(|(rid, _)| *rid == t.rid) {
            Some((_, members)) => members.push(i),
            None => groups.push((t.rid.clone(), vec![i])),
        }
    }

    let scored_groups: Vec<Result<Vec<(usize, Option<f64>, bool)>, VerifierError>> = par.map(&groups, |(_, members)| {
        if members.len() < params.min_group.max(2) {
            return Ok(members.iter().map(|&i| (i, None, false)).collect());
        }
        let texts: Vec<String> = members.iter().map(|&i| triplets[i].explanation.clone()).collect();
        let vectors = embedder.embed(&texts)?;
        let points: Vec<Vec<f64>> = vectors.into_iter().map(|v| v.0).collect();
        let scores = lof_scores(&points, params.k, Parallelism::Sequential)?;
        let flagged = select_outliers(&scores, params.threshold, params.cap_fraction);
        Ok(members
            .iter()
            .enumerate()
            .map(|(pos, &i)| (i, Some(scores[pos]), flagged.contains(&pos)))
            .collect())
    });

    let mut per_triplet: Vec<(Option<f64>, bool)> = vec![(None, false); triplets.len()];
    for group in scored_groups {
        for (i, score, outlier) in group? {
            per_triplet[i] = (score, outlier);
        }
    }

    let mut split = OutlierSplit::default();
    for (t, (lof, outlier)) in triplets.iter().zip(per_triplet) {
        if outlier {
            split.outliers.push((t.clone(), lof.unwrap_or(f64::NAN)));
        } else {
            split.kept.push(t.clone());
        }
        split.scored.push(ScoredTriplet {
            triplet: t.clone(),
            lof,
            outlier,
        });
    }
    Ok(split)
}

/// Positions to flag: scores above `threshold`, highest first (ties by
/// position), at most `ceil(cap_fraction * n)` of them.
pub fn select_outliers(scores: &[f64], threshold: f64, cap_fraction: f64) -> HashSet<usize> {
    // The small epsilon keeps e.g. 0.1 * 30 from rounding up to 4.
    let cap = (cap_fraction * scores.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > threshold).collect();
    candidates.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    candidates.into_iter().take(cap).collect()
}

/// Pairs of `q` (in order) not covered by any kept triplet with exactly that
/// orientation.
pub fn detect_missing(kept: &[Triplet], q: &[QueryPair]) -> Vec<QueryPair> {
    let covered: HashSet<QueryPair> = kept.iter().filter(|t| !t.is_na()).filter_map(Triplet::pair).collect();
    q.iter().copied().filter(|p| !covered.contains(p)).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// outliers / accepted generation triplets
    pub outlier_rate: f64,
    /// missing pairs / query pairs
    pub missing_rate: f64,
}

pub fn rates(outlier_count: usize, accepted_count: usize, missing_count: usize, query_count: usize) -> Rates {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Rates {
        outlier_rate: ratio(outlier_count, accepted_count),
        missing_rate: ratio(missing_count, query_count),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub doc_id: String,
    pub kept: Vec<Triplet>,
    pub outliers: Vec<(Triplet, f64)>,
    pub scored: Vec<ScoredTriplet>,
    pub defect_counts: DefectCounts,
    pub query_pairs: Vec<QueryPair>,
    pub missing: Vec<QueryPair>,
    pub accepted_count: usize,
    pub rates: Rates,
}

/// Runs outlier detection and missing-pair detection for one document's
/// accepted decomposed-stage triplets.
pub fn verify(
    doc_id: &str,
    accepted: &[Triplet],
    defect_counts: DefectCounts,
    q: &[QueryPair],
    embedder: &dyn Embedder,
    params: &OutlierParams,
    par: Parallelism,
) -> Result<VerifierReport, VerifierError> {
    let split = detect_outliers(accepted, embedder, params, par)?;
    let missing = detect_missing(&split.kept, q);
    let rates = rates(split.outliers.len(), accepted.len(), missing.len(), q.len());
    Ok(VerifierReport {
        doc_id: doc_id.to_string(),
        kept: split.kept,
        outliers: split.outliers,
        scored: split.scored,
        defect_counts,
        query_pairs: q.to_vec(),
        missing,
        accepted_count: accepted.len(),
        rates,
    })
}
