//! Prototype pool selection (VOTE-K style greedy over a k-NN graph of document
//! embeddings) and demo sampling from the pool.
//!
//! Selection scores every unselected document `u` by
//!
//! ```text
//! score(u) = sum over v with u in NN(v) of 10^(-|selected ∩ NN(v)|)
//! ```
//!
//! and takes the best one each round, ties by doc_id.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::llm::{Embedder, EmbeddingVector, LlmError};
use crate::par::Parallelism;
use crate::prompts::{Demo, DemoTriplet};
use crate::relmeta::{explanation, RelationRegistry, RelationType};

pub const DEFAULT_POOL_SIZE: usize = 1500;
pub const DEFAULT_KNN: usize = 10;
const DISCOUNT_BASE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrototypePool {
    pub doc_ids: Vec<String>,
    pub knn_k: usize,
    pub pool_size: usize,
    pub seed: u64,
    pub embedder_id: String,
}

impl PrototypePool {
    /// Pool documents in pool order; ids missing from `docs` are skipped.
    pub fn documents<'a>(&self, docs: &'a [Document]) -> Vec<&'a Document> {
        let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
        self.doc_ids.iter().filter_map(|id| by_id.get(id.as_str()).copied()).collect()
    }
}

fn dot(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Directed k-NN lists by cosine similarity; ties broken by lower index.
pub fn knn_graph(vectors: &[EmbeddingVector], k: usize, par: Parallelism) -> Vec<Vec<usize>> {
    let n = vectors.len();
    let k = k.min(n.saturating_sub(1));
    par.map_range(n, |i| {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dot(&vectors[i], &vectors[j]), j)).collect();
        others.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        others.truncate(k);
        others.into_iter().map(|(_, j)| j).collect()
    })
}

/// Greedy selection over a k-NN graph. Indices are positions in `knn`, and
/// lower positions win ties.
pub fn vote_k_select(knn: &[Vec<usize>], pool_size: usize) -> Vec<usize> {
    let n = knn.len();
    let mut in_nn: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, nn) in knn.iter().enumerate() {
        for &u in nn {
            in_nn[u].push(v);
        }
    }
    let mut selected = vec![false; n];
    // |selected ∩ NN(v)| for every v.
    let mut covered = vec![0i32; n];
    let mut order = Vec::with_capacity(pool_size.min(n));
    for _ in 0..pool_size.min(n) {
        let mut best: Option<(f64, usize)> = None;
        for u in (0..n).filter(|&u| !selected[u]) {
            let score: f64 = in_nn[u].iter().map(|&v| DISCOUNT_BASE.powi(-covered[v])).sum();
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, u));
            }
        }
        let Some((_, u)) = best else { break };
        selected[u] = true;
        order.push(u);
        for &v in &in_nn[u] {
            covered[v] += 1;
        }
    }
    order
}

/// Builds the pool from embeddings of the unmarked document texts.
pub fn build_pool(
    train_docs: &[Document],
    embedder: &dyn Embedder,
    knn_k: usize,
    pool_size: usize,
    seed: u64,
    par: Parallelism,
) -> Result<PrototypePool, LlmError> {
    let mut docs: Vec<&Document> = train_docs.iter().collect();
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let make = |doc_ids: Vec<String>| PrototypePool {
        doc_ids,
        knn_k,
        pool_size,
        seed,
        embedder_id: embedder.embedder_id(),
    };
    if pool_size >= docs.len() {
        return Ok(make(docs.iter().map(|d| d.doc_id.clone()).collect()));
    }
    let texts: Vec<String> = docs.iter().map(|d| d.plain_text()).collect();
    let vectors = embedder.embed(&texts)?;
    let knn = knn_graph(&vectors, knn_k, par);
    let picked = vote_k_select(&knn, pool_size);
    Ok(make(picked.into_iter().map(|i| docs[i].doc_id.clone()).collect()))
}

fn demo_triplets(doc: &Document, rel: &RelationType, alias_start: &mut usize) -> Vec<DemoTriplet> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for g in doc.gold.iter().filter(|g| g.relation == rel.rid) {
        if seen.contains(&(g.head, g.tail)) {
            continue;
        }
        seen.push((g.head, g.tail));
        let (Some(h), Some(t)) = (doc.entity(g.head), doc.entity(g.tail)) else {
            continue;
        };
        let (head, tail) = (h.display_surface().to_string(), t.display_surface().to_string());
        let Ok(expl) = explanation(rel, &head, &tail, *alias_start) else {
            continue;
        };
        *alias_start += 1;
        out.push(DemoTriplet {
            head,
            rid: rel.rid.clone(),
            tail,
            explanation: expl,
        });
    }
    out
}

/// Up to `n` demos showing `rel`, sampled with `seed`. When no pool document
/// has the relation, one negative demo is returned instead (none for an empty
/// pool).
pub fn demos_for_type(pool: &[&Document], rel: &RelationType, n: usize, seed: u64) -> Vec<Demo> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let with_rel: Vec<&Document> = pool
        .iter()
        .copied()
        .filter(|d| d.gold.iter().any(|g| g.relation == rel.rid))
        .collect();
    if with_rel.is_empty() {
        if pool.is_empty() || n == 0 {
            return Vec::new();
        }
        let pick = sample(&mut rng, pool.len(), 1).index(0);
        return vec![Demo::negative(pool[pick])];
    }
    let mut alias = 0;
    sample(&mut rng, with_rel.len(), n.min(with_rel.len()))
        .into_iter()
        .map(|i| {
            let doc = with_rel[i];
            Demo::positive(doc, demo_triplets(doc, rel, &mut alias))
        })
        .collect()
}

/// `n` pool documents sampled with `seed`, each rendering all its gold
/// triplets with known relations.
pub fn demos_random(pool: &[&Document], registry: &RelationRegistry, n: usize, seed: u64) -> Vec<Demo> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, pool.len(), n.min(pool.len()))
        .into_iter()
        .map(|i| {
            let doc = pool[i];
            let mut alias = 0;
            let mut rids: Vec<&str> = Vec::new();
            for g in &doc.gold {
                if !rids.contains(&g.relation.as_str()) {
                    rids.push(&g.relation);
                }
            }
            let triplets = rids
                .into_iter()
                .filter_map(|rid| registry.get(rid))
                .flat_map(|rel| demo_triplets(doc, rel, &mut alias))
                .collect();
            Demo::positive(doc, triplets)
        })
        .collect()
}
