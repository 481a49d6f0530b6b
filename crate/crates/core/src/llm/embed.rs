//! Text embedders.
//!
//! `HashMockEmbedder` is the hermetic default. For a text it computes
//!
//! 1. the whitespace tokens of the text (if there are none, the whole text is
//!    used as a single token);
//! 2. for every token, `h = fnv1a64(seed_mixed_basis, token bytes)` where the
//!    FNV-1a offset basis `0xcbf29ce484222325` is XORed with `seed` and the
//!    prime is `0x100000001b3`;
//! 3. 64 components from a SplitMix64 stream seeded with `h`, each mapped to
//!    `(x >> 11) * 2^-53 * 2 - 1`, summed over tokens;
//! 4. L2 normalization.
//!
//! Texts sharing tokens therefore have positive cosine similarity while unrelated
//! texts are close to orthogonal.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::http::{HttpConfig, HttpTransport};
use super::LlmError;

pub const HASHMOCK_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

pub trait Embedder: Send + Sync {
    /// Order- and length-preserving.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError>;

    fn dim(&self) -> usize;

    fn embedder_id(&self) -> String;
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
        (**self).embed(texts)
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embedder_id(&self) -> String {
        (**self).embedder_id()
    }
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
        (**self).embed(texts)
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embedder_id(&self) -> String {
        (**self).embedder_id()
    }
}

impl<E: Embedder + ?Sized> Embedder for std::sync::Arc<E> {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
        (**self).embed(texts)
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embedder_id(&self) -> String {
        (**self).embedder_id()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET ^ seed, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

struct SplitMix64(u64);

impl SplitMix64 {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn next_signed_unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HashMockEmbedder {
    pub seed: u64,
}

impl HashMockEmbedder {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f64; HASHMOCK_DIM];
        let mut add = |bytes: &[u8]| {
            let mut rng = SplitMix64(fnv1a64(self.seed, bytes));
            for slot in acc.iter_mut() {
                *slot += rng.next_signed_unit();
            }
        };
        let mut any = false;
        for token in text.split_whitespace() {
            add(token.as_bytes());
            any = true;
        }
        if !any {
            add(text.as_bytes());
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            acc[0] = 1.0;
        } else {
            acc.iter_mut().for_each(|x| *x /= norm);
        }
        EmbeddingVector(acc)
    }
}

impl Embedder for HashMockEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn dim(&self) -> usize {
        HASHMOCK_DIM
    }

    fn embedder_id(&self) -> String {
        format!("hashmock:{}", self.seed)
    }
}

/// Serves fixed vectors for known texts and falls back to hashmock otherwise.
#[derive(Debug, Clone, Default)]
pub struct PlantedEmbedder {
    planted: HashMap<String, EmbeddingVector>,
    fallback: HashMockEmbedder,
}

impl PlantedEmbedder {
    pub fn new(fallback: HashMockEmbedder) -> Self {
        Self {
            planted: HashMap::new(),
            fallback,
        }
    }

    /// Plants a vector; shorter vectors are zero-padded to the embedder dimension.
    pub fn plant(&mut self, text: impl Into<String>, values: &[f64]) -> &mut Self {
        assert!(values.len() <= HASHMOCK_DIM, "planted vector exceeds dimension {HASHMOCK_DIM}");
        let mut v = values.to_vec();
        v.resize(HASHMOCK_DIM, 0.0);
        self.planted.insert(text.into(), EmbeddingVector(v));
        self
    }
}

impl Embedder for PlantedEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
        Ok(texts
            .iter()
            .map(|t| self.planted.get(t).cloned().unwrap_or_else(|| self.fallback.embed_one(t)))
            .collect())
    }

    fn dim(&self) -> usize {
        HASHMOCK_DIM
    }

    fn embedder_id(&self) -> String {
        format!("planted+{}", self.fallback.embedder_id())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

/// Embeddings over an OpenAI-style `/embeddings` endpoint.
pub struct HttpEmbedder {
    transport: HttpTransport,
    model: String,
    dim: usize,
    batch_size: usize,
}

impl HttpEmbedder {
    /// `dim` is the expected vector size; responses of another size are rejected.
    pub fn new(config: HttpConfig, model: impl Into<String>, dim: usize) -> Result<Self, LlmError> {
        Ok(Self {
            transport: HttpTransport::new(config)?,
            model: model.into(),
            dim,
            batch_size: 64,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            let resp: EmbeddingResponse = self.transport.post_json(
                "embeddings",
                &EmbeddingRequest {
                    model: &self.model,
                    input: batch,
                },
            )?;
            if resp.data.len() != batch.len() {
                return Err(LlmError::MalformedResponse(format!(
                    "asked for {} embeddings, got {}",
                    batch.len(),
                    resp.data.len()
                )));
            }
            let mut data = resp.data;
            data.sort_by_key(|d| d.index.unwrap_or(usize::MAX));
            for d in data {
                if d.embedding.len() != self.dim || d.embedding.iter().any(|x| !x.is_finite()) {
                    return Err(LlmError::MalformedResponse(format!(
                        "embedding of dimension {} (expected {}) or with non-finite values",
                        d.embedding.len(),
                        self.dim
                    )));
                }
                out.push(EmbeddingVector(d.embedding));
            }
        }
        Ok(out)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embedder_id(&self) -> String {
        format!("http:{}:{}", self.transport.url("embeddings"), self.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashmock_is_deterministic_and_unit_norm() {
        let e = HashMockEmbedder::new(0);
        let a = e.embed_one("abc");
        assert_eq!(a, e.embed_one("abc"));
        assert_eq!(a.dim(), 64);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert!((e.embed_one("").norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distinct_texts_separate() {
        let e = HashMockEmbedder::new(0);
        let c = cosine(&e.embed_one("abc"), &e.embed_one("abd"));
        assert!(c < 0.999, "cosine {c}");
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let e = HashMockEmbedder::new(0);
        let a = e.embed_one("Alton is a city in Illinois");
        let b = e.embed_one("Alton is a city in Madison County");
        let c = e.embed_one("quantum chromodynamics lattice");
        assert!(cosine(&a, &b) > cosine(&a, &c));
    }

    #[test]
    fn seed_changes_vectors() {
        assert_ne!(HashMockEmbedder::new(0).embed_one("x"), HashMockEmbedder::new(1).embed_one("x"));
    }

    #[test]
    fn embed_preserves_order_and_length() {
        let e = HashMockEmbedder::new(3);
        let texts: Vec<String> = ["b", "a", "b"].iter().map(|s| s.to_string()).collect();
        let v = e.embed(&texts).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[0], v[2]);
        assert_eq!(v[1], e.embed_one("a"));
    }

    #[test]
    fn planted_vectors_override() {
        let mut p = PlantedEmbedder::new(HashMockEmbedder::new(0));
        p.plant("far", &[5.0, 5.0]);
        let v = p.embed(&["far".to_string(), "x".to_string()]).unwrap();
        assert_eq!(&v[0].0[..3], &[5.0, 5.0, 0.0]);
        assert_eq!(v[1], HashMockEmbedder::new(0).embed_one("x"));
    }
}
