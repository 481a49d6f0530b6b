//! Text generation and embedding backends.
//!
//! Generation goes through [`Generator`]; [`CachedGenerator`] puts a persistent
//! JSON-lines cache in front of any backend. [`ReplayBackend`] serves canned
//! responses keyed by [`cache_key`] so that whole runs are hermetic.

mod cache;
mod embed;
mod http;
mod replay;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheRecord, ResponseCache};
pub use embed::{cosine, Embedder, EmbeddingVector, HashMockEmbedder, HttpEmbedder, PlantedEmbedder, HASHMOCK_DIM};
pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use replay::ReplayBackend;

pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DECOMPOSED_MAX_NEW_TOKENS: u32 = 1024;
pub const GRAPH_MAX_NEW_TOKENS: u32 = 256;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend rejected the request with HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("replay miss: no canned response for key {key}")]
    ReplayMiss { key: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache I/O on {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cache file {path} line {line}: {reason}")]
    CacheFormat { path: String, line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub model: String,
    pub prompt_text: String,
    pub temperature: f64,
    pub max_new_tokens: u32,
    #[serde(default)]
    pub stop: Option<Vec<String>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(model: impl Into<String>, prompt_text: impl Into<String>, max_new_tokens: u32) -> Self {
        Self {
            model: model.into(),
            prompt_text: prompt_text.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_new_tokens,
            stop: None,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_new_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_new_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn estimate(prompt: &str, completion: &str) -> Self {
        Usage {
            prompt_tokens: estimate_tokens(prompt) as u64,
            completion_tokens: estimate_tokens(completion) as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub usage: Usage,
    pub backend_id: String,
    pub cached: bool,
}

/// Rough token count: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

pub trait Generator: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError>;

    fn backend_id(&self) -> String;
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        (**self).generate(req)
    }

    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
}

impl<G: Generator + ?Sized> Generator for &G {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        (**self).generate(req)
    }

    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
}

impl<G: Generator + ?Sized> Generator for std::sync::Arc<G> {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        (**self).generate(req)
    }

    fn backend_id(&self) -> String {
        (**self).backend_id()
    }
}

#[derive(Serialize)]
struct CanonicalRequest<'a> {
    model: &'a str,
    prompt_text: &'a str,
    temperature: f64,
    max_new_tokens: u32,
    stop: &'a Option<Vec<String>>,
    seed: Option<u64>,
}

/// SHA-256 over the canonical JSON serialization of the request fields, in hex.
pub fn cache_key(req: &GenerationRequest) -> String {
    let canonical = CanonicalRequest {
        model: &req.model,
        prompt_text: &req.prompt_text,
        temperature: req.temperature,
        max_new_tokens: req.max_new_tokens,
        stop: &req.stop,
        seed: req.seed,
    };
    let bytes = serde_json::to_vec(&canonical).expect("request serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Cache-first wrapper: hits are served without touching the backend, misses
/// are forwarded and appended to the cache before returning.
pub struct CachedGenerator<G> {
    backend: G,
    cache: ResponseCache,
    backend_calls: AtomicU64,
}

impl<G: Generator> CachedGenerator<G> {
    pub fn new(backend: G, cache: ResponseCache) -> Self {
        Self {
            backend,
            cache,
            backend_calls: AtomicU64::new(0),
        }
    }

    /// Number of requests that reached the wrapped backend.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }
}

impl<G: Generator> Generator for CachedGenerator<G> {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        req.validate()?;
        let key = cache_key(req);
        if let Some(rec) = self.cache.get(&key) {
            return Ok(GenerationResponse {
                text: rec.response_text,
                usage: rec.usage,
                backend_id: self.backend.backend_id(),
                cached: true,
            });
        }
        self.backend_calls.fetch_add(1, Ordering::SeqCst);
        let resp = self.backend.generate(req)?;
        self.cache.insert(CacheRecord::new(key, &req.model, &resp.text, resp.usage))?;
        Ok(resp)
    }

    fn backend_id(&self) -> String {
        self.backend.backend_id()
    }
}
