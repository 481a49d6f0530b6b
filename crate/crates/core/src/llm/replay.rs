use std::collections::HashMap;
use std::path::Path;

use super::cache::read_records;
use super::{cache_key, CacheRecord, GenerationRequest, GenerationResponse, Generator, LlmError};

/// Serves canned responses from a JSON-lines fixture. A request whose key is
/// absent fails with [`LlmError::ReplayMiss`]; nothing is ever fabricated.
pub struct ReplayBackend {
    records: HashMap<String, CacheRecord>,
    id: String,
}

impl ReplayBackend {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let records = read_records(path)?;
        Ok(Self::from_records(records, format!("replay:{}", file_name(path))))
    }

    pub fn from_records(records: impl IntoIterator<Item = CacheRecord>, id: impl Into<String>) -> Self {
        Self {
            records: records.into_iter().map(|r| (r.key.clone(), r)).collect(),
            id: id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

impl Generator for ReplayBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        let key = cache_key(req);
        let rec = self.records.get(&key).ok_or(LlmError::ReplayMiss { key })?;
        Ok(GenerationResponse {
            text: rec.response_text.clone(),
            usage: rec.usage,
            backend_id: self.id.clone(),
            cached: true,
        })
    }

    fn backend_id(&self) -> String {
        self.id.clone()
    }
}
