use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{LlmError, Usage};

/// One line of a cache or replay file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub model: String,
    pub response_text: String,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default)]
    pub created_unix: u64,
}

impl CacheRecord {
    pub fn new(key: String, model: &str, text: &str, usage: Usage) -> Self {
        CacheRecord {
            key,
            model: model.to_string(),
            response_text: text.to_string(),
            usage,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

pub(crate) fn read_records(path: &Path) -> Result<Vec<CacheRecord>, LlmError> {
    let file = File::open(path).map_err(|source| LlmError::CacheIo {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|source| LlmError::CacheIo {
            path: path.display().to_string(),
            source,
        })?;
    let last = lines.len();
    for (i, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CacheRecord>(&line) {
            Ok(rec) => out.push(rec),
            // A torn final line from an interrupted append is dropped.
            Err(e) if i + 1 == last => {
                log::warn!("{}: ignoring truncated final line: {e}", path.display());
            }
            Err(e) => {
                return Err(LlmError::CacheFormat {
                    path: path.display().to_string(),
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Append-only JSON-lines response cache. Lookups are in memory; appends go
/// through a single locked writer.
pub struct ResponseCache {
    entries: Mutex<HashMap<String, CacheRecord>>,
    writer: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            entries: Mutex::new(HashMap::new()),
            writer: Mutex::new(None),
            path: None,
        }
    }

    /// Opens (creating if needed) a cache file and loads its records.
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let io_err = |source| LlmError::CacheIo {
            path: path.display().to_string(),
            source,
        };
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(io_err)?;
            }
        }
        let entries = if path.exists() {
            read_records(path)?
                .into_iter()
                .map(|r| (r.key.clone(), r))
                .collect()
        } else {
            HashMap::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        Ok(Self {
            entries: Mutex::new(entries),
            writer: Mutex::new(Some(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn get(&self, key: &str) -> Option<CacheRecord> {
        self.entries.lock().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, record: CacheRecord) -> Result<(), LlmError> {
        let mut writer = self.writer.lock().expect("cache writer lock");
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_string(&record).expect("record serializes");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| LlmError::CacheIo {
                    path: self
                        .path
                        .as_ref()
                        .map(|p| p.display().to_string())
                        .unwrap_or_default(),
                    source,
                })?;
        }
        self.entries
            .lock()
            .expect("cache lock")
            .insert(record.key.clone(), record);
        Ok(())
    }
}
