//! Append-only score cache keyed by content digest.
//!
//! Entries are line-delimited JSON. The key covers the pair ids, category,
//! dimension-set digest, and scoring mode, so any change to the dimension
//! set invalidates old entries automatically. Reads are concurrent; writes
//! are serialized behind one file handle.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AgentTranscript, PairScores, ScoringError, ScoringMode};
use crate::dataio::Category;

/// One cached scoring result with its optional agent transcripts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreCacheEntry {
    pub key: String,
    pub value: PairScores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Vec<AgentTranscript>>,
}

/// Digest key for one (pair, category, dimension set, mode) combination.
pub fn cache_key(
    left_id: &str,
    right_id: &str,
    category: Category,
    dimension_digest: &str,
    mode: ScoringMode,
) -> String {
    let mut hasher = Sha256::new();
    for part in [
        left_id,
        right_id,
        category.as_str(),
        dimension_digest,
        &(mode as u8).to_string(),
    ] {
        hasher.update(part.as_bytes());
        hasher.update([0x1f]);
    }
    hex::encode(&hasher.finalize()[..16])
}

pub struct ScoreCache {
    entries: RwLock<HashMap<String, ScoreCacheEntry>>,
    writer: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

impl ScoreCache {
    /// Cache without backing file; useful for tests and one-shot runs.
    pub fn in_memory() -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
            path: None,
        }
    }

    /// Opens (or creates) a JSONL-backed cache and loads existing entries.
    pub fn open(path: &Path) -> Result<Self, ScoringError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(
                File::open(path).map_err(|e| ScoringError::Cache(e.to_string()))?,
            );
            for (line_no, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| ScoringError::Cache(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: ScoreCacheEntry = serde_json::from_str(&line).map_err(|e| {
                    ScoringError::Cache(format!("corrupt cache line {}: {e}", line_no + 1))
                })?;
                entries.insert(entry.key.clone(), entry);
            }
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| ScoringError::Cache(e.to_string()))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ScoringError::Cache(e.to_string()))?;
        Ok(Self {
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<ScoreCacheEntry> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    /// Inserts an entry and appends it to the backing file. Re-inserting an
    /// existing key is a no-op so replays stay byte-identical.
    pub fn put(&self, entry: ScoreCacheEntry) -> Result<(), ScoringError> {
        {
            let entries = self.entries.read().expect("cache lock");
            if entries.contains_key(&entry.key) {
                return Ok(());
            }
        }
        let mut writer = self.writer.lock().expect("cache writer lock");
        if let Some(file) = writer.as_mut() {
            let line = serde_json::to_string(&entry)
                .map_err(|e| ScoringError::Cache(e.to_string()))?;
            writeln!(file, "{line}").map_err(|e| ScoringError::Cache(e.to_string()))?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(entry.key.clone(), entry);
        Ok(())
    }
}
