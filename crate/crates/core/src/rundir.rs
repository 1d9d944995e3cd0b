//! Run-directory layout and the digest manifest.
//!
//! Artifacts live under `<out>/<category>/<stage>/<name>` (run-global
//! artifacts under `<out>/<stage>/<name>`), and `manifest.json` records a
//! SHA-256 digest per artifact. Writes are skipped when the content is
//! unchanged, making every stage idempotent at the byte level.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

const MANIFEST_NAME: &str = "manifest.json";

/// Handle on one run directory.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn exists(&self, relative: &str) -> bool {
        self.path(relative).exists()
    }

    /// Writes an artifact unless the bytes already match, then records its
    /// digest in the manifest.
    pub fn write(&self, relative: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.path(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let changed = match std::fs::read(&path) {
            Ok(existing) => existing != bytes,
            Err(_) => true,
        };
        if changed {
            std::fs::write(&path, bytes)?;
        }
        self.record_digest(relative, bytes)
    }

    pub fn read(&self, relative: &str) -> io::Result<Vec<u8>> {
        std::fs::read(self.path(relative))
    }

    pub fn read_string(&self, relative: &str) -> io::Result<String> {
        std::fs::read_to_string(self.path(relative))
    }

    fn record_digest(&self, relative: &str, bytes: &[u8]) -> io::Result<()> {
        let mut manifest = self.manifest()?;
        manifest.insert(relative.to_string(), digest_hex(bytes));
        let rendered =
            serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(self.path(MANIFEST_NAME), rendered.as_bytes())
    }

    /// Digest map over every recorded artifact.
    pub fn manifest(&self) -> io::Result<BTreeMap<String, String>> {
        match std::fs::read_to_string(self.path(MANIFEST_NAME)) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| io::Error::other(format!("corrupt manifest: {e}"))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(BTreeMap::new()),
            Err(e) => Err(e),
        }
    }

    /// Re-registers a file that some other component wrote directly (the
    /// score cache appends through its own handle).
    pub fn record_external(&self, relative: &str) -> io::Result<()> {
        let bytes = self.read(relative)?;
        self.record_digest(relative, &bytes)
    }
}

pub fn digest_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Standard artifact locations.
pub mod layout {
    use crate::dataio::Category;

    pub fn rejects() -> String {
        "ingest/rejects.txt".to_string()
    }

    pub fn ingest_summary() -> String {
        "ingest/summary.json".to_string()
    }

    pub fn records(category: Category) -> String {
        format!("{category}/ingest/records.json")
    }

    pub fn split(category: Category) -> String {
        format!("{category}/ingest/split.json")
    }

    pub fn ratings(category: Category) -> String {
        format!("{category}/rate/ratings.csv")
    }

    pub fn dimensions(category: Category) -> String {
        format!("{category}/mine/dimensions.json")
    }

    pub fn score_cache(category: Category) -> String {
        format!("{category}/score/cache.jsonl")
    }

    pub fn scores(category: Category) -> String {
        format!("{category}/score/scores.json")
    }

    pub fn calibration_report(category: Category) -> String {
        format!("{category}/calibrate/report.jsonl")
    }

    pub fn weight_stats(category: Category) -> String {
        format!("{category}/calibrate/weight_stats.json")
    }

    pub fn evaluation(category: Category) -> String {
        format!("{category}/evaluate/report.json")
    }

    pub fn trial(index: usize) -> String {
        format!("optimize/trial_{index:03}.json")
    }

    pub fn assembly() -> String {
        "optimize/assembly.json".to_string()
    }

    pub fn sweep(parameter: &str) -> String {
        format!("sweep/{parameter}.json")
    }
}
