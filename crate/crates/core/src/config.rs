//! Run configuration.
//!
//! One JSON document drives every subcommand. Section names and keys mirror
//! the per-module config types exactly (the calibration section spells the
//! neighbourhood size `K`). Unknown keys are rejected, and validation
//! reports every violation at once rather than the first one found.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::calibration::HybridConfig;
use crate::dataio::{Category, ColumnSchema, EmbeddingFormat};
use crate::mining::ConsensusConfig;
use crate::ratings::RatingConfig;
use crate::scoring::{AgentTemperatures, CostRates, HttpBackendConfig, RetryPolicy};
use crate::search::SearchConfig;

/// Input and output locations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub comparisons: PathBuf,
    pub embeddings: PathBuf,
    pub embeddings_format: EmbeddingFormat,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            comparisons: PathBuf::from("comparisons.csv"),
            embeddings: PathBuf::from("embeddings.txt"),
            embeddings_format: EmbeddingFormat::Text,
            out_dir: PathBuf::from("run"),
        }
    }
}

/// Ingestion stage settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub schema: ColumnSchema,
    /// Minimum independent votes per retained pair.
    pub min_votes: u32,
    /// Strict lower bound on majority agreement.
    pub min_agreement: f64,
    /// Optional cap on pairs sampled per category.
    pub sample_size: Option<usize>,
    /// Fraction of sampled pairs assigned to the reference split.
    pub reference_ratio: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            schema: ColumnSchema::default(),
            min_votes: 3,
            min_agreement: 0.5,
            sample_size: Some(288),
            reference_ratio: 0.7,
        }
    }
}

/// Which backend serves VLM calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    #[default]
    Mock,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "http" => Ok(BackendKind::Http),
            "mock" => Ok(BackendKind::Mock),
            other => Err(format!("unknown backend '{other}' (expected http or mock)")),
        }
    }
}

/// Scoring stage settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringSettings {
    /// Scoring mode number (1-4).
    pub mode: u8,
    pub backend: BackendKind,
    pub http: HttpBackendConfig,
    pub retry: RetryPolicy,
    pub rates: CostRates,
    pub temperatures: AgentTemperatures,
    /// Override for the equal-intensity threshold; defaults to
    /// 0.8 * n / 8 scaled to the dimension count when absent.
    pub sigma_i: Option<f64>,
    /// Maximum in-flight backend calls.
    pub parallelism: usize,
    /// World file for the mock backend (written by the fixture generator).
    pub mock_world: Option<PathBuf>,
}

impl Default for ScoringSettings {
    fn default() -> Self {
        Self {
            mode: 4,
            backend: BackendKind::Mock,
            http: HttpBackendConfig::default(),
            retry: RetryPolicy::default(),
            rates: CostRates::default(),
            temperatures: AgentTemperatures::default(),
            sigma_i: None,
            parallelism: 4,
            mock_world: None,
        }
    }
}

/// The complete run configuration.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub categories: Vec<Category>,
    pub seed: u64,
    pub ingest: IngestConfig,
    pub rating: RatingConfig,
    pub consensus: ConsensusConfig,
    pub hybrid: HybridConfig,
    pub search: SearchConfig,
    pub scoring: ScoringSettings,
}

impl RunConfig {
    /// Defaults for a full run: all six categories, seed 42.
    pub fn standard() -> Self {
        Self {
            categories: Category::ALL.to_vec(),
            seed: 42,
            ..Default::default()
        }
    }

    /// Parses a config document, rejecting unknown keys.
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config parse error: {e}"))
    }

    /// Collects every validation violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.categories.is_empty() {
            out.push("categories must not be empty".to_string());
        }
        if self.ingest.min_votes < 1 {
            out.push("ingest.min_votes must be at least 1".to_string());
        }
        if !(0.5..=1.0).contains(&self.ingest.min_agreement) {
            out.push(format!(
                "ingest.min_agreement must lie in [0.5, 1], got {}",
                self.ingest.min_agreement
            ));
        }
        if !(self.ingest.reference_ratio > 0.0 && self.ingest.reference_ratio < 1.0) {
            out.push(format!(
                "ingest.reference_ratio must lie in (0, 1), got {}",
                self.ingest.reference_ratio
            ));
        }
        if !(self.rating.draw_probability > 0.0 && self.rating.draw_probability < 1.0) {
            out.push(format!(
                "rating.draw_probability must lie in (0, 1), got {}",
                self.rating.draw_probability
            ));
        }
        if self.rating.beta <= 0.0 {
            out.push(format!(
                "rating.beta must be positive, got {}",
                self.rating.beta
            ));
        }
        if self.rating.sigma0 <= 0.0 {
            out.push(format!(
                "rating.sigma0 must be positive, got {}",
                self.rating.sigma0
            ));
        }
        if self.consensus.n_per_group == 0 {
            out.push("consensus.n_per_group must be at least 1".to_string());
        }
        if !(0.0..=100.0).contains(&self.consensus.pct_high)
            || !(0.0..=100.0).contains(&self.consensus.pct_low)
        {
            out.push("consensus percentiles must lie in [0, 100]".to_string());
        }
        for violation in self.hybrid.violations() {
            out.push(format!("hybrid.{violation}"));
        }
        for violation in self.search.violations() {
            out.push(format!("search.{violation}"));
        }
        if !(1..=4).contains(&self.scoring.mode) {
            out.push(format!(
                "scoring.mode must be 1-4, got {}",
                self.scoring.mode
            ));
        }
        if self.scoring.parallelism < 1 {
            out.push("scoring.parallelism must be at least 1".to_string());
        }
        if self.scoring.retry.max_attempts < 1 {
            out.push("scoring.retry.max_attempts must be at least 1".to_string());
        }
        if let Some(sigma_i) = self.scoring.sigma_i {
            if sigma_i < 0.0 {
                out.push(format!(
                    "scoring.sigma_i must be non-negative, got {sigma_i}"
                ));
            }
        }
        out
    }
}
