//! Stage 1: consensus exemplar sampling and dimension mining.
//!
//! High- and low-rated exemplars are selected from the rating distribution,
//! packed into the extraction prompt together with their ratings and
//! PCA-compressed embeddings, and the VLM's JSON reply is validated into a
//! [`DimensionSet`].

mod pca;

pub use pca::{pca_fit_transform, Pca};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::Category;
use crate::prompts;
use crate::ratings::Rating;

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error(
        "sampling error: need {needed} images per group, but only {qualified_high} qualify as \
         high-consensus and {qualified_low} as low-consensus"
    )]
    Sampling {
        needed: usize,
        qualified_high: usize,
        qualified_low: usize,
    },
    #[error("composition error: {0}")]
    Composition(String),
    #[error(transparent)]
    Parse(#[from] DimensionParseError),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

/// Classified failures when validating a dimension-set reply.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DimensionParseError {
    #[error("no JSON object found in response")]
    NoJsonFound,
    #[error("response JSON is malformed: {0}")]
    InvalidJson(String),
    #[error("expected between {min} and {max} dimensions, got {got}")]
    Cardinality { min: usize, max: usize, got: usize },
    #[error("duplicate dimension name '{0}' (names are compared case-insensitively)")]
    DuplicateName(String),
    #[error("dimension {index} is missing required field '{field}'")]
    MissingField { index: usize, field: &'static str },
    #[error("dimension {0} has an empty name")]
    EmptyName(usize),
}

/// One named, described scoring dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub description: String,
    pub high_indicator: String,
    pub low_indicator: String,
}

/// A validated set of 5-10 dimensions for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSet {
    pub category: Category,
    pub dimensions: Vec<Dimension>,
    /// Trial id that produced this set, or "manual".
    pub provenance: String,
}

pub const MIN_DIMENSIONS: usize = 5;
pub const MAX_DIMENSIONS: usize = 10;

impl DimensionSet {
    pub fn new(
        category: Category,
        dimensions: Vec<Dimension>,
        provenance: impl Into<String>,
    ) -> Result<Self, DimensionParseError> {
        validate_dimensions(&dimensions, MIN_DIMENSIONS, MAX_DIMENSIONS)?;
        Ok(Self {
            category,
            dimensions,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.dimensions.iter().map(|d| d.name.as_str()).collect()
    }

    /// Content digest used in score-cache keys; changes whenever any
    /// dimension text changes.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.category.as_str().as_bytes());
        for dim in &self.dimensions {
            for field in [
                &dim.name,
                &dim.description,
                &dim.high_indicator,
                &dim.low_indicator,
            ] {
                hasher.update([0x1f]);
                hasher.update(field.as_bytes());
            }
        }
        hex::encode(&hasher.finalize()[..16])
    }
}

fn validate_dimensions(
    dimensions: &[Dimension],
    min: usize,
    max: usize,
) -> Result<(), DimensionParseError> {
    if dimensions.len() < min || dimensions.len() > max {
        return Err(DimensionParseError::Cardinality {
            min,
            max,
            got: dimensions.len(),
        });
    }
    let mut seen: Vec<String> = Vec::new();
    for (i, dim) in dimensions.iter().enumerate() {
        if dim.name.trim().is_empty() {
            return Err(DimensionParseError::EmptyName(i));
        }
        let folded = dim.name.trim().to_lowercase();
        if seen.contains(&folded) {
            return Err(DimensionParseError::DuplicateName(dim.name.clone()));
        }
        seen.push(folded);
    }
    Ok(())
}

/// Selected high/low consensus exemplars with the thresholds that produced
/// them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsensusSet {
    pub category: Category,
    pub high: Vec<String>,
    pub low: Vec<String>,
    pub tau_high: f64,
    pub tau_low: f64,
    pub sigma_med: f64,
}

/// Thresholds and group size for consensus sampling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsensusConfig {
    pub pct_high: f64,
    pub pct_low: f64,
    pub n_per_group: usize,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            pct_high: 75.0,
            pct_low: 25.0,
            n_per_group: 5,
        }
    }
}

/// Linear-interpolation percentile of a sorted slice (R type 7).
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let clamped = pct.clamp(0.0, 100.0);
    let pos = clamped / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Samples high- and low-consensus exemplars.
///
/// High exemplars satisfy `mu > tau_high` and `sigma < sigma_med`; low
/// exemplars satisfy `mu < tau_low` and `sigma < sigma_med`, where the taus
/// are the configured mu percentiles and `sigma_med` the median sigma. Both
/// inequalities are strict. Among qualifying images the highest-mu
/// (respectively lowest-mu) are taken first, ties broken by image id, so the
/// selection is deterministic.
pub fn sample_consensus(
    ratings: &BTreeMap<String, Rating>,
    category: Category,
    cfg: &ConsensusConfig,
) -> Result<ConsensusSet, MiningError> {
    if cfg.n_per_group == 0 {
        return Err(MiningError::Parameter(
            "n_per_group must be at least 1".to_string(),
        ));
    }
    let mut mus: Vec<f64> = ratings.values().map(|r| r.mu).collect();
    let mut sigmas: Vec<f64> = ratings.values().map(|r| r.sigma).collect();
    mus.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let tau_high = percentile(&mus, cfg.pct_high);
    let tau_low = percentile(&mus, cfg.pct_low);
    let sigma_med = percentile(&sigmas, 50.0);

    let mut high: Vec<(&String, &Rating)> = ratings
        .iter()
        .filter(|(_, r)| r.mu > tau_high && r.sigma < sigma_med)
        .collect();
    let mut low: Vec<(&String, &Rating)> = ratings
        .iter()
        .filter(|(_, r)| r.mu < tau_low && r.sigma < sigma_med)
        .collect();
    if high.len() < cfg.n_per_group || low.len() < cfg.n_per_group {
        return Err(MiningError::Sampling {
            needed: cfg.n_per_group,
            qualified_high: high.len(),
            qualified_low: low.len(),
        });
    }
    high.sort_by(|a, b| {
        b.1.mu
            .partial_cmp(&a.1.mu)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    low.sort_by(|a, b| {
        a.1.mu
            .partial_cmp(&b.1.mu)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    Ok(ConsensusSet {
        category,
        high: high
            .into_iter()
            .take(cfg.n_per_group)
            .map(|(id, _)| id.clone())
            .collect(),
        low: low
            .into_iter()
            .take(cfg.n_per_group)
            .map(|(id, _)| id.clone())
            .collect(),
        tau_high,
        tau_low,
        sigma_med,
    })
}

/// Builds the dimension-extraction prompt for a consensus set.
///
/// Each exemplar line carries the image id, its rating mean to two decimals,
/// and its eight PCA coordinates to four decimals; rendering is
/// byte-deterministic.
pub fn build_extraction_prompt(
    consensus: &ConsensusSet,
    ratings: &BTreeMap<String, Rating>,
    pca_coords: &BTreeMap<String, Vec<f64>>,
    category: Category,
) -> Result<String, MiningError> {
    if consensus.high.is_empty() || consensus.low.is_empty() {
        return Err(MiningError::Composition(
            "consensus set has an empty exemplar group".to_string(),
        ));
    }
    let describe = |ids: &[String]| -> Result<String, MiningError> {
        let mut out = String::new();
        for (i, id) in ids.iter().enumerate() {
            let rating = ratings.get(id).ok_or_else(|| {
                MiningError::Composition(format!("no rating for image '{id}'"))
            })?;
            let coords = pca_coords.get(id).ok_or_else(|| {
                MiningError::Composition(format!("no PCA embedding for image '{id}'"))
            })?;
            let rendered: Vec<String> = coords.iter().map(|c| format!("{c:.4}")).collect();
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&format!(
                "- {id}: TrueSkill mu={:.2}, pca=[{}]",
                rating.mu,
                rendered.join(", ")
            ));
        }
        Ok(out)
    };
    let high_block = describe(&consensus.high)?;
    let low_block = describe(&consensus.low)?;
    Ok(prompts::render(
        prompts::EXTRACTION_TEMPLATE,
        &[
            ("category", category.as_str()),
            ("high_image_descriptions", &high_block),
            ("low_image_descriptions", &low_block),
        ],
    ))
}

/// Extracts the first parseable JSON object from free-form model output,
/// tolerating surrounding prose and fenced code blocks.
pub fn extract_json_object(text: &str) -> Option<serde_json::Value> {
    // Fenced blocks first: strip the fences and try their contents.
    let mut candidates: Vec<String> = Vec::new();
    let mut remainder = text;
    while let Some(start) = remainder.find("```") {
        let after = &remainder[start + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
        if let Some(end) = after[body_start..].find("```") {
            candidates.push(after[body_start..body_start + end].to_string());
            remainder = &after[body_start + end + 3..];
        } else {
            break;
        }
    }
    // Balanced top-level object scan, string-aware.
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut start = None;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => {
                if depth == 0 {
                    start = Some(i);
                }
                depth += 1;
            }
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    if let Some(s) = start {
                        candidates.push(text[s..=i].to_string());
                    }
                }
            }
            _ => {}
        }
    }
    candidates
        .iter()
        .find_map(|c| serde_json::from_str::<serde_json::Value>(c.trim()).ok())
        .filter(serde_json::Value::is_object)
}

/// Parses a list of dimensions from model output without cardinality
/// validation. Used by both full-set extraction and mutation replies.
pub fn parse_dimension_list(text: &str) -> Result<Vec<Dimension>, DimensionParseError> {
    let value = extract_json_object(text).ok_or(DimensionParseError::NoJsonFound)?;
    let list = value
        .get("dimensions")
        .and_then(|d| d.as_array())
        .ok_or_else(|| {
            DimensionParseError::InvalidJson("missing 'dimensions' array".to_string())
        })?;
    let mut dimensions = Vec::with_capacity(list.len());
    for (index, entry) in list.iter().enumerate() {
        let object = entry.as_object().ok_or_else(|| {
            DimensionParseError::InvalidJson(format!("dimension {index} is not an object"))
        })?;
        let field = |name: &'static str| -> Result<String, DimensionParseError> {
            object
                .get(name)
                .and_then(|v| v.as_str())
                .map(|s| s.trim().to_string())
                .ok_or(DimensionParseError::MissingField { index, field: name })
        };
        dimensions.push(Dimension {
            name: field("name")?,
            description: field("description")?,
            high_indicator: field("high_indicator")?,
            low_indicator: field("low_indicator")?,
        });
    }
    Ok(dimensions)
}

/// Parses and validates a full dimension-set reply for a category.
///
/// Total over arbitrary input: every string yields either a valid set or a
/// classified [`DimensionParseError`].
pub fn parse_dimension_response(
    text: &str,
    category: Category,
    provenance: impl Into<String>,
) -> Result<DimensionSet, DimensionParseError> {
    let dimensions = parse_dimension_list(text)?;
    DimensionSet::new(category, dimensions, provenance)
}
