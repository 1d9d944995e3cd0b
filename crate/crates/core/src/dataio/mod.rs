//! Ingestion of pairwise-comparison votes and image embeddings.
//!
//! Raw vote tables are aggregated into one [`ComparisonRecord`] per ordered
//! (left, right, category) key, consensus-filtered, then sampled and split
//! into disjoint reference/pool sets. Image embeddings arrive in a sidecar
//! file; this crate never runs a vision encoder.

mod embeddings;
mod ingest;

pub use embeddings::{read_embeddings, write_embeddings, EmbeddingFormat, CLIP_DIM, PCA_DIM};
pub use ingest::{parse_comparisons, ColumnSchema, IngestOutcome, RejectedRow};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error("parameter error: {0}")]
    Parameter(String),
}

/// The six perception categories of the comparison corpus.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Safety,
    Lively,
    Beautiful,
    Wealthy,
    Depressing,
    Boring,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Safety,
        Category::Lively,
        Category::Beautiful,
        Category::Wealthy,
        Category::Depressing,
        Category::Boring,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Safety => "safety",
            Category::Lively => "lively",
            Category::Beautiful => "beautiful",
            Category::Wealthy => "wealthy",
            Category::Depressing => "depressing",
            Category::Boring => "boring",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "safety" | "safe" => Ok(Category::Safety),
            "lively" => Ok(Category::Lively),
            "beautiful" => Ok(Category::Beautiful),
            "wealthy" => Ok(Category::Wealthy),
            "depressing" => Ok(Category::Depressing),
            "boring" => Ok(Category::Boring),
            other => Err(format!("unknown category token '{other}'")),
        }
    }
}

/// Outcome of a pairwise comparison, from the left image's perspective.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Left,
    Right,
    Equal,
}

impl Label {
    /// The label seen when the pair is presented in the opposite order.
    pub fn flipped(&self) -> Label {
        match self {
            Label::Left => Label::Right,
            Label::Right => Label::Left,
            Label::Equal => Label::Equal,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Left => "left",
            Label::Right => "right",
            Label::Equal => "equal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One image with its precomputed visual embedding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    /// Dense CLIP-style embedding, length [`CLIP_DIM`].
    pub clip_embedding: Vec<f64>,
    /// Optional 8-dimensional PCA compression of the embedding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_embedding: Option<Vec<f64>>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, clip_embedding: Vec<f64>) -> Result<Self, DataError> {
        if clip_embedding.len() != CLIP_DIM {
            return Err(DataError::Ingestion(format!(
                "embedding for image must have length {CLIP_DIM}, got {}",
                clip_embedding.len()
            )));
        }
        Ok(Self {
            image_id: image_id.into(),
            clip_embedding,
            pca_embedding: None,
        })
    }
}

/// One aggregated human pairwise vote between two images for a category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub left_id: String,
    pub right_id: String,
    pub category: Category,
    /// Majority outcome across all votes on this ordered pair.
    pub label: Label,
    pub vote_count: u32,
    /// Fraction of votes agreeing with the majority outcome, in (0, 1].
    pub agreement: f64,
}

impl ComparisonRecord {
    /// Stable identity of the ordered pair within a category.
    pub fn pair_key(&self) -> String {
        format!("{}~{}", self.left_id, self.right_id)
    }
}

/// Disjoint reference/pool partition of sampled comparison records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub reference: Vec<ComparisonRecord>,
    pub pool: Vec<ComparisonRecord>,
    pub seed: u64,
    pub ratio: f64,
}

/// Retains records with at least `min_votes` votes and agreement strictly
/// above `min_agreement`. Input order is preserved; exact 50/50 ties never
/// survive because the comparison is strict.
pub fn consensus_filter(
    records: &[ComparisonRecord],
    min_votes: u32,
    min_agreement: f64,
) -> Vec<ComparisonRecord> {
    records
        .iter()
        .filter(|r| r.vote_count >= min_votes && r.agreement > min_agreement)
        .cloned()
        .collect()
}

/// Samples `sample_size` records without replacement and splits them into
/// reference/pool sets with `round(sample_size * ratio)` reference records.
///
/// The shuffle is driven by a ChaCha stream derived from `seed`, so repeated
/// calls with identical inputs yield byte-identical splits.
pub fn sample_and_split(
    records: &[ComparisonRecord],
    sample_size: usize,
    ratio: f64,
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    if sample_size > records.len() {
        return Err(DataError::Parameter(format!(
            "sample_size {sample_size} exceeds available records {}",
            records.len()
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::Parameter(format!(
            "ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let mut shuffled: Vec<ComparisonRecord> = records.to_vec();
    let mut rng = seed::derive_rng(seed, "dataio.sample_and_split", &[]);
    shuffled.shuffle(&mut rng);
    shuffled.truncate(sample_size);
    let n_reference = (sample_size as f64 * ratio).round() as usize;
    let pool = shuffled.split_off(n_reference.min(sample_size));
    Ok(DatasetSplit {
        reference: shuffled,
        pool,
        seed,
        ratio,
    })
}

/// All distinct image ids referenced by the given records.
pub fn image_ids(records: &[ComparisonRecord]) -> BTreeSet<String> {
    let mut ids = BTreeSet::new();
    for record in records {
        ids.insert(record.left_id.clone());
        ids.insert(record.right_id.clone());
    }
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(left: &str, right: &str, votes: u32, agreement: f64) -> ComparisonRecord {
        ComparisonRecord {
            left_id: left.to_string(),
            right_id: right.to_string(),
            category: Category::Wealthy,
            label: Label::Left,
            vote_count: votes,
            agreement,
        }
    }

    #[test]
    fn filter_drops_low_vote_counts() {
        let records = vec![record("a", "b", 2, 1.0)];
        assert!(consensus_filter(&records, 3, 0.5).is_empty());
    }

    #[test]
    fn filter_keeps_two_thirds_majority() {
        // 3 votes split 2/1: agreement 0.667 > 0.5.
        let records = vec![record("a", "b", 3, 2.0 / 3.0)];
        assert_eq!(consensus_filter(&records, 3, 0.5).len(), 1);
    }

    #[test]
    fn filter_drops_exact_half_agreement() {
        let records = vec![record("a", "b", 4, 0.5)];
        assert!(consensus_filter(&records, 1, 0.5).is_empty());
    }

    #[test]
    fn filter_is_identity_on_unanimous_single_votes() {
        let records = vec![record("a", "b", 1, 1.0), record("c", "d", 1, 1.0)];
        assert_eq!(consensus_filter(&records, 1, 0.5), records);
    }

    #[test]
    fn filter_is_idempotent() {
        let records = vec![
            record("a", "b", 3, 0.9),
            record("c", "d", 2, 0.6),
            record("e", "f", 5, 0.5),
        ];
        let once = consensus_filter(&records, 3, 0.5);
        let twice = consensus_filter(&once, 3, 0.5);
        assert_eq!(once, twice);
    }

    #[test]
    fn split_sizes_match_ratio_on_288() {
        let records: Vec<ComparisonRecord> = (0..288)
            .map(|i| record(&format!("l{i}"), &format!("r{i}"), 3, 1.0))
            .collect();
        let split = sample_and_split(&records, 288, 0.7, 42).unwrap();
        assert!(split.reference.len() == 201 || split.reference.len() == 202);
        assert_eq!(split.reference.len() + split.pool.len(), 288);
    }

    #[test]
    fn split_is_deterministic() {
        let records: Vec<ComparisonRecord> = (0..50)
            .map(|i| record(&format!("l{i}"), &format!("r{i}"), 3, 1.0))
            .collect();
        let a = sample_and_split(&records, 30, 0.7, 42).unwrap();
        let b = sample_and_split(&records, 30, 0.7, 42).unwrap();
        assert_eq!(a.reference, b.reference);
        assert_eq!(a.pool, b.pool);
    }

    #[test]
    fn split_ten_records_half_ratio_is_disjoint_five_five() {
        let records: Vec<ComparisonRecord> = (0..10)
            .map(|i| record(&format!("l{i}"), &format!("r{i}"), 3, 1.0))
            .collect();
        for seed in [0u64, 1, 7, 42, 9999] {
            let split = sample_and_split(&records, 10, 0.5, seed).unwrap();
            assert_eq!(split.reference.len(), 5);
            assert_eq!(split.pool.len(), 5);
            let ref_keys: BTreeSet<String> =
                split.reference.iter().map(|r| r.pair_key()).collect();
            for pool_record in &split.pool {
                assert!(!ref_keys.contains(&pool_record.pair_key()));
            }
        }
    }

    #[test]
    fn split_rejects_oversized_sample() {
        let records = vec![record("a", "b", 3, 1.0)];
        let err = sample_and_split(&records, 2, 0.5, 0).unwrap_err();
        let message = err.to_string();
        assert!(message.contains('2') && message.contains('1'), "{message}");
    }

    proptest! {
        #[test]
        fn split_disjoint_for_all_seeds(seed in any::<u64>(), n in 2usize..60, ratio in 0.05f64..0.95) {
            let records: Vec<ComparisonRecord> = (0..n)
                .map(|i| record(&format!("l{i}"), &format!("r{i}"), 3, 1.0))
                .collect();
            let split = sample_and_split(&records, n, ratio, seed).unwrap();
            let ref_keys: BTreeSet<String> = split.reference.iter().map(|r| r.pair_key()).collect();
            let pool_keys: BTreeSet<String> = split.pool.iter().map(|r| r.pair_key()).collect();
            prop_assert!(ref_keys.is_disjoint(&pool_keys));
            prop_assert_eq!(split.reference.len() + split.pool.len(), n);
            let target = n as f64 * ratio;
            prop_assert!((split.reference.len() as f64 - target).abs() <= 1.0);
        }

        #[test]
        fn filter_idempotent_for_random_inputs(
            votes in proptest::collection::vec((1u32..8, 0.0f64..=1.0), 0..40),
            min_votes in 1u32..5,
            min_agreement in 0.5f64..1.0,
        ) {
            let records: Vec<ComparisonRecord> = votes
                .iter()
                .enumerate()
                .map(|(i, (v, a))| record(&format!("l{i}"), &format!("r{i}"), *v, *a))
                .collect();
            let once = consensus_filter(&records, min_votes, min_agreement);
            let twice = consensus_filter(&once, min_votes, min_agreement);
            prop_assert_eq!(once, twice);
        }
    }
}
