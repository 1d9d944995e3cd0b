//! Stage orchestration shared by the CLI and the dimension-set search.
//!
//! Each function covers one pipeline stage over in-memory data; artifact
//! reading and writing lives with the CLI. Stages are per category:
//! ingest -> rate -> mine -> score -> calibrate -> evaluate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    self, CalibrationError, CalibrationResult, HybridConfig, QueryInput, ReferencePairInput,
};
use crate::dataio::{
    Category, ComparisonRecord, DataError, DatasetSplit, ImageRecord, Label, PCA_DIM,
};
use crate::evaluation::{self, EvalError, EvalReport};
use crate::mining::{self, ConsensusConfig, DimensionSet, MiningError};
use crate::ratings::{Rating, RatingError};
use crate::scoring::{
    AgentRole, ImageRef, PairRequest, PairScores, ScoredPair, Scorer, ScoringError, ScoringMode,
    VlmRequest,
};
use crate::seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error("composition error: {0}")]
    Composition(String),
}

/// One calibrated pool pair as written to the calibration report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub left_id: String,
    pub right_id: String,
    pub human_label: Label,
    pub raw_winner: Label,
    #[serde(flatten)]
    pub result: CalibrationResult,
}

/// Splits the already-filtered records of one category.
pub fn split_category(
    records: &[ComparisonRecord],
    category: Category,
    sample_size: Option<usize>,
    ratio: f64,
    seed: u64,
) -> Result<DatasetSplit, PipelineError> {
    let of_category: Vec<ComparisonRecord> = records
        .iter()
        .filter(|r| r.category == category)
        .cloned()
        .collect();
    let sample = sample_size.unwrap_or(of_category.len()).min(of_category.len());
    Ok(crate::dataio::sample_and_split(
        &of_category,
        sample,
        ratio,
        seed::derive_seed(seed, "dataio.split", &[category as u64]),
    )?)
}

/// Ratings over the reference comparisons only, preserving the isolation of
/// the pool set.
pub fn rate_reference(
    split: &DatasetSplit,
    cfg: &crate::ratings::RatingConfig,
) -> Result<BTreeMap<String, Rating>, PipelineError> {
    Ok(crate::ratings::rate_all(&split.reference, cfg)?)
}

/// Runs Stage 1 for one category: consensus sampling, PCA compression,
/// prompt assembly, one VLM call (plus one re-ask on a parse failure), and
/// response validation.
#[allow(clippy::too_many_arguments)]
pub fn mine_dimensions(
    scorer: &Scorer,
    ratings: &BTreeMap<String, Rating>,
    embeddings: &BTreeMap<String, ImageRecord>,
    category: Category,
    consensus_cfg: &ConsensusConfig,
    temperature: f64,
    elite: Option<&DimensionSet>,
    provenance: &str,
) -> Result<DimensionSet, PipelineError> {
    let consensus = mining::sample_consensus(ratings, category, consensus_cfg)?;
    // Fit the compression on every image of the category so exemplar
    // coordinates live in a stable shared basis.
    let ids: Vec<&String> = embeddings.keys().collect();
    let matrix: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| embeddings[*id].clip_embedding.clone())
        .collect();
    let projected = mining::pca_fit_transform(&matrix, PCA_DIM)?;
    let pca_map: BTreeMap<String, Vec<f64>> = ids
        .into_iter()
        .cloned()
        .zip(projected)
        .collect();
    let mut prompt =
        mining::build_extraction_prompt(&consensus, ratings, &pca_map, category)?;
    if let Some(elite_set) = elite {
        prompt.push_str(&crate::prompts::render(
            crate::prompts::ELITE_REFERENCE_TEMPLATE,
            &[(
                "elite_dimensions",
                &crate::prompts::render_dimension_definitions(&elite_set.dimensions),
            )],
        ));
    }
    let request = VlmRequest::new(
        prompt,
        Vec::new(),
        temperature.clamp(0.0, 2.0),
        AgentRole::Miner,
    )?;
    let first = scorer.client.complete(&request)?;
    match mining::parse_dimension_response(&first, category, provenance) {
        Ok(set) => Ok(set),
        Err(_) => {
            let second = scorer.client.complete(&request)?;
            Ok(mining::parse_dimension_response(&second, category, provenance)
                .map_err(MiningError::from)?)
        }
    }
}

/// Builds scoring requests for a record list.
pub fn pair_requests(records: &[ComparisonRecord]) -> Vec<PairRequest> {
    records
        .iter()
        .map(|r| PairRequest {
            left_id: r.left_id.clone(),
            right_id: r.right_id.clone(),
            category: r.category,
            left_image: ImageRef::url(format!("image://{}", r.left_id)),
            right_image: ImageRef::url(format!("image://{}", r.right_id)),
        })
        .collect()
}

/// Scores a record list, failing on the first scoring error.
pub fn score_records(
    scorer: &Scorer,
    records: &[ComparisonRecord],
    dims: &DimensionSet,
    mode: ScoringMode,
) -> Result<Vec<ScoredPair>, PipelineError> {
    let requests = pair_requests(records);
    scorer
        .score_pairs(&requests, dims, mode)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(PipelineError::from)
}

fn lookup<'a, T>(
    map: &'a BTreeMap<String, T>,
    id: &str,
    what: &str,
    pair: &str,
) -> Result<&'a T, PipelineError> {
    map.get(id).ok_or_else(|| {
        PipelineError::Composition(format!("pair {pair}: no {what} for image '{id}'"))
    })
}

/// Assembles manifold inputs for the reference split, naming any pair with
/// missing scores, embeddings, or ratings.
pub fn assemble_reference_inputs(
    reference: &[ComparisonRecord],
    scored: &BTreeMap<String, PairScores>,
    embeddings: &BTreeMap<String, ImageRecord>,
    ratings: &BTreeMap<String, Rating>,
) -> Result<Vec<ReferencePairInput>, PipelineError> {
    reference
        .iter()
        .map(|record| {
            let key = record.pair_key();
            let scores = scored.get(&key).ok_or_else(|| {
                PipelineError::Composition(format!("pair {key}: no scores recorded"))
            })?;
            let left = lookup(embeddings, &record.left_id, "embedding", &key)?;
            let right = lookup(embeddings, &record.right_id, "embedding", &key)?;
            let mu_a = lookup(ratings, &record.left_id, "rating", &key)?.mu;
            let mu_b = lookup(ratings, &record.right_id, "rating", &key)?.mu;
            Ok(ReferencePairInput {
                left_id: record.left_id.clone(),
                right_id: record.right_id.clone(),
                clip_a: left.clip_embedding.clone(),
                clip_b: right.clip_embedding.clone(),
                sem_a: scores.scores_a.clone(),
                sem_b: scores.scores_b.clone(),
                mu_a,
                mu_b,
                label: record.label,
            })
        })
        .collect()
}

/// Calibrates the pool split against the reference manifold and applies
/// confidence selection. Records keep their human label and the raw
/// intensity winner for evaluation.
pub fn calibrate_pool(
    pool: &[ComparisonRecord],
    scored_pool: &BTreeMap<String, PairScores>,
    manifold: &[calibration::ReferencePoint],
    embeddings: &BTreeMap<String, ImageRecord>,
    cfg: &HybridConfig,
) -> Result<Vec<CalibrationRecord>, PipelineError> {
    let mut records = Vec::with_capacity(pool.len());
    for record in pool {
        let key = record.pair_key();
        let scores = scored_pool.get(&key).ok_or_else(|| {
            PipelineError::Composition(format!("pair {key}: no scores recorded"))
        })?;
        let left = lookup(embeddings, &record.left_id, "embedding", &key)?;
        let right = lookup(embeddings, &record.right_id, "embedding", &key)?;
        let query = QueryInput {
            left_id: record.left_id.clone(),
            right_id: record.right_id.clone(),
            clip_a: left.clip_embedding.clone(),
            clip_b: right.clip_embedding.clone(),
            sem_a: scores.scores_a.clone(),
            sem_b: scores.scores_b.clone(),
        };
        let result = calibration::calibrate_pair(&query, manifold, cfg)?;
        records.push(CalibrationRecord {
            left_id: record.left_id.clone(),
            right_id: record.right_id.clone(),
            human_label: record.label,
            raw_winner: scores.raw_winner,
            result,
        });
    }
    // Confidence selection over the calibrated margins.
    let results: Vec<CalibrationResult> =
        records.iter().map(|r| r.result.clone()).collect();
    let kept = calibration::apply_selection(&results, cfg.selection_ratio)?;
    let kept_keys: std::collections::BTreeSet<&str> =
        kept.iter().map(|r| r.pair_key.as_str()).collect();
    Ok(records
        .into_iter()
        .filter(|r| kept_keys.contains(r.result.pair_key.as_str()))
        .collect())
}

/// Evaluation of one calibrated category: metrics for the calibrated
/// predictions and for the raw intensity winners over the same
/// post-selection pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryEvaluation {
    pub calibrated: EvalReport,
    pub raw: EvalReport,
}

pub fn evaluate_records(
    records: &[CalibrationRecord],
    scored_pool: &BTreeMap<String, PairScores>,
    dims: &DimensionSet,
) -> Result<CategoryEvaluation, PipelineError> {
    let labels: Vec<Label> = records.iter().map(|r| r.human_label).collect();
    let calibrated_preds: Vec<Label> = records.iter().map(|r| r.result.predicted).collect();
    let raw_preds: Vec<Label> = records.iter().map(|r| r.raw_winner).collect();

    let mut score_pairs = Vec::new();
    let mut decided_labels = Vec::new();
    for record in records {
        let key = format!("{}~{}", record.left_id, record.right_id);
        if let Some(scored) = scored_pool.get(&key) {
            score_pairs.push((scored.scores_a.clone(), scored.scores_b.clone()));
            decided_labels.push(record.human_label);
        }
    }
    let names: Vec<String> = dims.dimensions.iter().map(|d| d.name.clone()).collect();
    let power = evaluation::dimension_power(&score_pairs, &decided_labels, &names)
        .unwrap_or_default();
    let calibrated = evaluation::build_report(&calibrated_preds, &labels, power.clone())?;
    let raw = evaluation::build_report(&raw_preds, &labels, power)?;
    Ok(CategoryEvaluation { calibrated, raw })
}

/// Deterministic subsample of a split (used for search trial evaluation).
pub fn subsample_split(split: &DatasetSplit, ratio: f64, seed: u64) -> DatasetSplit {
    use rand::seq::SliceRandom;
    let take = |records: &[ComparisonRecord], label: u64| -> Vec<ComparisonRecord> {
        if ratio >= 1.0 {
            return records.to_vec();
        }
        let mut shuffled = records.to_vec();
        let mut rng = seed::derive_rng(seed, "pipeline.subsample", &[label]);
        shuffled.shuffle(&mut rng);
        let keep = ((records.len() as f64 * ratio).round() as usize)
            .clamp(1.min(records.len()), records.len());
        shuffled.truncate(keep);
        shuffled
    };
    DatasetSplit {
        reference: take(&split.reference, 0),
        pool: take(&split.pool, 1),
        seed: split.seed,
        ratio: split.ratio,
    }
}

/// Index scored pairs by pair key, keeping only the score payload.
pub fn scored_by_key(scored: Vec<ScoredPair>) -> BTreeMap<String, PairScores> {
    scored
        .into_iter()
        .map(|s| (s.pair_key.clone(), s.scores))
        .collect()
}

/// Runs score -> calibrate -> evaluate for one category with provided
/// ratings and dimension set. This is the unit of work repeated inside
/// every search trial.
pub fn run_category(
    scorer: &Scorer,
    split: &DatasetSplit,
    embeddings: &BTreeMap<String, ImageRecord>,
    ratings: &BTreeMap<String, Rating>,
    dims: &DimensionSet,
    mode: ScoringMode,
    cfg: &HybridConfig,
) -> Result<(Vec<CalibrationRecord>, CategoryEvaluation), PipelineError> {
    let scored_ref = scored_by_key(score_records(scorer, &split.reference, dims, mode)?);
    let scored_pool = scored_by_key(score_records(scorer, &split.pool, dims, mode)?);
    let inputs =
        assemble_reference_inputs(&split.reference, &scored_ref, embeddings, ratings)?;
    let manifold = calibration::build_reference_manifold(&inputs, cfg)?;
    let records = calibrate_pool(&split.pool, &scored_pool, &manifold, embeddings, cfg)?;
    let evaluation = evaluate_records(&records, &scored_pool, dims)?;
    Ok((records, evaluation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::ColumnSchema;
    use crate::scoring::{CostRates, RetryPolicy, ScoreCache, VlmClient};
    use crate::synth::{SynthConfig, SyntheticBackend, SyntheticWorld};
    use std::sync::Arc;

    fn build_scorer(config: &SynthConfig) -> Scorer {
        let backend = Arc::new(SyntheticBackend::from_config(config));
        let client = Arc::new(VlmClient::new(
            backend,
            RetryPolicy {
                base_delay_ms: 0,
                ..Default::default()
            },
            CostRates::default(),
        ));
        Scorer::new(client, Arc::new(ScoreCache::in_memory()))
    }

    #[test]
    fn full_category_pipeline_runs_on_synthetic_world() {
        let config = SynthConfig::default();
        let world = SyntheticWorld::generate(&config);
        let outcome = crate::dataio::parse_comparisons(
            world.comparisons_csv().as_bytes(),
            &ColumnSchema::default(),
        )
        .unwrap();
        let filtered = crate::dataio::consensus_filter(&outcome.records, 3, 0.5);
        assert!(filtered.len() >= 20, "filtered {}", filtered.len());
        let split =
            split_category(&filtered, Category::Wealthy, None, 0.7, config.seed).unwrap();
        let ratings = rate_reference(&split, &Default::default()).unwrap();
        let embeddings = world.image_records();
        let dims = crate::mining::DimensionSet::new(
            Category::Wealthy,
            SyntheticWorld::true_dimensions(),
            "manual",
        )
        .unwrap();
        let scorer = build_scorer(&config);
        let (records, evaluation) = run_category(
            &scorer,
            &split,
            &embeddings,
            &ratings,
            &dims,
            ScoringMode::PairMultiAgent,
            &HybridConfig::default(),
        )
        .unwrap();
        assert_eq!(records.len(), split.pool.len());
        assert!(evaluation.calibrated.n_total > 0);
        // The planted structure must be learnable: calibrated accuracy
        // beats the raw intensity winner.
        assert!(
            evaluation.calibrated.acc_excl > evaluation.raw.acc_excl,
            "calibrated {} vs raw {}",
            evaluation.calibrated.acc_excl,
            evaluation.raw.acc_excl
        );
    }

    #[test]
    fn mining_stage_produces_valid_set() {
        let config = SynthConfig::default();
        let world = SyntheticWorld::generate(&config);
        let outcome = crate::dataio::parse_comparisons(
            world.comparisons_csv().as_bytes(),
            &ColumnSchema::default(),
        )
        .unwrap();
        let filtered = crate::dataio::consensus_filter(&outcome.records, 3, 0.5);
        let split =
            split_category(&filtered, Category::Wealthy, None, 0.7, config.seed).unwrap();
        let ratings = rate_reference(&split, &Default::default()).unwrap();
        let embeddings = world.image_records();
        let scorer = build_scorer(&config);
        let dims = mine_dimensions(
            &scorer,
            &ratings,
            &embeddings,
            Category::Wealthy,
            &SynthConfig::fixture_consensus(),
            0.9,
            None,
            "trial-0",
        )
        .unwrap();
        assert!(dims.len() >= 5 && dims.len() <= 10);
        assert_eq!(dims.provenance, "trial-0");
    }

    #[test]
    fn missing_scores_name_the_pair() {
        let config = SynthConfig::default();
        let world = SyntheticWorld::generate(&config);
        let outcome = crate::dataio::parse_comparisons(
            world.comparisons_csv().as_bytes(),
            &ColumnSchema::default(),
        )
        .unwrap();
        let filtered = crate::dataio::consensus_filter(&outcome.records, 3, 0.5);
        let split =
            split_category(&filtered, Category::Wealthy, None, 0.7, config.seed).unwrap();
        let ratings = rate_reference(&split, &Default::default()).unwrap();
        let embeddings = world.image_records();
        let err = assemble_reference_inputs(
            &split.reference,
            &BTreeMap::new(),
            &embeddings,
            &ratings,
        )
        .unwrap_err();
        let expected = split.reference[0].pair_key();
        assert!(err.to_string().contains(&expected), "{err}");
    }

    #[test]
    fn subsample_is_deterministic_and_bounded() {
        let config = SynthConfig::default();
        let world = SyntheticWorld::generate(&config);
        let outcome = crate::dataio::parse_comparisons(
            world.comparisons_csv().as_bytes(),
            &ColumnSchema::default(),
        )
        .unwrap();
        let filtered = crate::dataio::consensus_filter(&outcome.records, 3, 0.5);
        let split =
            split_category(&filtered, Category::Wealthy, None, 0.7, config.seed).unwrap();
        let a = subsample_split(&split, 0.2, 7);
        let b = subsample_split(&split, 0.2, 7);
        assert_eq!(a.reference.len(), b.reference.len());
        assert!(a.reference.len() < split.reference.len());
        assert_eq!(
            a.reference.iter().map(|r| r.pair_key()).collect::<Vec<_>>(),
            b.reference.iter().map(|r| r.pair_key()).collect::<Vec<_>>()
        );
    }
}
