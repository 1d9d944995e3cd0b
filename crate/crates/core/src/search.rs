//! End-to-end dimension-set optimization.
//!
//! Trials run in two phases: an explore phase with fresh extraction at
//! rising generation temperature, then a converge phase that mutates each
//! category's current best set (1-2 targeted replacements) at falling
//! temperature. After the initial trial the per-category elite is injected
//! into generation prompts as a soft reference. The loop stops early after
//! `patience` consecutive trials in which no category improved its running
//! best, and the final assembly takes each category's argmax across all
//! trials, so the assembled accuracy dominates every single trial by
//! construction.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{Category, DatasetSplit, ImageRecord};
use crate::mining::{self, DimensionSet};
use crate::pipeline::{self, PipelineError};
use crate::prompts;
use crate::ratings::Rating;
use crate::scoring::{AgentRole, Scorer, ScoringMode, VlmRequest};
use crate::seed;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("state error: {0}")]
    State(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Search phase of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Explore,
    Converge,
}

/// Settings for the optimization loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub trials: usize,
    pub patience: usize,
    pub explore_trials: usize,
    /// Generation temperature endpoints for the explore phase (inclusive).
    pub explore_tau: (f64, f64),
    /// Generation temperature endpoints for the converge phase (inclusive).
    pub converge_tau: (f64, f64),
    /// Dimensions replaced per converge-phase mutation (1 or 2).
    pub mutation_count: usize,
    /// Fraction of each split scored per trial.
    pub eval_sample_ratio: f64,
    pub seed: u64,
    /// Whether the elite set is injected during explore trials too.
    pub elite_in_explore: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            trials: 15,
            patience: 5,
            explore_trials: 6,
            explore_tau: (0.85, 1.0),
            converge_tau: (0.7, 0.5),
            mutation_count: 1,
            eval_sample_ratio: 0.2,
            seed: 42,
            elite_in_explore: true,
        }
    }
}

impl SearchConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.trials < self.explore_trials {
            out.push(format!(
                "trials ({}) must be at least explore_trials ({})",
                self.trials, self.explore_trials
            ));
        }
        if self.patience < 1 {
            out.push("patience must be at least 1".to_string());
        }
        if self.explore_trials < 1 {
            out.push("explore_trials must be at least 1".to_string());
        }
        if !(1..=2).contains(&self.mutation_count) {
            out.push(format!(
                "mutation_count must be 1 or 2, got {}",
                self.mutation_count
            ));
        }
        if !(self.eval_sample_ratio > 0.0 && self.eval_sample_ratio <= 1.0) {
            out.push(format!(
                "eval_sample_ratio must lie in (0, 1], got {}",
                self.eval_sample_ratio
            ));
        }
        out
    }
}

/// Linear interpolation over each phase's trial span, endpoints inclusive.
pub fn temperature_schedule(
    trial_index: usize,
    cfg: &SearchConfig,
) -> Result<(Phase, f64), SearchError> {
    if trial_index >= cfg.trials {
        return Err(SearchError::Parameter(format!(
            "trial index {trial_index} out of range for {} trials",
            cfg.trials
        )));
    }
    let lerp = |lo: f64, hi: f64, step: usize, span: usize| -> f64 {
        if span == 0 {
            lo
        } else {
            lo + (hi - lo) * (step as f64 / span as f64)
        }
    };
    if trial_index < cfg.explore_trials {
        Ok((
            Phase::Explore,
            lerp(
                cfg.explore_tau.0,
                cfg.explore_tau.1,
                trial_index,
                cfg.explore_trials - 1,
            ),
        ))
    } else {
        let step = trial_index - cfg.explore_trials;
        let span = cfg.trials - 1 - cfg.explore_trials;
        Ok((
            Phase::Converge,
            lerp(cfg.converge_tau.0, cfg.converge_tau.1, step, span),
        ))
    }
}

/// One category's outcome inside a trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CategoryTrial {
    Ok {
        dimension_set: DimensionSet,
        accuracy: f64,
        kappa: Option<f64>,
    },
    Error {
        message: String,
    },
}

/// Ledger record of one trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub phase: Phase,
    pub tau_gen: f64,
    pub per_category: BTreeMap<Category, CategoryTrial>,
}

/// Running best for one category.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryBest {
    pub dimension_set: DimensionSet,
    pub accuracy: f64,
    pub kappa: Option<f64>,
    pub source_trial: usize,
}

/// Final search outcome: the trial ledger plus the per-category assembly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub trials: Vec<TrialRecord>,
    pub best: BTreeMap<Category, CategoryBest>,
    /// Categories for which every trial failed.
    pub unresolved: Vec<Category>,
    pub stopped_early: bool,
}

/// Everything a trial needs to run the scoring/calibration pipeline.
pub struct SearchContext<'a> {
    pub scorer: &'a Scorer,
    pub categories: Vec<Category>,
    pub splits: &'a BTreeMap<Category, DatasetSplit>,
    pub embeddings: &'a BTreeMap<String, ImageRecord>,
    pub ratings: &'a BTreeMap<Category, BTreeMap<String, Rating>>,
    pub consensus: mining::ConsensusConfig,
    pub hybrid: crate::calibration::HybridConfig,
    pub mode: ScoringMode,
}

/// Generates one candidate dimension set for a category.
///
/// Explore trials run a full extraction at the scheduled temperature, with
/// the elite appended as a soft reference when present and enabled.
/// Converge trials copy the elite verbatim except for `mutation_count`
/// freshly generated replacements.
pub fn generate_candidate(
    context: &SearchContext,
    cfg: &SearchConfig,
    category: Category,
    trial_index: usize,
    phase: Phase,
    tau_gen: f64,
    elite: Option<&DimensionSet>,
) -> Result<DimensionSet, SearchError> {
    let provenance = format!("trial-{trial_index}");
    match phase {
        Phase::Explore => {
            let elite_for_prompt = if cfg.elite_in_explore { elite } else { None };
            let ratings = context.ratings.get(&category).ok_or_else(|| {
                SearchError::State(format!("no ratings for category {category}"))
            })?;
            Ok(pipeline::mine_dimensions(
                context.scorer,
                ratings,
                context.embeddings,
                category,
                &context.consensus,
                tau_gen,
                elite_for_prompt,
                &provenance,
            )?)
        }
        Phase::Converge => {
            let elite = elite.ok_or_else(|| {
                SearchError::State(format!(
                    "converge trial {trial_index} for {category} has no elite set"
                ))
            })?;
            let mut rng = seed::derive_rng(
                cfg.seed,
                "search.mutate",
                &[trial_index as u64, category as u64],
            );
            let mut indices: Vec<usize> = (0..elite.len()).collect();
            indices.shuffle(&mut rng);
            let replace: Vec<usize> = indices
                .into_iter()
                .take(cfg.mutation_count.clamp(1, 2))
                .collect();
            let kept: Vec<mining::Dimension> = elite
                .dimensions
                .iter()
                .enumerate()
                .filter(|(i, _)| !replace.contains(i))
                .map(|(_, d)| d.clone())
                .collect();
            let prompt = prompts::render(
                prompts::MUTATION_TEMPLATE,
                &[
                    ("category", category.as_str()),
                    (
                        "kept_dimensions",
                        &prompts::render_dimension_definitions(&kept),
                    ),
                    ("replacement_count", &replace.len().to_string()),
                ],
            );
            let request = VlmRequest::new(
                prompt,
                Vec::new(),
                tau_gen.clamp(0.0, 2.0),
                AgentRole::Miner,
            )
            .map_err(PipelineError::from)?;
            let parse = |text: &str| -> Result<Vec<mining::Dimension>, String> {
                let replacements =
                    mining::parse_dimension_list(text).map_err(|e| e.to_string())?;
                if replacements.len() != replace.len() {
                    return Err(format!(
                        "expected {} replacement dimensions, got {}",
                        replace.len(),
                        replacements.len()
                    ));
                }
                for r in &replacements {
                    if kept.iter().any(|k| k.name.eq_ignore_ascii_case(&r.name)) {
                        return Err(format!("replacement '{}' collides with a kept name", r.name));
                    }
                }
                Ok(replacements)
            };
            let first = context
                .scorer
                .client
                .complete(&request)
                .map_err(PipelineError::from)?;
            let replacements = match parse(&first) {
                Ok(r) => r,
                Err(_) => {
                    let second = context
                        .scorer
                        .client
                        .complete(&request)
                        .map_err(PipelineError::from)?;
                    parse(&second).map_err(SearchError::State)?
                }
            };
            let mut dimensions = elite.dimensions.clone();
            for (slot, replacement) in replace.iter().zip(replacements) {
                dimensions[*slot] = replacement;
            }
            Ok(DimensionSet::new(category, dimensions, provenance)
                .map_err(mining::MiningError::from)
                .map_err(PipelineError::from)?)
        }
    }
}

/// Runs one trial: per category, generate a candidate, score the evaluation
/// subsample, calibrate, and record accuracy. Per-category failures land in
/// the record without aborting the other categories.
pub fn run_trial(
    context: &SearchContext,
    cfg: &SearchConfig,
    trial_index: usize,
    phase: Phase,
    tau_gen: f64,
    bests: &BTreeMap<Category, CategoryBest>,
) -> TrialRecord {
    let mut per_category = BTreeMap::new();
    for &category in &context.categories {
        let outcome = run_trial_category(
            context,
            cfg,
            trial_index,
            phase,
            tau_gen,
            category,
            bests.get(&category).map(|b| &b.dimension_set),
        );
        per_category.insert(
            category,
            match outcome {
                Ok(trial) => trial,
                Err(e) => CategoryTrial::Error {
                    message: e.to_string(),
                },
            },
        );
    }
    TrialRecord {
        trial_index,
        phase,
        tau_gen,
        per_category,
    }
}

fn run_trial_category(
    context: &SearchContext,
    cfg: &SearchConfig,
    trial_index: usize,
    phase: Phase,
    tau_gen: f64,
    category: Category,
    elite: Option<&DimensionSet>,
) -> Result<CategoryTrial, SearchError> {
    let candidate =
        generate_candidate(context, cfg, category, trial_index, phase, tau_gen, elite)?;
    let split = context.splits.get(&category).ok_or_else(|| {
        SearchError::State(format!("no split for category {category}"))
    })?;
    let ratings = context.ratings.get(&category).ok_or_else(|| {
        SearchError::State(format!("no ratings for category {category}"))
    })?;
    let eval_split = pipeline::subsample_split(
        split,
        cfg.eval_sample_ratio,
        seed::derive_seed(cfg.seed, "search.eval_sample", &[category as u64]),
    );
    let (_, evaluation) = pipeline::run_category(
        context.scorer,
        &eval_split,
        context.embeddings,
        ratings,
        &candidate,
        context.mode,
        &context.hybrid,
    )?;
    Ok(CategoryTrial::Ok {
        dimension_set: candidate,
        accuracy: evaluation.calibrated.acc_excl,
        kappa: evaluation.calibrated.kappa_excl,
    })
}

/// Core loop over a pluggable trial runner; `optimize` instantiates it with
/// the real pipeline, tests may stub the runner.
pub fn optimize_with<R, C>(
    cfg: &SearchConfig,
    preloaded: Vec<TrialRecord>,
    mut runner: R,
    mut on_trial: C,
) -> Result<SearchOutcome, SearchError>
where
    R: FnMut(usize, Phase, f64, &BTreeMap<Category, CategoryBest>) -> TrialRecord,
    C: FnMut(&TrialRecord),
{
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(SearchError::Parameter(violations.join("; ")));
    }
    let mut trials: Vec<TrialRecord> = Vec::new();
    let mut best: BTreeMap<Category, CategoryBest> = BTreeMap::new();
    let mut seen_categories: Vec<Category> = Vec::new();
    let mut streak = 0usize;
    let mut stopped_early = false;

    let absorb = |record: &TrialRecord,
                      best: &mut BTreeMap<Category, CategoryBest>,
                      seen: &mut Vec<Category>|
     -> bool {
        let mut improved = false;
        for (&category, outcome) in &record.per_category {
            if !seen.contains(&category) {
                seen.push(category);
            }
            if let CategoryTrial::Ok {
                dimension_set,
                accuracy,
                kappa,
            } = outcome
            {
                let is_better = best
                    .get(&category)
                    .map(|b| *accuracy > b.accuracy)
                    .unwrap_or(true);
                if is_better {
                    best.insert(
                        category,
                        CategoryBest {
                            dimension_set: dimension_set.clone(),
                            accuracy: *accuracy,
                            kappa: *kappa,
                            source_trial: record.trial_index,
                        },
                    );
                    improved = true;
                }
            }
        }
        improved
    };

    for record in preloaded {
        let improved = absorb(&record, &mut best, &mut seen_categories);
        streak = if improved { 0 } else { streak + 1 };
        trials.push(record);
    }
    if streak >= cfg.patience {
        stopped_early = true;
    }

    let mut index = trials.len();
    while index < cfg.trials && !stopped_early {
        let (phase, tau_gen) = temperature_schedule(index, cfg)?;
        let record = runner(index, phase, tau_gen, &best);
        on_trial(&record);
        let improved = absorb(&record, &mut best, &mut seen_categories);
        streak = if improved { 0 } else { streak + 1 };
        trials.push(record);
        if streak >= cfg.patience {
            stopped_early = true;
        }
        index += 1;
    }

    let unresolved: Vec<Category> = seen_categories
        .into_iter()
        .filter(|c| !best.contains_key(c))
        .collect();
    Ok(SearchOutcome {
        trials,
        best,
        unresolved,
        stopped_early,
    })
}

/// Runs the full optimization over the real pipeline. `preloaded` holds
/// trial records from an interrupted run; `on_trial` is invoked after each
/// fresh trial (the CLI persists the ledger there).
pub fn optimize<C: FnMut(&TrialRecord)>(
    cfg: &SearchConfig,
    context: &SearchContext,
    preloaded: Vec<TrialRecord>,
    on_trial: C,
) -> Result<SearchOutcome, SearchError> {
    optimize_with(
        cfg,
        preloaded,
        |index, phase, tau, bests| run_trial(context, cfg, index, phase, tau, bests),
        on_trial,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Category;
    use crate::mining::Dimension;

    fn cfg() -> SearchConfig {
        SearchConfig::default()
    }

    fn dims(tag: &str) -> DimensionSet {
        let dimensions = (0..5)
            .map(|i| Dimension {
                name: format!("{tag}-{i}"),
                description: "d".to_string(),
                high_indicator: "h".to_string(),
                low_indicator: "l".to_string(),
            })
            .collect();
        DimensionSet::new(Category::Wealthy, dimensions, tag).unwrap()
    }

    fn ok_trial(index: usize, phase: Phase, tau: f64, accuracy: f64) -> TrialRecord {
        let mut per_category = BTreeMap::new();
        per_category.insert(
            Category::Wealthy,
            CategoryTrial::Ok {
                dimension_set: dims(&format!("t{index}")),
                accuracy,
                kappa: Some(0.1),
            },
        );
        TrialRecord {
            trial_index: index,
            phase,
            tau_gen: tau,
            per_category,
        }
    }

    #[test]
    fn schedule_endpoints_are_exact() {
        let cfg = cfg();
        assert_eq!(
            temperature_schedule(0, &cfg).unwrap(),
            (Phase::Explore, 0.85)
        );
        assert_eq!(
            temperature_schedule(5, &cfg).unwrap(),
            (Phase::Explore, 1.0)
        );
        assert_eq!(
            temperature_schedule(6, &cfg).unwrap(),
            (Phase::Converge, 0.7)
        );
        assert_eq!(
            temperature_schedule(14, &cfg).unwrap(),
            (Phase::Converge, 0.5)
        );
    }

    #[test]
    fn schedule_is_monotone_within_phases() {
        let cfg = cfg();
        for i in 1..6 {
            let (_, a) = temperature_schedule(i - 1, &cfg).unwrap();
            let (_, b) = temperature_schedule(i, &cfg).unwrap();
            assert!(b > a);
        }
        for i in 7..15 {
            let (_, a) = temperature_schedule(i - 1, &cfg).unwrap();
            let (_, b) = temperature_schedule(i, &cfg).unwrap();
            assert!(b < a);
        }
    }

    #[test]
    fn schedule_rejects_out_of_range_index() {
        assert!(temperature_schedule(15, &cfg()).is_err());
    }

    #[test]
    fn early_stop_after_patience_non_improving_trials() {
        // Improvements through trial 6, nothing afterwards: the loop must
        // stop after trial 11 (patience 5).
        let outcome = optimize_with(
            &cfg(),
            Vec::new(),
            |index, phase, tau, _| {
                let accuracy = if index <= 6 { 0.5 + index as f64 * 0.01 } else { 0.1 };
                ok_trial(index, phase, tau, accuracy)
            },
            |_| {},
        )
        .unwrap();
        assert!(outcome.stopped_early);
        assert_eq!(outcome.trials.len(), 12); // indices 0..=11
        assert_eq!(outcome.trials.last().unwrap().trial_index, 11);
        assert_eq!(outcome.best[&Category::Wealthy].source_trial, 6);
    }

    #[test]
    fn stop_never_fires_before_patience_trials() {
        // Even with zero improvements ever (every trial fails), at least
        // `patience` trials run.
        let outcome = optimize_with(
            &cfg(),
            Vec::new(),
            |index, phase, tau, _| {
                let mut per_category = BTreeMap::new();
                per_category.insert(
                    Category::Wealthy,
                    CategoryTrial::Error {
                        message: "backend exploded".to_string(),
                    },
                );
                TrialRecord {
                    trial_index: index,
                    phase,
                    tau_gen: tau,
                    per_category,
                }
            },
            |_| {},
        )
        .unwrap();
        assert_eq!(outcome.trials.len(), cfg().patience);
        assert!(outcome.stopped_early);
        assert_eq!(outcome.unresolved, vec![Category::Wealthy]);
    }

    #[test]
    fn assembly_sources_the_argmax_trials() {
        // Planted per-category peaks at trials 1, 2, 7, 1, 10, 1.
        let planted: BTreeMap<Category, usize> = [
            (Category::Safety, 1usize),
            (Category::Beautiful, 2),
            (Category::Lively, 7),
            (Category::Wealthy, 1),
            (Category::Boring, 10),
            (Category::Depressing, 1),
        ]
        .into_iter()
        .collect();
        let planted_for_runner = planted.clone();
        let outcome = optimize_with(
            &cfg(),
            Vec::new(),
            move |index, phase, tau, _| {
                let mut per_category = BTreeMap::new();
                for (&category, &peak) in &planted_for_runner {
                    let accuracy = if index == peak { 0.9 } else { 0.4 };
                    per_category.insert(
                        category,
                        CategoryTrial::Ok {
                            dimension_set: dims(&format!("{category}-{index}")),
                            accuracy,
                            kappa: None,
                        },
                    );
                }
                TrialRecord {
                    trial_index: index,
                    phase,
                    tau_gen: tau,
                    per_category,
                }
            },
            |_| {},
        )
        .unwrap();
        for (category, peak) in planted {
            assert_eq!(outcome.best[&category].source_trial, peak, "{category}");
        }
        // Argmax dominance: the assembled accuracy is the max over trials.
        for best in outcome.best.values() {
            assert!((best.accuracy - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn preloaded_trials_resume_the_streak() {
        let preloaded: Vec<TrialRecord> = (0..8)
            .map(|i| {
                let accuracy = if i == 0 { 0.9 } else { 0.1 };
                ok_trial(i, Phase::Explore, 0.9, accuracy)
            })
            .collect();
        // 7 trailing non-improving trials >= patience 5: resume stops at once.
        let mut ran = 0usize;
        let outcome = optimize_with(
            &cfg(),
            preloaded,
            |index, phase, tau, _| {
                ran += 1;
                ok_trial(index, phase, tau, 0.1)
            },
            |_| {},
        )
        .unwrap();
        assert_eq!(ran, 0);
        assert!(outcome.stopped_early);
        assert_eq!(outcome.trials.len(), 8);
    }

    #[test]
    fn invalid_config_is_rejected_with_all_violations() {
        let bad = SearchConfig {
            trials: 2,
            explore_trials: 6,
            mutation_count: 4,
            eval_sample_ratio: 0.0,
            ..Default::default()
        };
        let err = optimize_with(&bad, Vec::new(), |i, p, t, _| ok_trial(i, p, t, 0.5), |_| {})
            .unwrap_err();
        let message = err.to_string();
        assert!(message.contains("trials"));
        assert!(message.contains("mutation_count"));
        assert!(message.contains("eval_sample_ratio"));
    }
}
