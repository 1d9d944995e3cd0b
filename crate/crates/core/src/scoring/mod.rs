//! Stage 2: per-dimension score extraction through a VLM.
//!
//! Four scoring modes form a 2x2 factorial over pairwise context and
//! multi-agent reasoning:
//!
//! | arity        | single-shot | multi-agent |
//! |--------------|-------------|-------------|
//! | single image | mode 1      | mode 3      |
//! | pairwise     | mode 2      | mode 4      |
//!
//! Mode 4 chains Observer -> Debater -> Judge strictly in order, feeding
//! each transcript forward; mode 3 runs the same chain once per image with
//! the single-image prompt variants. Raw winners come from the intensity
//! rule, never from the model's own verdict.

pub mod backend;
pub mod cache;
pub mod client;
pub mod mock;

pub use backend::{BackendError, BackendResponse, ChatBackend, HttpBackend, HttpBackendConfig, TokenUsage};
pub use cache::{cache_key, ScoreCache, ScoreCacheEntry};
pub use client::{CostRates, CostSnapshot, RetryPolicy, VlmClient};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{Category, Label};
use crate::mining::{self, Dimension, DimensionSet};
use crate::prompts;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("credential error: {0}")]
    Credential(String),
    #[error("content error: {0}")]
    Content(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("{role:?} stage failed: {message}")]
    Stage { role: AgentRole, message: String },
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("cache error: {0}")]
    Cache(String),
}

/// Role of one VLM call within the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Observer,
    Debater,
    Judge,
    Single,
    Miner,
}

/// Reference to one image attachment: a URL (including synthetic
/// `image://<id>` references resolved by the mock backend) or inline
/// base64 data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageRef {
    Url(String),
    Base64 { media_type: String, data: String },
}

impl ImageRef {
    pub fn url(value: impl Into<String>) -> Self {
        ImageRef::Url(value.into())
    }

    pub fn as_url(&self) -> String {
        match self {
            ImageRef::Url(u) => u.clone(),
            ImageRef::Base64 { media_type, data } => {
                format!("data:{media_type};base64,{data}")
            }
        }
    }

    /// Image id for synthetic `image://<id>` references.
    pub fn synthetic_id(&self) -> Option<&str> {
        match self {
            ImageRef::Url(u) => u.strip_prefix("image://"),
            ImageRef::Base64 { .. } => None,
        }
    }
}

/// One outbound completion request.
#[derive(Debug, Clone)]
pub struct VlmRequest {
    pub prompt: String,
    pub images: Vec<ImageRef>,
    pub temperature: f64,
    pub role_tag: AgentRole,
}

impl VlmRequest {
    pub fn new(
        prompt: String,
        images: Vec<ImageRef>,
        temperature: f64,
        role_tag: AgentRole,
    ) -> Result<Self, ScoringError> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(ScoringError::Parameter(format!(
                "temperature must lie in [0, 2], got {temperature}"
            )));
        }
        if images.len() > 2 {
            return Err(ScoringError::Parameter(format!(
                "at most two image attachments are supported, got {}",
                images.len()
            )));
        }
        Ok(Self {
            prompt,
            images,
            temperature,
            role_tag,
        })
    }
}

/// The four scoring modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoringMode {
    SingleDirect = 1,
    PairDirect = 2,
    SingleMultiAgent = 3,
    PairMultiAgent = 4,
}

impl ScoringMode {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(ScoringMode::SingleDirect),
            2 => Some(ScoringMode::PairDirect),
            3 => Some(ScoringMode::SingleMultiAgent),
            4 => Some(ScoringMode::PairMultiAgent),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        self as u8
    }

    /// Backend calls needed per pair in this mode.
    pub fn calls_per_pair(self) -> u32 {
        match self {
            ScoringMode::SingleDirect => 2,
            ScoringMode::PairDirect => 1,
            ScoringMode::SingleMultiAgent => 6,
            ScoringMode::PairMultiAgent => 3,
        }
    }
}

/// Per-role sampling temperatures.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentTemperatures {
    pub observer: f64,
    pub debater: f64,
    pub judge: f64,
    pub single_shot: f64,
    /// Standalone dimension mining; the search loop overrides this with
    /// its own schedule.
    pub miner: f64,
}

impl Default for AgentTemperatures {
    fn default() -> Self {
        Self {
            observer: 0.3,
            debater: 0.5,
            judge: 0.1,
            single_shot: 0.0,
            miner: 0.9,
        }
    }
}

/// Default equal-intensity threshold, scaled to the dimension count.
pub fn default_sigma_i(n_dimensions: usize) -> f64 {
    0.8 * n_dimensions as f64 / 8.0
}

/// Intensity winner rule: equal below the intensity threshold, otherwise
/// the sign of the summed score difference (left iff positive).
pub fn determine_winner(
    scores_a: &[f64],
    scores_b: &[f64],
    sigma_i: f64,
) -> Result<(Label, f64), ScoringError> {
    if scores_a.len() != scores_b.len() {
        return Err(ScoringError::Shape(format!(
            "score vectors have different lengths ({} vs {})",
            scores_a.len(),
            scores_b.len()
        )));
    }
    let mut intensity = 0.0;
    let mut net = 0.0;
    for (a, b) in scores_a.iter().zip(scores_b) {
        intensity += (a - b).abs();
        net += a - b;
    }
    let label = if intensity < sigma_i {
        Label::Equal
    } else if net > 0.0 {
        Label::Left
    } else {
        Label::Right
    };
    Ok((label, intensity))
}

/// Per-dimension score vectors for one pair with the intensity verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub scores_a: Vec<f64>,
    pub scores_b: Vec<f64>,
    pub intensity: f64,
    pub raw_winner: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension_weights: Option<Vec<f64>>,
}

impl PairScores {
    /// Builds validated pair scores; the winner always comes from
    /// [`determine_winner`] so the `raw_winner == equal iff intensity <
    /// sigma_i` invariant holds by construction.
    pub fn from_scores(
        scores_a: Vec<f64>,
        scores_b: Vec<f64>,
        sigma_i: f64,
        dimension_weights: Option<Vec<f64>>,
    ) -> Result<Self, ScoringError> {
        for v in scores_a.iter().chain(scores_b.iter()) {
            if !(1.0..=10.0).contains(v) {
                return Err(ScoringError::Content(format!(
                    "score {v} outside [1, 10]"
                )));
            }
        }
        let (raw_winner, intensity) = determine_winner(&scores_a, &scores_b, sigma_i)?;
        Ok(Self {
            scores_a,
            scores_b,
            intensity,
            raw_winner,
            dimension_weights,
        })
    }

    /// The same scores seen from the swapped pair orientation.
    pub fn swapped(&self) -> Self {
        Self {
            scores_a: self.scores_b.clone(),
            scores_b: self.scores_a.clone(),
            intensity: self.intensity,
            raw_winner: self.raw_winner.flipped(),
            dimension_weights: self.dimension_weights.clone(),
        }
    }
}

/// Raw text produced by one agent call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub role: AgentRole,
    pub text: String,
}

/// Scoring input for one pair.
#[derive(Debug, Clone)]
pub struct PairRequest {
    pub left_id: String,
    pub right_id: String,
    pub category: Category,
    pub left_image: ImageRef,
    pub right_image: ImageRef,
}

impl PairRequest {
    /// Synthetic pair whose images resolve through `image://` references.
    pub fn synthetic(left_id: &str, right_id: &str, category: Category) -> Self {
        Self {
            left_id: left_id.to_string(),
            right_id: right_id.to_string(),
            category,
            left_image: ImageRef::url(format!("image://{left_id}")),
            right_image: ImageRef::url(format!("image://{right_id}")),
        }
    }

    pub fn pair_key(&self) -> String {
        format!("{}~{}", self.left_id, self.right_id)
    }

    pub fn swapped(&self) -> Self {
        Self {
            left_id: self.right_id.clone(),
            right_id: self.left_id.clone(),
            category: self.category,
            left_image: self.right_image.clone(),
            right_image: self.left_image.clone(),
        }
    }
}

/// One scored pair with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair_key: String,
    pub left_id: String,
    pub right_id: String,
    pub scores: PairScores,
    pub transcript: Vec<AgentTranscript>,
    pub from_cache: bool,
    /// Clamp warnings accumulated while parsing model output.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

// ---- score JSON parsing ----------------------------------------------------

/// Score value policy: values inside [1, 10] pass through, values inside
/// [0, 11] are clamped with a warning, anything else is a content error.
fn normalize_score(raw: f64, dimension: &str, warnings: &mut Vec<String>) -> Result<f64, String> {
    if (1.0..=10.0).contains(&raw) {
        Ok(raw)
    } else if (0.0..=11.0).contains(&raw) {
        let clamped = raw.clamp(1.0, 10.0);
        warnings.push(format!(
            "score {raw} for '{dimension}' clamped to {clamped}"
        ));
        Ok(clamped)
    } else {
        Err(format!(
            "score {raw} for '{dimension}' is outside the acceptable range [0, 11]"
        ))
    }
}

fn score_from_value(value: &serde_json::Value) -> Option<f64> {
    match value {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
}

/// Extracts one named score map aligned to the dimension order.
fn parse_score_map(
    root: &serde_json::Value,
    key: &str,
    dimensions: &[Dimension],
    warnings: &mut Vec<String>,
) -> Result<Vec<f64>, String> {
    let object = root
        .get(key)
        .and_then(|v| v.as_object())
        .ok_or_else(|| format!("missing '{key}' object"))?;
    let mut scores = Vec::with_capacity(dimensions.len());
    for dim in dimensions {
        let value = object
            .get(&dim.name)
            .or_else(|| {
                object
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case(&dim.name))
                    .map(|(_, v)| v)
            })
            .ok_or_else(|| format!("missing dimension '{}' in '{key}'", dim.name))?;
        let raw = score_from_value(value)
            .ok_or_else(|| format!("non-numeric score for '{}' in '{key}'", dim.name))?;
        scores.push(normalize_score(raw, &dim.name, warnings)?);
    }
    Ok(scores)
}

/// Optional non-negative judge-reported weights, aligned to the dimension
/// order; ignored (with a warning) when incomplete or negative.
fn parse_dimension_weights(
    root: &serde_json::Value,
    dimensions: &[Dimension],
    warnings: &mut Vec<String>,
) -> Option<Vec<f64>> {
    let object = root.get("ai_dimension_weights")?.as_object()?;
    let mut weights = Vec::with_capacity(dimensions.len());
    for dim in dimensions {
        match object
            .get(&dim.name)
            .or_else(|| {
                object
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case(&dim.name))
                    .map(|(_, v)| v)
            })
            .and_then(score_from_value)
        {
            Some(w) if w >= 0.0 => weights.push(w),
            _ => {
                warnings.push(format!(
                    "ai_dimension_weights ignored: missing or negative entry for '{}'",
                    dim.name
                ));
                return None;
            }
        }
    }
    Some(weights)
}

struct PairScoreParse {
    scores_a: Vec<f64>,
    scores_b: Vec<f64>,
    weights: Option<Vec<f64>>,
}

fn parse_pair_response(
    text: &str,
    dimensions: &[Dimension],
    warnings: &mut Vec<String>,
) -> Result<PairScoreParse, String> {
    let root = mining::extract_json_object(text).ok_or("no JSON object in response")?;
    let scores_a = parse_score_map(&root, "image_a_scores", dimensions, warnings)?;
    let scores_b = parse_score_map(&root, "image_b_scores", dimensions, warnings)?;
    let weights = parse_dimension_weights(&root, dimensions, warnings);
    Ok(PairScoreParse {
        scores_a,
        scores_b,
        weights,
    })
}

fn parse_single_response(
    text: &str,
    dimensions: &[Dimension],
    warnings: &mut Vec<String>,
) -> Result<Vec<f64>, String> {
    let root = mining::extract_json_object(text).ok_or("no JSON object in response")?;
    parse_score_map(&root, "image_scores", dimensions, warnings)
}

// ---- scorer -----------------------------------------------------------------

/// Orchestrates scoring calls for pairs, with caching and bounded
/// parallelism. The three agent calls of one pair always run on one thread
/// in chain order; across pairs at most `parallelism` calls are in flight.
pub struct Scorer {
    pub client: Arc<VlmClient>,
    pub cache: Arc<ScoreCache>,
    pub temperatures: AgentTemperatures,
    /// Override for the equal-intensity threshold; derived from the
    /// dimension count when absent.
    pub sigma_i: Option<f64>,
    pub parallelism: usize,
}

impl Scorer {
    pub fn new(client: Arc<VlmClient>, cache: Arc<ScoreCache>) -> Self {
        Self {
            client,
            cache,
            temperatures: AgentTemperatures::default(),
            sigma_i: None,
            parallelism: 4,
        }
    }

    fn effective_sigma_i(&self, dims: &DimensionSet) -> f64 {
        self.sigma_i.unwrap_or_else(|| default_sigma_i(dims.len()))
    }

    /// Scores one pair, consulting and updating the cache.
    pub fn score_pair(
        &self,
        pair: &PairRequest,
        dims: &DimensionSet,
        mode: ScoringMode,
    ) -> Result<ScoredPair, ScoringError> {
        let result = self.score_pair_no_write(pair, dims, mode)?;
        self.write_through(&result, pair, dims, mode)?;
        Ok(result)
    }

    /// Scores many pairs with bounded parallelism. Results align with the
    /// input order and cache writes happen afterwards in input order so the
    /// cache file content is deterministic.
    pub fn score_pairs(
        &self,
        pairs: &[PairRequest],
        dims: &DimensionSet,
        mode: ScoringMode,
    ) -> Vec<Result<ScoredPair, ScoringError>> {
        let n = pairs.len();
        if n == 0 {
            return Vec::new();
        }
        let workers = self.parallelism.clamp(1, n);
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<ScoredPair, ScoringError>>>> =
            (0..n).map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next.fetch_add(1, Ordering::Relaxed);
                    if index >= n {
                        break;
                    }
                    let outcome = self.score_pair_no_write(&pairs[index], dims, mode);
                    *slots[index].lock().expect("result slot") = Some(outcome);
                });
            }
        });
        let results: Vec<Result<ScoredPair, ScoringError>> = slots
            .into_iter()
            .map(|slot| slot.into_inner().expect("slot lock").expect("slot filled"))
            .collect();
        for (pair, result) in pairs.iter().zip(&results) {
            if let Ok(scored) = result {
                if let Err(e) = self.write_through(scored, pair, dims, mode) {
                    // Cache write failures do not invalidate the scores.
                    eprintln!("warning: cache write failed: {e}");
                }
            }
        }
        results
    }

    fn write_through(
        &self,
        scored: &ScoredPair,
        pair: &PairRequest,
        dims: &DimensionSet,
        mode: ScoringMode,
    ) -> Result<(), ScoringError> {
        if scored.from_cache {
            return Ok(());
        }
        self.cache.put(ScoreCacheEntry {
            key: cache_key(
                &pair.left_id,
                &pair.right_id,
                pair.category,
                &dims.digest(),
                mode,
            ),
            value: scored.scores.clone(),
            transcript: Some(scored.transcript.clone()),
        })
    }

    fn score_pair_no_write(
        &self,
        pair: &PairRequest,
        dims: &DimensionSet,
        mode: ScoringMode,
    ) -> Result<ScoredPair, ScoringError> {
        let key = cache_key(
            &pair.left_id,
            &pair.right_id,
            pair.category,
            &dims.digest(),
            mode,
        );
        if let Some(entry) = self.cache.get(&key) {
            return Ok(ScoredPair {
                pair_key: pair.pair_key(),
                left_id: pair.left_id.clone(),
                right_id: pair.right_id.clone(),
                scores: entry.value,
                transcript: entry.transcript.unwrap_or_default(),
                from_cache: true,
                warnings: Vec::new(),
            });
        }
        let sigma_i = self.effective_sigma_i(dims);
        let mut warnings = Vec::new();
        let mut transcript = Vec::new();
        let (scores_a, scores_b, weights) = match mode {
            ScoringMode::SingleDirect => {
                let a = self.score_single_direct(pair, &pair.left_image, dims, &mut warnings, &mut transcript)?;
                let b = self.score_single_direct(pair, &pair.right_image, dims, &mut warnings, &mut transcript)?;
                (a, b, None)
            }
            ScoringMode::PairDirect => {
                let parsed = self.score_pair_direct(pair, dims, &mut warnings, &mut transcript)?;
                (parsed.scores_a, parsed.scores_b, parsed.weights)
            }
            ScoringMode::SingleMultiAgent => {
                let a = self.chain_single(pair, &pair.left_image, dims, &mut warnings, &mut transcript)?;
                let b = self.chain_single(pair, &pair.right_image, dims, &mut warnings, &mut transcript)?;
                (a, b, None)
            }
            ScoringMode::PairMultiAgent => {
                let parsed = self.chain_pair(pair, dims, &mut warnings, &mut transcript)?;
                (parsed.scores_a, parsed.scores_b, parsed.weights)
            }
        };
        let scores = PairScores::from_scores(scores_a, scores_b, sigma_i, weights)?;
        Ok(ScoredPair {
            pair_key: pair.pair_key(),
            left_id: pair.left_id.clone(),
            right_id: pair.right_id.clone(),
            scores,
            transcript,
            from_cache: false,
            warnings,
        })
    }

    /// Issues one call and parses it, re-asking the same request once on a
    /// parse failure before giving up.
    fn call_parsed<T>(
        &self,
        request: &VlmRequest,
        transcript: &mut Vec<AgentTranscript>,
        mut parse: impl FnMut(&str) -> Result<T, String>,
    ) -> Result<T, ScoringError> {
        let first = self.client.complete(request)?;
        match parse(&first) {
            Ok(value) => {
                transcript.push(AgentTranscript {
                    role: request.role_tag,
                    text: first,
                });
                Ok(value)
            }
            Err(_) => {
                let second = self.client.complete(request)?;
                let outcome = parse(&second);
                transcript.push(AgentTranscript {
                    role: request.role_tag,
                    text: second,
                });
                outcome.map_err(|message| ScoringError::Stage {
                    role: request.role_tag,
                    message,
                })
            }
        }
    }

    fn score_single_direct(
        &self,
        pair: &PairRequest,
        image: &ImageRef,
        dims: &DimensionSet,
        warnings: &mut Vec<String>,
        transcript: &mut Vec<AgentTranscript>,
    ) -> Result<Vec<f64>, ScoringError> {
        let prompt = prompts::render(
            prompts::DIRECT_SINGLE_TEMPLATE,
            &[
                ("category", pair.category.as_str()),
                (
                    "dimension_definitions",
                    &prompts::render_dimension_definitions(&dims.dimensions),
                ),
            ],
        );
        let request = VlmRequest::new(
            prompt,
            vec![image.clone()],
            self.temperatures.single_shot,
            AgentRole::Single,
        )?;
        let mut local_warnings = Vec::new();
        let scores = self.call_parsed(&request, transcript, |text| {
            local_warnings.clear();
            parse_single_response(text, &dims.dimensions, &mut local_warnings)
        })?;
        warnings.extend(local_warnings);
        Ok(scores)
    }

    fn score_pair_direct(
        &self,
        pair: &PairRequest,
        dims: &DimensionSet,
        warnings: &mut Vec<String>,
        transcript: &mut Vec<AgentTranscript>,
    ) -> Result<PairScoreParse, ScoringError> {
        let prompt = prompts::render(
            prompts::DIRECT_PAIR_TEMPLATE,
            &[
                ("category", pair.category.as_str()),
                (
                    "dimension_definitions",
                    &prompts::render_dimension_definitions(&dims.dimensions),
                ),
            ],
        );
        let request = VlmRequest::new(
            prompt,
            vec![pair.left_image.clone(), pair.right_image.clone()],
            self.temperatures.single_shot,
            AgentRole::Single,
        )?;
        let mut local_warnings = Vec::new();
        let parsed = self.call_parsed(&request, transcript, |text| {
            local_warnings.clear();
            parse_pair_response(text, &dims.dimensions, &mut local_warnings)
        })?;
        warnings.extend(local_warnings);
        Ok(parsed)
    }

    /// Observer -> Debater -> Judge over both images at once.
    fn chain_pair(
        &self,
        pair: &PairRequest,
        dims: &DimensionSet,
        warnings: &mut Vec<String>,
        transcript: &mut Vec<AgentTranscript>,
    ) -> Result<PairScoreParse, ScoringError> {
        let definitions = prompts::render_dimension_definitions(&dims.dimensions);
        let images = vec![pair.left_image.clone(), pair.right_image.clone()];
        let category = pair.category.as_str();

        let observer_prompt = prompts::render(
            prompts::OBSERVER_PAIR_TEMPLATE,
            &[("category", category), ("dimension_definitions", &definitions)],
        );
        let observer_request = VlmRequest::new(
            observer_prompt,
            images.clone(),
            self.temperatures.observer,
            AgentRole::Observer,
        )?;
        let observer_text = self.call_parsed(&observer_request, transcript, |text| {
            mining::extract_json_object(text)
                .map(|_| text.to_string())
                .ok_or_else(|| "observer reply carries no JSON object".to_string())
        })?;

        let debater_prompt = prompts::render(
            prompts::DEBATER_PAIR_TEMPLATE,
            &[
                ("observer_output", observer_text.as_str()),
                ("category", category),
                ("dimension_definitions", &definitions),
            ],
        );
        let debater_request = VlmRequest::new(
            debater_prompt,
            images.clone(),
            self.temperatures.debater,
            AgentRole::Debater,
        )?;
        let debater_text = self.call_parsed(&debater_request, transcript, |text| {
            mining::extract_json_object(text)
                .map(|_| text.to_string())
                .ok_or_else(|| "debater reply carries no JSON object".to_string())
        })?;

        let judge_prompt = prompts::render(
            prompts::JUDGE_PAIR_TEMPLATE,
            &[
                ("observer_output", observer_text.as_str()),
                ("debater_output", debater_text.as_str()),
                ("category", category),
                ("dimension_definitions", &definitions),
            ],
        );
        let judge_request = VlmRequest::new(
            judge_prompt,
            images,
            self.temperatures.judge,
            AgentRole::Judge,
        )?;
        let mut local_warnings = Vec::new();
        let parsed = self.call_parsed(&judge_request, transcript, |text| {
            local_warnings.clear();
            parse_pair_response(text, &dims.dimensions, &mut local_warnings)
        })?;
        warnings.extend(local_warnings);
        Ok(parsed)
    }

    /// Observer -> Debater -> Judge for one image.
    fn chain_single(
        &self,
        pair: &PairRequest,
        image: &ImageRef,
        dims: &DimensionSet,
        warnings: &mut Vec<String>,
        transcript: &mut Vec<AgentTranscript>,
    ) -> Result<Vec<f64>, ScoringError> {
        let definitions = prompts::render_dimension_definitions(&dims.dimensions);
        let category = pair.category.as_str();
        let images = vec![image.clone()];

        let observer_prompt = prompts::render(
            prompts::OBSERVER_SINGLE_TEMPLATE,
            &[("category", category), ("dimension_definitions", &definitions)],
        );
        let observer_request = VlmRequest::new(
            observer_prompt,
            images.clone(),
            self.temperatures.observer,
            AgentRole::Observer,
        )?;
        let observer_text = self.call_parsed(&observer_request, transcript, |text| {
            mining::extract_json_object(text)
                .map(|_| text.to_string())
                .ok_or_else(|| "observer reply carries no JSON object".to_string())
        })?;

        let debater_prompt = prompts::render(
            prompts::DEBATER_SINGLE_TEMPLATE,
            &[
                ("observer_output", observer_text.as_str()),
                ("category", category),
                ("dimension_definitions", &definitions),
            ],
        );
        let debater_request = VlmRequest::new(
            debater_prompt,
            images.clone(),
            self.temperatures.debater,
            AgentRole::Debater,
        )?;
        let debater_text = self.call_parsed(&debater_request, transcript, |text| {
            mining::extract_json_object(text)
                .map(|_| text.to_string())
                .ok_or_else(|| "debater reply carries no JSON object".to_string())
        })?;

        let judge_prompt = prompts::render(
            prompts::JUDGE_SINGLE_TEMPLATE,
            &[
                ("observer_output", observer_text.as_str()),
                ("debater_output", debater_text.as_str()),
                ("category", category),
                ("dimension_definitions", &definitions),
            ],
        );
        let judge_request = VlmRequest::new(
            judge_prompt,
            images,
            self.temperatures.judge,
            AgentRole::Judge,
        )?;
        let mut local_warnings = Vec::new();
        let scores = self.call_parsed(&judge_request, transcript, |text| {
            local_warnings.clear();
            parse_single_response(text, &dims.dimensions, &mut local_warnings)
        })?;
        warnings.extend(local_warnings);
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::mock::FixtureBackend;
    use super::*;
    use crate::dataio::Category;

    fn dims(n: usize) -> DimensionSet {
        let names = [
            "Facade Upkeep",
            "Greenery Care",
            "Road Surface",
            "Vehicle Condition",
            "Building Age",
            "Utility Condition",
            "Litter Level",
            "Light Coverage",
        ];
        let dimensions = names
            .iter()
            .take(n)
            .map(|name| Dimension {
                name: name.to_string(),
                description: "d".to_string(),
                high_indicator: "h".to_string(),
                low_indicator: "l".to_string(),
            })
            .collect();
        DimensionSet::new(Category::Wealthy, dimensions, "manual").unwrap()
    }

    fn scores_json(key_a: &str, a: f64, key_b: Option<(&str, f64)>, names: &[&str]) -> String {
        let map_a: Vec<String> = names.iter().map(|n| format!("\"{n}\":{a}")).collect();
        match key_b {
            Some((kb, b)) => {
                let map_b: Vec<String> = names.iter().map(|n| format!("\"{n}\":{b}")).collect();
                format!(
                    "{{\"{key_a}\":{{{}}},\"{kb}\":{{{}}},\"winner\":\"left\"}}",
                    map_a.join(","),
                    map_b.join(",")
                )
            }
            None => format!("{{\"{key_a}\":{{{}}}}}", map_a.join(",")),
        }
    }

    fn names(n: usize) -> Vec<&'static str> {
        [
            "Facade Upkeep",
            "Greenery Care",
            "Road Surface",
            "Vehicle Condition",
            "Building Age",
            "Utility Condition",
            "Litter Level",
            "Light Coverage",
        ][..n]
            .to_vec()
    }

    #[test]
    fn determine_winner_identical_vectors_is_equal_zero() {
        let (label, intensity) = determine_winner(&[5.0, 5.0], &[5.0, 5.0], 0.5).unwrap();
        assert_eq!(label, Label::Equal);
        assert_eq!(intensity, 0.0);
    }

    #[test]
    fn determine_winner_above_threshold_is_left() {
        let (label, intensity) = determine_winner(&[6.0, 6.0], &[5.0, 5.0], 1.5).unwrap();
        assert_eq!(intensity, 2.0);
        assert_eq!(label, Label::Left);
    }

    #[test]
    fn determine_winner_below_threshold_is_equal() {
        let (label, intensity) = determine_winner(&[6.0, 4.0], &[5.0, 5.0], 3.0).unwrap();
        assert_eq!(intensity, 2.0);
        assert_eq!(label, Label::Equal);
    }

    #[test]
    fn determine_winner_rejects_shape_mismatch() {
        assert!(matches!(
            determine_winner(&[5.0], &[5.0, 5.0], 1.0),
            Err(ScoringError::Shape(_))
        ));
    }

    #[test]
    fn pair_swap_is_antisymmetric() {
        let scores = PairScores::from_scores(
            vec![9.0, 2.0, 5.0],
            vec![1.0, 8.0, 5.0],
            1.0,
            None,
        )
        .unwrap();
        let swapped = scores.swapped();
        assert_eq!(swapped.scores_a, scores.scores_b);
        assert_eq!(swapped.intensity, scores.intensity);
        assert_eq!(swapped.raw_winner, scores.raw_winner.flipped());
    }

    #[test]
    fn extreme_scores_give_intensity_64_over_8_dims() {
        let scores =
            PairScores::from_scores(vec![9.0; 8], vec![1.0; 8], default_sigma_i(8), None)
                .unwrap();
        assert_eq!(scores.intensity, 64.0);
        assert_eq!(scores.raw_winner, Label::Left);
    }

    #[test]
    fn all_fives_mock_yields_equal() {
        let d = dims(5);
        let reply = scores_json("image_scores", 5.0, None, &names(5));
        let backend = Arc::new(FixtureBackend::constant(&reply));
        let client = Arc::new(VlmClient::new(
            backend,
            RetryPolicy {
                base_delay_ms: 0,
                ..Default::default()
            },
            CostRates::default(),
        ));
        let scorer = Scorer::new(client, Arc::new(ScoreCache::in_memory()));
        let pair = PairRequest::synthetic("a", "b", Category::Wealthy);
        let scored = scorer
            .score_pair(&pair, &d, ScoringMode::SingleDirect)
            .unwrap();
        assert_eq!(scored.scores.intensity, 0.0);
        assert_eq!(scored.scores.raw_winner, Label::Equal);
    }

    #[test]
    fn missing_dimension_errors_after_one_reask() {
        let d = dims(5);
        // Reply covers only 4 of the 5 dimensions.
        let reply = scores_json("image_scores", 5.0, None, &names(4));
        let backend = Arc::new(FixtureBackend::constant(&reply));
        let client = Arc::new(VlmClient::new(
            backend.clone(),
            RetryPolicy {
                base_delay_ms: 0,
                ..Default::default()
            },
            CostRates::default(),
        ));
        let scorer = Scorer::new(client, Arc::new(ScoreCache::in_memory()));
        let pair = PairRequest::synthetic("a", "b", Category::Wealthy);
        let err = scorer
            .score_pair(&pair, &d, ScoringMode::SingleDirect)
            .unwrap_err();
        match err {
            ScoringError::Stage { role, message } => {
                assert_eq!(role, AgentRole::Single);
                assert!(message.contains("Building Age"), "{message}");
            }
            other => panic!("expected stage error, got {other:?}"),
        }
        // First image: initial ask + one re-ask.
        assert_eq!(backend.calls(), 2);
    }

    #[test]
    fn clamp_policy_warns_inside_zero_eleven() {
        let d = dims(5);
        let reply = scores_json("image_scores", 0.5, None, &names(5));
        let backend = Arc::new(FixtureBackend::constant(&reply));
        let client = Arc::new(VlmClient::new(
            backend,
            RetryPolicy {
                base_delay_ms: 0,
                ..Default::default()
            },
            CostRates::default(),
        ));
        let scorer = Scorer::new(client, Arc::new(ScoreCache::in_memory()));
        let pair = PairRequest::synthetic("a", "b", Category::Wealthy);
        let scored = scorer
            .score_pair(&pair, &d, ScoringMode::SingleDirect)
            .unwrap();
        assert!(scored.scores.scores_a.iter().all(|&v| v == 1.0));
        assert!(!scored.warnings.is_empty());
    }

    #[test]
    fn wild_scores_are_content_errors() {
        let d = dims(5);
        let reply = scores_json("image_scores", 42.0, None, &names(5));
        let backend = Arc::new(FixtureBackend::constant(&reply));
        let client = Arc::new(VlmClient::new(
            backend,
            RetryPolicy {
                base_delay_ms: 0,
                ..Default::default()
            },
            CostRates::default(),
        ));
        let scorer = Scorer::new(client, Arc::new(ScoreCache::in_memory()));
        let pair = PairRequest::synthetic("a", "b", Category::Wealthy);
        assert!(scorer
            .score_pair(&pair, &d, ScoringMode::SingleDirect)
            .is_err());
    }

    #[test]
    fn mode_call_counts_match_contract() {
        // Exercise each mode against role-keyed fixtures and count calls.
        let d = dims(5);
        let n = names(5);
        let pair_reply = scores_json("image_a_scores", 7.0, Some(("image_b_scores", 3.0)), &n);
        let single_reply = scores_json("image_scores", 6.0, None, &n);
        let observer_reply = r#"{"observations":{}}"#.to_string();
        let debater_reply = r#"{"debates":{}}"#.to_string();
        for (mode, expected_calls) in [
            (ScoringMode::SingleDirect, 2u64),
            (ScoringMode::PairDirect, 1),
            (ScoringMode::SingleMultiAgent, 6),
            (ScoringMode::PairMultiAgent, 3),
        ] {
            let backend = Arc::new(
                FixtureBackend::by_role()
                    .with(AgentRole::Observer, &observer_reply)
                    .with(AgentRole::Debater, &debater_reply)
                    .with(
                        AgentRole::Judge,
                        if mode == ScoringMode::SingleMultiAgent {
                            &single_reply
                        } else {
                            &pair_reply
                        },
                    )
                    .with(
                        AgentRole::Single,
                        if mode == ScoringMode::SingleDirect {
                            &single_reply
                        } else {
                            &pair_reply
                        },
                    ),
            );
            let client = Arc::new(VlmClient::new(
                backend.clone(),
                RetryPolicy {
                    base_delay_ms: 0,
                    ..Default::default()
                },
                CostRates::default(),
            ));
            let scorer = Scorer::new(client, Arc::new(ScoreCache::in_memory()));
            let pair = PairRequest::synthetic("a", "b", Category::Wealthy);
            let scored = scorer.score_pair(&pair, &d, mode).unwrap();
            assert_eq!(backend.calls(), expected_calls, "mode {mode:?}");
            assert_eq!(mode.calls_per_pair() as u64, expected_calls);
            assert!(!scored.from_cache);
        }
    }

    #[test]
    fn second_run_hits_cache_with_zero_calls() {
        let d = dims(5);
        let reply = scores_json("image_a_scores", 7.0, Some(("image_b_scores", 3.0)), &names(5));
        let backend = Arc::new(FixtureBackend::constant(&reply));
        let client = Arc::new(VlmClient::new(
            backend.clone(),
            RetryPolicy {
                base_delay_ms: 0,
                ..Default::default()
            },
            CostRates::default(),
        ));
        let cache = Arc::new(ScoreCache::in_memory());
        let scorer = Scorer::new(client, cache);
        let pairs: Vec<PairRequest> = (0..6)
            .map(|i| PairRequest::synthetic(&format!("l{i}"), &format!("r{i}"), Category::Wealthy))
            .collect();
        let first: Vec<_> = scorer.score_pairs(&pairs, &d, ScoringMode::PairDirect);
        assert!(first.iter().all(|r| r.is_ok()));
        let calls_after_first = backend.calls();
        assert_eq!(calls_after_first, 6);
        let second: Vec<_> = scorer.score_pairs(&pairs, &d, ScoringMode::PairDirect);
        assert!(second.iter().all(|r| r.as_ref().unwrap().from_cache));
        assert_eq!(backend.calls(), calls_after_first, "no new backend calls");
    }

    #[test]
    fn pairwise_chain_cost_scales_linearly() {
        // Three calls per pair in the pairwise multi-agent mode: a full
        // 1,643-pair corpus costs 4,929 calls.
        assert_eq!(ScoringMode::PairMultiAgent.calls_per_pair() as u64 * 1_643, 4_929);
    }

    #[test]
    fn truncated_response_is_a_content_error() {
        use crate::scoring::backend::{BackendResponse, TokenUsage};
        struct Truncating;
        impl crate::scoring::ChatBackend for Truncating {
            fn complete(
                &self,
                _request: &VlmRequest,
            ) -> Result<BackendResponse, crate::scoring::BackendError> {
                Ok(BackendResponse {
                    text: "cut off".to_string(),
                    usage: TokenUsage { input: 10, output: 2 },
                    truncated: true,
                })
            }
            fn name(&self) -> &'static str {
                "truncating"
            }
        }
        let client = VlmClient::new(
            Arc::new(Truncating),
            RetryPolicy { base_delay_ms: 0, ..Default::default() },
            CostRates::default(),
        );
        let request =
            VlmRequest::new("p".to_string(), vec![], 0.0, AgentRole::Single).unwrap();
        assert!(matches!(
            client.complete(&request),
            Err(ScoringError::Content(_))
        ));
    }

    #[test]
    fn temperature_outside_range_is_rejected() {
        assert!(VlmRequest::new("p".into(), vec![], 2.5, AgentRole::Single).is_err());
    }
}
