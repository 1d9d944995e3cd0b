//! Stage 3: locally-weighted ridge calibration on the hybrid differential
//! manifold.
//!
//! Reference pairs become hybrid differential points (alpha-weighted
//! normalized visual difference concatenated with the (1-alpha)-weighted
//! semantic score difference over 10), doubled by mirror augmentation. Each
//! pool pair is calibrated by a ridge fit over its K nearest neighbours
//! under exponential cosine-similarity weights, and the fitted margin is
//! re-inferred into {left, right, equal} with the epsilon threshold and the
//! local equal-consensus rule.
//!
//! Calibrating a pair and its swap against the same manifold yields exactly
//! negated margins: neighbour selection is twin-consistent and the ridge
//! accumulation runs in a mirror-invariant order, so every floating-point
//! product is identical between the two orientations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::Label;
use crate::linalg::{self, SquareMatrix};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("composition error: {0}")]
    Composition(String),
}

/// Stage-3 hyperparameters. JSON keys mirror the field names, with the
/// neighbourhood size spelled `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HybridConfig {
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub tau_kernel: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub theta: f64,
    pub selection_ratio: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            k: 20,
            tau_kernel: 1.0,
            lambda: 1.0,
            epsilon: 0.8,
            theta: 0.6,
            selection_ratio: 1.0,
        }
    }
}

impl HybridConfig {
    /// Collects every range violation instead of stopping at the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.alpha) {
            out.push(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.k < 1 {
            out.push("K must be at least 1".to_string());
        }
        if self.tau_kernel <= 0.0 {
            out.push(format!(
                "tau_kernel must be positive, got {}",
                self.tau_kernel
            ));
        }
        if self.lambda < 0.0 {
            out.push(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.epsilon < 0.0 {
            out.push(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            out.push(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        if !(self.selection_ratio > 0.0 && self.selection_ratio <= 1.0) {
            out.push(format!(
                "selection_ratio must lie in (0, 1], got {}",
                self.selection_ratio
            ));
        }
        out
    }
}

/// One manifold point: a reference pair seen in one orientation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub hybrid: Vec<f64>,
    /// Raw semantic score difference S(A) - S(B) (not /10-normalized).
    pub sem_diff: Vec<f64>,
    /// Rating-mean difference mu_A - mu_B, the regression target.
    pub y_ts: f64,
    pub label: Label,
    /// Display identity; mirror twins carry a `~mirror` suffix.
    pub pair_key: String,
    /// Identity of the underlying reference pair, shared with the twin.
    pub source_key: String,
    pub mirror: bool,
}

/// Everything needed to place one reference pair on the manifold.
#[derive(Debug, Clone)]
pub struct ReferencePairInput {
    pub left_id: String,
    pub right_id: String,
    pub clip_a: Vec<f64>,
    pub clip_b: Vec<f64>,
    pub sem_a: Vec<f64>,
    pub sem_b: Vec<f64>,
    pub mu_a: f64,
    pub mu_b: f64,
    pub label: Label,
}

/// A pool pair to calibrate.
#[derive(Debug, Clone)]
pub struct QueryInput {
    pub left_id: String,
    pub right_id: String,
    pub clip_a: Vec<f64>,
    pub clip_b: Vec<f64>,
    pub sem_a: Vec<f64>,
    pub sem_b: Vec<f64>,
}

/// Calibrated margin with its local diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub pair_key: String,
    pub delta_hat: f64,
    pub weights: Vec<f64>,
    /// Weighted local goodness of fit; `None` when the neighbourhood target
    /// variance is degenerate.
    pub r2: Option<f64>,
    /// Fraction of neighbours whose human label is `equal`.
    pub equal_consensus: f64,
    pub predicted: Label,
    pub neighbour_keys: Vec<String>,
    pub degenerate: bool,
}

/// Builds the hybrid differential vector
/// `[alpha * (a/|a| - b/|b|), (1 - alpha) * (sem_a - sem_b) / 10]`.
pub fn hybrid_diff(
    clip_a: &[f64],
    clip_b: &[f64],
    sem_a: &[f64],
    sem_b: &[f64],
    alpha: f64,
) -> Result<Vec<f64>, CalibrationError> {
    if clip_a.len() != clip_b.len() {
        return Err(CalibrationError::Shape(format!(
            "visual embeddings differ in length ({} vs {})",
            clip_a.len(),
            clip_b.len()
        )));
    }
    if sem_a.len() != sem_b.len() {
        return Err(CalibrationError::Shape(format!(
            "semantic score vectors differ in length ({} vs {})",
            sem_a.len(),
            sem_b.len()
        )));
    }
    let norm_a = linalg::norm(clip_a);
    let norm_b = linalg::norm(clip_b);
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(CalibrationError::Numeric(
            "visual embedding has zero norm".to_string(),
        ));
    }
    let mut out = Vec::with_capacity(clip_a.len() + sem_a.len());
    for (a, b) in clip_a.iter().zip(clip_b) {
        out.push(alpha * (a / norm_a - b / norm_b));
    }
    for (a, b) in sem_a.iter().zip(sem_b) {
        out.push((1.0 - alpha) * ((a - b) / 10.0));
    }
    Ok(out)
}

/// Mirror-suffix marker on reference point keys.
const MIRROR_SUFFIX: &str = "~mirror";

/// Builds the mirror-augmented reference manifold: every input yields its
/// point plus a twin with hybrid, semantic difference, and target negated
/// bitwise and the label flipped.
pub fn build_reference_manifold(
    inputs: &[ReferencePairInput],
    cfg: &HybridConfig,
) -> Result<Vec<ReferencePoint>, CalibrationError> {
    let mut manifold = Vec::with_capacity(inputs.len() * 2);
    for input in inputs {
        let hybrid = hybrid_diff(
            &input.clip_a,
            &input.clip_b,
            &input.sem_a,
            &input.sem_b,
            cfg.alpha,
        )
        .map_err(|e| match e {
            CalibrationError::Numeric(m) => CalibrationError::Composition(format!(
                "pair {}~{}: {m}",
                input.left_id, input.right_id
            )),
            other => other,
        })?;
        let sem_diff: Vec<f64> = input
            .sem_a
            .iter()
            .zip(&input.sem_b)
            .map(|(a, b)| a - b)
            .collect();
        let y_ts = input.mu_a - input.mu_b;
        let source_key = format!("{}~{}", input.left_id, input.right_id);
        let mirrored_hybrid: Vec<f64> = hybrid.iter().map(|v| -v).collect();
        let mirrored_sem: Vec<f64> = sem_diff.iter().map(|v| -v).collect();
        manifold.push(ReferencePoint {
            hybrid,
            sem_diff,
            y_ts,
            label: input.label,
            pair_key: source_key.clone(),
            source_key: source_key.clone(),
            mirror: false,
        });
        manifold.push(ReferencePoint {
            hybrid: mirrored_hybrid,
            sem_diff: mirrored_sem,
            y_ts: -y_ts,
            label: input.label.flipped(),
            pair_key: format!("{}~{}{MIRROR_SUFFIX}", input.right_id, input.left_id),
            source_key,
            mirror: true,
        });
    }
    Ok(manifold)
}

/// Exhaustive K-nearest-neighbour search under cosine similarity.
///
/// Returns up to `k` `(manifold index, similarity)` entries ordered by
/// descending similarity; ties break by source key then orientation so that
/// a query and its negation select twin sets. Manifold points with zero
/// hybrid norm are skipped.
pub fn knn_cosine(
    query: &[f64],
    manifold: &[ReferencePoint],
    k: usize,
) -> Result<Vec<(usize, f64)>, CalibrationError> {
    if manifold.is_empty() {
        return Err(CalibrationError::Parameter(
            "manifold is empty".to_string(),
        ));
    }
    if linalg::norm(query) == 0.0 {
        return Err(CalibrationError::Numeric(
            "query hybrid vector has zero norm".to_string(),
        ));
    }
    let mut scored: Vec<(usize, f64)> = manifold
        .iter()
        .enumerate()
        .filter_map(|(i, point)| {
            linalg::cosine_similarity(query, &point.hybrid).map(|sim| (i, sim))
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| manifold[a.0].source_key.cmp(&manifold[b.0].source_key))
            .then_with(|| manifold[a.0].mirror.cmp(&manifold[b.0].mirror))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Exponential kernel weights `w_i = exp(s_i / tau)`.
pub fn kernel_weights(similarities: &[f64], tau_kernel: f64) -> Result<Vec<f64>, CalibrationError> {
    if tau_kernel <= 0.0 {
        return Err(CalibrationError::Parameter(format!(
            "tau_kernel must be positive, got {tau_kernel}"
        )));
    }
    Ok(similarities.iter().map(|s| (s / tau_kernel).exp()).collect())
}

/// Weighted ridge solve `(X^T W X + lambda I) w = X^T W y` via Cholesky
/// factorization, with an iterative-refinement residual check.
pub fn ridge_solve(
    x_rows: &[Vec<f64>],
    weights: &[f64],
    y: &[f64],
    lambda: f64,
) -> Result<Vec<f64>, CalibrationError> {
    let k = x_rows.len();
    if k == 0 {
        return Err(CalibrationError::Parameter(
            "ridge solve needs at least one row".to_string(),
        ));
    }
    if weights.len() != k || y.len() != k {
        return Err(CalibrationError::Shape(format!(
            "row count {k} does not match weights ({}) or targets ({})",
            weights.len(),
            y.len()
        )));
    }
    if lambda < 0.0 {
        return Err(CalibrationError::Parameter(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    let n = x_rows[0].len();
    if x_rows.iter().any(|row| row.len() != n) {
        return Err(CalibrationError::Shape(
            "design rows have inconsistent lengths".to_string(),
        ));
    }
    let mut a = SquareMatrix::zeros(n);
    let mut b = vec![0.0f64; n];
    for ((row, &w), &target) in x_rows.iter().zip(weights).zip(y) {
        for (p, &row_p) in row.iter().enumerate() {
            let wr = w * row_p;
            for (q, &row_q) in row.iter().enumerate() {
                a.add_to(p, q, wr * row_q);
            }
            b[p] += wr * target;
        }
    }
    for d in 0..n {
        a.add_to(d, d, lambda);
    }
    let mut solution = linalg::cholesky_solve(&a, &b).map_err(|e| {
        CalibrationError::Numeric(format!("ridge system is singular: {e}"))
    })?;
    // Residual check with up to two refinement passes.
    let b_scale = linalg::norm(&b).max(f64::MIN_POSITIVE);
    for _ in 0..3 {
        let residual: Vec<f64> = a
            .mul_vec(&solution)
            .iter()
            .zip(&b)
            .map(|(lhs, rhs)| lhs - rhs)
            .collect();
        if linalg::norm(&residual) / b_scale < 1e-9 {
            return Ok(solution);
        }
        let correction = linalg::cholesky_solve(&a, &residual).map_err(|e| {
            CalibrationError::Numeric(format!("refinement solve failed: {e}"))
        })?;
        for (s, c) in solution.iter_mut().zip(&correction) {
            *s -= c;
        }
    }
    let residual: Vec<f64> = a
        .mul_vec(&solution)
        .iter()
        .zip(&b)
        .map(|(lhs, rhs)| lhs - rhs)
        .collect();
    if linalg::norm(&residual) / b_scale < 1e-9 {
        Ok(solution)
    } else {
        Err(CalibrationError::Numeric(
            "ridge solve failed to reach 1e-9 relative residual".to_string(),
        ))
    }
}

/// Weighted local R^2 about the weighted mean. `None` when the weighted
/// target variance falls below 1e-12.
pub fn local_r2(
    x_rows: &[Vec<f64>],
    weights: &[f64],
    y: &[f64],
    w_hat: &[f64],
) -> Option<f64> {
    let weight_sum: f64 = weights.iter().sum();
    if weight_sum <= 0.0 {
        return None;
    }
    let mut y_mean = 0.0;
    for (&w, &target) in weights.iter().zip(y) {
        y_mean += w * target;
    }
    y_mean /= weight_sum;
    let mut ss_tot = 0.0;
    let mut ss_res = 0.0;
    for ((row, &w), &target) in x_rows.iter().zip(weights).zip(y) {
        let fitted = linalg::dot(w_hat, row);
        ss_res += w * (target - fitted) * (target - fitted);
        ss_tot += w * (target - y_mean) * (target - y_mean);
    }
    if ss_tot < 1e-12 {
        None
    } else {
        Some(1.0 - ss_res / ss_tot)
    }
}

/// Calibrates one pool pair against the manifold: neighbourhood search,
/// kernel weighting, local ridge fit, margin prediction, and statistical
/// re-inference.
pub fn calibrate_pair(
    query: &QueryInput,
    manifold: &[ReferencePoint],
    cfg: &HybridConfig,
) -> Result<CalibrationResult, CalibrationError> {
    let n_dims = query.sem_a.len();
    let pair_key = format!("{}~{}", query.left_id, query.right_id);
    let hybrid = hybrid_diff(&query.clip_a, &query.clip_b, &query.sem_a, &query.sem_b, cfg.alpha)?;
    if linalg::norm(&hybrid) == 0.0 {
        return Ok(CalibrationResult {
            pair_key,
            delta_hat: 0.0,
            weights: vec![0.0; n_dims],
            r2: None,
            equal_consensus: 0.0,
            predicted: Label::Equal,
            neighbour_keys: Vec::new(),
            degenerate: true,
        });
    }
    let mut selected = knn_cosine(&hybrid, manifold, cfg.k)?;
    // Mirror-invariant accumulation order: source key, then similarity,
    // then orientation. Twin selections of a query and its negation thus
    // produce identical floating-point sums.
    selected.sort_by(|a, b| {
        manifold[a.0]
            .source_key
            .cmp(&manifold[b.0].source_key)
            .then_with(|| b.1.total_cmp(&a.1))
            .then_with(|| manifold[a.0].mirror.cmp(&manifold[b.0].mirror))
    });
    let sims: Vec<f64> = selected.iter().map(|(_, s)| *s).collect();
    let weights = kernel_weights(&sims, cfg.tau_kernel)?;
    let x_rows: Vec<Vec<f64>> = selected
        .iter()
        .map(|(i, _)| manifold[*i].sem_diff.iter().map(|v| v / 10.0).collect())
        .collect();
    let targets: Vec<f64> = selected.iter().map(|(i, _)| manifold[*i].y_ts).collect();
    if x_rows.iter().any(|row| row.len() != n_dims) {
        return Err(CalibrationError::Shape(
            "manifold semantic dimension does not match the query".to_string(),
        ));
    }
    let w_hat = ridge_solve(&x_rows, &weights, &targets, cfg.lambda)?;
    let r2 = local_r2(&x_rows, &weights, &targets, &w_hat);
    let query_sem: Vec<f64> = query
        .sem_a
        .iter()
        .zip(&query.sem_b)
        .map(|(a, b)| (a - b) / 10.0)
        .collect();
    let delta_hat = linalg::dot(&w_hat, &query_sem);
    let equal_count = selected
        .iter()
        .filter(|(i, _)| manifold[*i].label == Label::Equal)
        .count();
    let equal_consensus = equal_count as f64 / selected.len() as f64;
    let predicted = reinfer(delta_hat, equal_consensus, cfg);
    Ok(CalibrationResult {
        pair_key,
        delta_hat,
        weights: w_hat,
        r2,
        equal_consensus,
        predicted,
        neighbour_keys: selected
            .iter()
            .map(|(i, _)| manifold[*i].pair_key.clone())
            .collect(),
        degenerate: false,
    })
}

/// Statistical re-inference: equal when the margin is inside the epsilon
/// band or the neighbourhood equal-consensus exceeds theta, otherwise the
/// sign of the margin.
pub fn reinfer(delta_hat: f64, equal_consensus: f64, cfg: &HybridConfig) -> Label {
    if delta_hat.abs() < cfg.epsilon || equal_consensus > cfg.theta {
        Label::Equal
    } else if delta_hat > 0.0 {
        Label::Left
    } else {
        Label::Right
    }
}

/// Confidence-based selection: retains the `ceil(ratio * N)` results with
/// the largest `|delta_hat|` (ties broken by pair key), preserving the
/// original order of the survivors.
pub fn apply_selection(
    results: &[CalibrationResult],
    selection_ratio: f64,
) -> Result<Vec<CalibrationResult>, CalibrationError> {
    if !(selection_ratio > 0.0 && selection_ratio <= 1.0) {
        return Err(CalibrationError::Parameter(format!(
            "selection_ratio must lie in (0, 1], got {selection_ratio}"
        )));
    }
    let keep = (selection_ratio * results.len() as f64).ceil() as usize;
    if keep >= results.len() {
        return Ok(results.to_vec());
    }
    let mut ranked: Vec<usize> = (0..results.len()).collect();
    ranked.sort_by(|&a, &b| {
        results[b]
            .delta_hat
            .abs()
            .total_cmp(&results[a].delta_hat.abs())
            .then_with(|| results[a].pair_key.cmp(&results[b].pair_key))
    });
    let mut keep_flags = vec![false; results.len()];
    for &index in ranked.iter().take(keep) {
        keep_flags[index] = true;
    }
    Ok(results
        .iter()
        .zip(keep_flags)
        .filter(|(_, keep)| *keep)
        .map(|(r, _)| r.clone())
        .collect())
}

/// Spread statistics of one dimension's local weight across results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionWeightStats {
    pub dimension_index: usize,
    pub mean: f64,
    /// Population standard deviation (divide by N).
    pub std: f64,
    /// std / |mean|; `None` when |mean| < 1e-12.
    pub cv: Option<f64>,
}

/// Per-dimension weight statistics across calibration results, sorted by
/// |mean| descending.
pub fn weight_statistics(
    results: &[CalibrationResult],
) -> Result<Vec<DimensionWeightStats>, CalibrationError> {
    if results.len() < 2 {
        return Err(CalibrationError::Parameter(format!(
            "weight statistics need at least 2 results, got {}",
            results.len()
        )));
    }
    let n_dims = results[0].weights.len();
    if results.iter().any(|r| r.weights.len() != n_dims) {
        return Err(CalibrationError::Shape(
            "weight vectors have inconsistent lengths".to_string(),
        ));
    }
    let count = results.len() as f64;
    let mut stats = Vec::with_capacity(n_dims);
    for dim in 0..n_dims {
        let mean = results.iter().map(|r| r.weights[dim]).sum::<f64>() / count;
        let variance = results
            .iter()
            .map(|r| {
                let d = r.weights[dim] - mean;
                d * d
            })
            .sum::<f64>()
            / count;
        let std = variance.sqrt();
        let cv = if mean.abs() < 1e-12 {
            None
        } else {
            Some(std / mean.abs())
        };
        stats.push(DimensionWeightStats {
            dimension_index: dim,
            mean,
            std,
            cv,
        });
    }
    stats.sort_by(|a, b| {
        b.mean
            .abs()
            .total_cmp(&a.mean.abs())
            .then_with(|| a.dimension_index.cmp(&b.dimension_index))
    });
    Ok(stats)
}
