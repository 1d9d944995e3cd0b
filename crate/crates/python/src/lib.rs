//! Python bindings for the preference-calibration core.
//!
//! Exposes the numeric pipeline pieces: vote-table parsing, consensus
//! filtering and splits, rating updates, the intensity winner rule, PCA
//! compression, dimension-response parsing, the hybrid differential
//! manifold with locally-weighted ridge calibration, and the evaluation
//! metrics. Build with `cargo build -p prefcal-python`, then rename the
//! produced `libprefcal_py.so` to `prefcal.so` on the Python path (the
//! bundled smoke test does this automatically).

use std::collections::BTreeMap;
use std::str::FromStr;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use prefcal::calibration::{
    self, CalibrationResult, HybridConfig, QueryInput, ReferencePairInput, ReferencePoint,
};
use prefcal::dataio::{Category, ColumnSchema, ComparisonRecord, Label};
use prefcal::evaluation;
use prefcal::mining;
use prefcal::ratings::{self, Rating, RatingConfig};
use prefcal::scoring;
use prefcal::search::{temperature_schedule, Phase, SearchConfig};

fn value_error(error: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(error.to_string())
}

type ParsedComparisons = (Py<PyList>, Vec<(u64, String)>);

fn parse_label(token: &str) -> PyResult<Label> {
    match token.to_ascii_lowercase().as_str() {
        "left" => Ok(Label::Left),
        "right" => Ok(Label::Right),
        "equal" => Ok(Label::Equal),
        other => Err(value_error(format!("unknown label '{other}'"))),
    }
}

fn parse_category(token: &str) -> PyResult<Category> {
    Category::from_str(token).map_err(value_error)
}

fn parse_labels(tokens: Vec<String>) -> PyResult<Vec<Label>> {
    tokens.iter().map(|t| parse_label(t)).collect()
}

/// Gaussian rating state of one image.
#[pyclass(name = "Rating", frozen, from_py_object)]
#[derive(Clone)]
struct PyRating {
    #[pyo3(get)]
    mu: f64,
    #[pyo3(get)]
    sigma: f64,
}

#[pymethods]
impl PyRating {
    #[new]
    fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma }
    }

    fn __repr__(&self) -> String {
        format!("Rating(mu={}, sigma={})", self.mu, self.sigma)
    }
}

impl From<Rating> for PyRating {
    fn from(rating: Rating) -> Self {
        Self {
            mu: rating.mu,
            sigma: rating.sigma,
        }
    }
}

fn rating_config(
    mu0: Option<f64>,
    sigma0: Option<f64>,
    beta: Option<f64>,
    draw_probability: Option<f64>,
    passes: Option<u32>,
) -> RatingConfig {
    let defaults = RatingConfig::default();
    RatingConfig {
        mu0: mu0.unwrap_or(defaults.mu0),
        sigma0: sigma0.unwrap_or(defaults.sigma0),
        beta: beta.unwrap_or(defaults.beta),
        draw_probability: draw_probability.unwrap_or(defaults.draw_probability),
        passes: passes.unwrap_or(defaults.passes),
    }
}

/// One two-player rating update; outcome is "left", "right", or "equal".
#[pyfunction]
#[pyo3(signature = (a, b, outcome, mu0=None, sigma0=None, beta=None, draw_probability=None))]
fn update_pair(
    a: &PyRating,
    b: &PyRating,
    outcome: &str,
    mu0: Option<f64>,
    sigma0: Option<f64>,
    beta: Option<f64>,
    draw_probability: Option<f64>,
) -> PyResult<(PyRating, PyRating)> {
    let config = rating_config(mu0, sigma0, beta, draw_probability, None);
    let (new_a, new_b) = ratings::update_pair(
        Rating::new(a.mu, a.sigma),
        Rating::new(b.mu, b.sigma),
        parse_label(outcome)?,
        &config,
    )
    .map_err(value_error)?;
    Ok((new_a.into(), new_b.into()))
}

/// Rates every image in a list of (left_id, right_id, outcome) comparisons.
#[pyfunction]
#[pyo3(signature = (comparisons, mu0=None, sigma0=None, beta=None, draw_probability=None, passes=None))]
fn rate_all(
    comparisons: Vec<(String, String, String)>,
    mu0: Option<f64>,
    sigma0: Option<f64>,
    beta: Option<f64>,
    draw_probability: Option<f64>,
    passes: Option<u32>,
) -> PyResult<BTreeMap<String, PyRating>> {
    let config = rating_config(mu0, sigma0, beta, draw_probability, passes);
    let records: Vec<ComparisonRecord> = comparisons
        .into_iter()
        .map(|(left_id, right_id, outcome)| {
            Ok(ComparisonRecord {
                left_id,
                right_id,
                category: Category::Wealthy,
                label: parse_label(&outcome)?,
                vote_count: 1,
                agreement: 1.0,
            })
        })
        .collect::<PyResult<_>>()?;
    let rated = ratings::rate_all(&records, &config).map_err(value_error)?;
    Ok(rated.into_iter().map(|(id, r)| (id, r.into())).collect())
}

/// Parses a comparison vote table (CSV text with a header row).
/// Returns (records, rejects) where each record is a dict.
#[pyfunction]
#[pyo3(signature = (csv_text, outcome_column=None))]
fn parse_comparisons(
    py: Python<'_>,
    csv_text: &str,
    outcome_column: Option<String>,
) -> PyResult<ParsedComparisons> {
    let mut schema = ColumnSchema::default();
    if let Some(column) = outcome_column {
        schema.outcome_column = column;
    }
    let outcome =
        prefcal::dataio::parse_comparisons(csv_text.as_bytes(), &schema).map_err(value_error)?;
    let records = PyList::empty(py);
    for record in &outcome.records {
        let entry = PyDict::new(py);
        entry.set_item("left_id", &record.left_id)?;
        entry.set_item("right_id", &record.right_id)?;
        entry.set_item("category", record.category.as_str())?;
        entry.set_item("label", record.label.as_str())?;
        entry.set_item("vote_count", record.vote_count)?;
        entry.set_item("agreement", record.agreement)?;
        records.append(entry)?;
    }
    let rejects = outcome
        .rejects
        .into_iter()
        .map(|r| (r.line, r.reason))
        .collect();
    Ok((records.into(), rejects))
}

/// Intensity winner rule: returns (label, intensity).
#[pyfunction]
fn determine_winner(
    scores_a: Vec<f64>,
    scores_b: Vec<f64>,
    sigma_i: f64,
) -> PyResult<(String, f64)> {
    let (label, intensity) =
        scoring::determine_winner(&scores_a, &scores_b, sigma_i).map_err(value_error)?;
    Ok((label.as_str().to_string(), intensity))
}

/// Default equal-intensity threshold for a dimension count.
#[pyfunction]
fn default_sigma_i(n_dimensions: usize) -> f64 {
    scoring::default_sigma_i(n_dimensions)
}

/// PCA to `k` components; returns the projections aligned with the input.
#[pyfunction]
fn pca_fit_transform(embeddings: Vec<Vec<f64>>, k: usize) -> PyResult<Vec<Vec<f64>>> {
    mining::pca_fit_transform(&embeddings, k).map_err(value_error)
}

/// Parses a dimension-set reply (tolerates prose and code fences); returns
/// a list of dicts with name/description/high_indicator/low_indicator.
#[pyfunction]
fn parse_dimension_response(
    py: Python<'_>,
    text: &str,
    category: &str,
) -> PyResult<Py<PyList>> {
    let set = mining::parse_dimension_response(text, parse_category(category)?, "manual")
        .map_err(value_error)?;
    let out = PyList::empty(py);
    for dim in &set.dimensions {
        let entry = PyDict::new(py);
        entry.set_item("name", &dim.name)?;
        entry.set_item("description", &dim.description)?;
        entry.set_item("high_indicator", &dim.high_indicator)?;
        entry.set_item("low_indicator", &dim.low_indicator)?;
        out.append(entry)?;
    }
    Ok(out.into())
}

/// Hybrid differential encoding of one pair.
#[pyfunction]
fn hybrid_diff(
    clip_a: Vec<f64>,
    clip_b: Vec<f64>,
    sem_a: Vec<f64>,
    sem_b: Vec<f64>,
    alpha: f64,
) -> PyResult<Vec<f64>> {
    calibration::hybrid_diff(&clip_a, &clip_b, &sem_a, &sem_b, alpha).map_err(value_error)
}

/// Weighted ridge solve `(X^T W X + lambda I) w = X^T W y`.
#[pyfunction]
fn ridge_solve(
    x: Vec<Vec<f64>>,
    weights: Vec<f64>,
    y: Vec<f64>,
    lambda: f64,
) -> PyResult<Vec<f64>> {
    calibration::ridge_solve(&x, &weights, &y, lambda).map_err(value_error)
}

/// Weighted local R^2; returns None when the target variance degenerates.
#[pyfunction]
fn local_r2(
    x: Vec<Vec<f64>>,
    weights: Vec<f64>,
    y: Vec<f64>,
    w_hat: Vec<f64>,
) -> Option<f64> {
    calibration::local_r2(&x, &weights, &y, &w_hat)
}

/// Exponential kernel weights from cosine similarities.
#[pyfunction]
fn kernel_weights(similarities: Vec<f64>, tau_kernel: f64) -> PyResult<Vec<f64>> {
    calibration::kernel_weights(&similarities, tau_kernel).map_err(value_error)
}

fn hybrid_config(
    alpha: Option<f64>,
    k: Option<usize>,
    tau_kernel: Option<f64>,
    lambda: Option<f64>,
    epsilon: Option<f64>,
    theta: Option<f64>,
    selection_ratio: Option<f64>,
) -> HybridConfig {
    let defaults = HybridConfig::default();
    HybridConfig {
        alpha: alpha.unwrap_or(defaults.alpha),
        k: k.unwrap_or(defaults.k),
        tau_kernel: tau_kernel.unwrap_or(defaults.tau_kernel),
        lambda: lambda.unwrap_or(defaults.lambda),
        epsilon: epsilon.unwrap_or(defaults.epsilon),
        theta: theta.unwrap_or(defaults.theta),
        selection_ratio: selection_ratio.unwrap_or(defaults.selection_ratio),
    }
}

fn result_to_dict(py: Python<'_>, result: &CalibrationResult) -> PyResult<Py<PyDict>> {
    let out = PyDict::new(py);
    out.set_item("pair_key", &result.pair_key)?;
    out.set_item("delta_hat", result.delta_hat)?;
    out.set_item("weights", result.weights.clone())?;
    out.set_item("r2", result.r2)?;
    out.set_item("equal_consensus", result.equal_consensus)?;
    out.set_item("predicted", result.predicted.as_str())?;
    out.set_item("neighbour_keys", result.neighbour_keys.clone())?;
    out.set_item("degenerate", result.degenerate)?;
    Ok(out.into())
}

/// Mirror-augmented reference manifold with locally-weighted ridge
/// calibration.
///
/// Reference pairs are 9-tuples
/// `(left_id, right_id, clip_a, clip_b, sem_a, sem_b, mu_a, mu_b, label)`.
#[pyclass(name = "Manifold")]
struct PyManifold {
    points: Vec<ReferencePoint>,
    config: HybridConfig,
}

type PyReferencePair = (
    String,
    String,
    Vec<f64>,
    Vec<f64>,
    Vec<f64>,
    Vec<f64>,
    f64,
    f64,
    String,
);

#[pymethods]
impl PyManifold {
    #[new]
    #[pyo3(signature = (
        reference,
        alpha=None, k=None, tau_kernel=None, lambda_=None, epsilon=None,
        theta=None, selection_ratio=None,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        reference: Vec<PyReferencePair>,
        alpha: Option<f64>,
        k: Option<usize>,
        tau_kernel: Option<f64>,
        lambda_: Option<f64>,
        epsilon: Option<f64>,
        theta: Option<f64>,
        selection_ratio: Option<f64>,
    ) -> PyResult<Self> {
        let config = hybrid_config(alpha, k, tau_kernel, lambda_, epsilon, theta, selection_ratio);
        let inputs: Vec<ReferencePairInput> = reference
            .into_iter()
            .map(
                |(left_id, right_id, clip_a, clip_b, sem_a, sem_b, mu_a, mu_b, label)| {
                    Ok(ReferencePairInput {
                        left_id,
                        right_id,
                        clip_a,
                        clip_b,
                        sem_a,
                        sem_b,
                        mu_a,
                        mu_b,
                        label: parse_label(&label)?,
                    })
                },
            )
            .collect::<PyResult<_>>()?;
        let points =
            calibration::build_reference_manifold(&inputs, &config).map_err(value_error)?;
        Ok(Self { points, config })
    }

    /// Number of manifold points (twice the reference pair count).
    fn __len__(&self) -> usize {
        self.points.len()
    }

    /// Calibrates one query pair; returns a dict with delta_hat, weights,
    /// r2, equal_consensus, predicted, neighbour_keys, and degenerate.
    #[allow(clippy::too_many_arguments)]
    fn calibrate(
        &self,
        py: Python<'_>,
        left_id: &str,
        right_id: &str,
        clip_a: Vec<f64>,
        clip_b: Vec<f64>,
        sem_a: Vec<f64>,
        sem_b: Vec<f64>,
    ) -> PyResult<Py<PyDict>> {
        let query = QueryInput {
            left_id: left_id.to_string(),
            right_id: right_id.to_string(),
            clip_a,
            clip_b,
            sem_a,
            sem_b,
        };
        let result =
            calibration::calibrate_pair(&query, &self.points, &self.config).map_err(value_error)?;
        result_to_dict(py, &result)
    }
}

/// Exact-match accuracy; `exclude_equal` drops pairs whose human label is
/// "equal" before scoring.
#[pyfunction]
#[pyo3(signature = (preds, labels, exclude_equal=false))]
fn accuracy(preds: Vec<String>, labels: Vec<String>, exclude_equal: bool) -> PyResult<f64> {
    evaluation::accuracy(&parse_labels(preds)?, &parse_labels(labels)?, exclude_equal)
        .map_err(value_error)
}

/// Cohen's kappa; returns None when expected agreement is 1.
#[pyfunction]
fn cohens_kappa(preds: Vec<String>, labels: Vec<String>) -> PyResult<Option<f64>> {
    evaluation::cohens_kappa(&parse_labels(preds)?, &parse_labels(labels)?).map_err(value_error)
}

/// Macro-F1 over classes present in the labels.
#[pyfunction]
fn macro_f1(preds: Vec<String>, labels: Vec<String>) -> PyResult<f64> {
    evaluation::macro_f1(&parse_labels(preds)?, &parse_labels(labels)?).map_err(value_error)
}

/// Per-dimension discriminative power over decided pairs.
#[pyfunction]
fn dimension_power(
    pair_scores: Vec<(Vec<f64>, Vec<f64>)>,
    labels: Vec<String>,
    dimension_names: Vec<String>,
) -> PyResult<BTreeMap<String, f64>> {
    evaluation::dimension_power(&pair_scores, &parse_labels(labels)?, &dimension_names)
        .map_err(value_error)
}

/// Generation-temperature schedule of the dimension search: returns
/// (phase, tau) for a trial index.
#[pyfunction]
#[pyo3(signature = (trial_index, trials=None, explore_trials=None))]
fn search_temperature(
    trial_index: usize,
    trials: Option<usize>,
    explore_trials: Option<usize>,
) -> PyResult<(String, f64)> {
    let mut config = SearchConfig::default();
    if let Some(t) = trials {
        config.trials = t;
    }
    if let Some(e) = explore_trials {
        config.explore_trials = e;
    }
    let (phase, tau) = temperature_schedule(trial_index, &config).map_err(value_error)?;
    let phase_name = match phase {
        Phase::Explore => "explore",
        Phase::Converge => "converge",
    };
    Ok((phase_name.to_string(), tau))
}

#[pymodule(name = "prefcal")]
fn prefcal_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRating>()?;
    m.add_class::<PyManifold>()?;
    m.add_function(wrap_pyfunction!(update_pair, m)?)?;
    m.add_function(wrap_pyfunction!(rate_all, m)?)?;
    m.add_function(wrap_pyfunction!(parse_comparisons, m)?)?;
    m.add_function(wrap_pyfunction!(determine_winner, m)?)?;
    m.add_function(wrap_pyfunction!(default_sigma_i, m)?)?;
    m.add_function(wrap_pyfunction!(pca_fit_transform, m)?)?;
    m.add_function(wrap_pyfunction!(parse_dimension_response, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_diff, m)?)?;
    m.add_function(wrap_pyfunction!(ridge_solve, m)?)?;
    m.add_function(wrap_pyfunction!(local_r2, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_weights, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(cohens_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(macro_f1, m)?)?;
    m.add_function(wrap_pyfunction!(dimension_power, m)?)?;
    m.add_function(wrap_pyfunction!(search_temperature, m)?)?;
    Ok(())
}
