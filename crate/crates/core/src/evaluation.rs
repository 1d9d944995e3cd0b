//! Metrics over predicted versus human labels.
//!
//! The excl-equal variants drop pairs whose HUMAN label is `equal` and then
//! score exact matches, so a model `equal` prediction on a decided pair
//! counts as an error. Cohen's kappa uses marginal-product expected
//! agreement over the three-label alphabet; macro-F1 averages per-class F1
//! over the classes present in the human labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::Label;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("shape error: {0}")]
    Shape(String),
}

/// Summary metrics for one evaluated pair set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_total: usize,
    pub n_excl_equal: usize,
    pub acc_incl: f64,
    pub acc_excl: f64,
    /// `None` when expected agreement is 1 (kappa undefined).
    pub kappa_incl: Option<f64>,
    pub kappa_excl: Option<f64>,
    pub macro_f1: f64,
    pub per_dimension_power: BTreeMap<String, f64>,
}

type LabelledPairs<'a> = Vec<(&'a (Vec<f64>, Vec<f64>), Label)>;

fn check_aligned(preds: &[Label], labels: &[Label]) -> Result<(), EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::Shape(format!(
            "predictions ({}) and labels ({}) are not aligned",
            preds.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Exact-match accuracy. With `exclude_equal`, pairs whose human label is
/// `equal` are dropped first; model `equal` predictions on the remaining
/// pairs count as errors.
pub fn accuracy(preds: &[Label], labels: &[Label], exclude_equal: bool) -> Result<f64, EvalError> {
    check_aligned(preds, labels)?;
    let scored: Vec<(Label, Label)> = preds
        .iter()
        .zip(labels)
        .filter(|(_, label)| !(exclude_equal && **label == Label::Equal))
        .map(|(p, l)| (*p, *l))
        .collect();
    if scored.is_empty() {
        return Err(EvalError::Evaluation(
            "no pairs remain after excluding equal labels".to_string(),
        ));
    }
    let correct = scored.iter().filter(|(p, l)| p == l).count();
    Ok(correct as f64 / scored.len() as f64)
}

/// Cohen's kappa with marginal-product expected agreement. Returns `None`
/// when expected agreement is 1.
pub fn cohens_kappa(preds: &[Label], labels: &[Label]) -> Result<Option<f64>, EvalError> {
    check_aligned(preds, labels)?;
    if preds.is_empty() {
        return Err(EvalError::Evaluation(
            "kappa needs at least one pair".to_string(),
        ));
    }
    let n = preds.len() as f64;
    let classes = [Label::Left, Label::Right, Label::Equal];
    let observed = preds.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / n;
    let mut expected = 0.0;
    for class in classes {
        let p_pred = preds.iter().filter(|&&p| p == class).count() as f64 / n;
        let p_label = labels.iter().filter(|&&l| l == class).count() as f64 / n;
        expected += p_pred * p_label;
    }
    if (1.0 - expected).abs() < 1e-12 {
        return Ok(None);
    }
    Ok(Some((observed - expected) / (1.0 - expected)))
}

/// Macro-F1 over classes present in the human labels; classes absent from
/// the labels do not enter the mean.
pub fn macro_f1(preds: &[Label], labels: &[Label]) -> Result<f64, EvalError> {
    check_aligned(preds, labels)?;
    if preds.is_empty() {
        return Err(EvalError::Evaluation(
            "macro-F1 needs at least one pair".to_string(),
        ));
    }
    let classes = [Label::Left, Label::Right, Label::Equal];
    let mut f1_sum = 0.0;
    let mut present = 0usize;
    for class in classes {
        let support = labels.iter().filter(|&&l| l == class).count();
        if support == 0 {
            continue;
        }
        present += 1;
        let tp = preds
            .iter()
            .zip(labels)
            .filter(|(p, l)| **p == class && **l == class)
            .count() as f64;
        let fp = preds
            .iter()
            .zip(labels)
            .filter(|(p, l)| **p == class && **l != class)
            .count() as f64;
        let fn_ = preds
            .iter()
            .zip(labels)
            .filter(|(p, l)| **p != class && **l == class)
            .count() as f64;
        let denom = 2.0 * tp + fp + fn_;
        if denom > 0.0 {
            f1_sum += 2.0 * tp / denom;
        }
    }
    Ok(f1_sum / present as f64)
}

/// Per-dimension discriminative power: the fraction of decided pairs where
/// the sign of that dimension's score difference matches the human winner.
/// Zero differences count as incorrect. Pairs with an `equal` human label
/// must be excluded by the caller or are skipped here.
pub fn dimension_power(
    pair_scores: &[(Vec<f64>, Vec<f64>)],
    labels: &[Label],
    dimension_names: &[String],
) -> Result<BTreeMap<String, f64>, EvalError> {
    if pair_scores.len() != labels.len() {
        return Err(EvalError::Shape(format!(
            "scores ({}) and labels ({}) are not aligned",
            pair_scores.len(),
            labels.len()
        )));
    }
    let decided: LabelledPairs = pair_scores
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l != Label::Equal)
        .map(|(s, l)| (s, *l))
        .collect();
    if decided.is_empty() {
        return Err(EvalError::Evaluation(
            "no non-equal pairs to evaluate dimension power on".to_string(),
        ));
    }
    let mut out = BTreeMap::new();
    for (j, name) in dimension_names.iter().enumerate() {
        let mut correct = 0usize;
        for ((scores_a, scores_b), label) in &decided {
            if j >= scores_a.len() || j >= scores_b.len() {
                return Err(EvalError::Shape(format!(
                    "dimension index {j} out of range for scored pair"
                )));
            }
            let diff = scores_a[j] - scores_b[j];
            let prediction = if diff > 0.0 {
                Some(Label::Left)
            } else if diff < 0.0 {
                Some(Label::Right)
            } else {
                None // zero difference counts as incorrect
            };
            if prediction == Some(*label) {
                correct += 1;
            }
        }
        out.insert(name.clone(), correct as f64 / decided.len() as f64);
    }
    Ok(out)
}

/// Builds the full report for one evaluated pair set.
pub fn build_report(
    preds: &[Label],
    labels: &[Label],
    per_dimension_power: BTreeMap<String, f64>,
) -> Result<EvalReport, EvalError> {
    check_aligned(preds, labels)?;
    let n_total = labels.len();
    let n_excl_equal = labels.iter().filter(|&&l| l != Label::Equal).count();
    let acc_incl = accuracy(preds, labels, false)?;
    let acc_excl = accuracy(preds, labels, true)?;
    let kappa_incl = cohens_kappa(preds, labels)?;
    let decided: Vec<(Label, Label)> = preds
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l != Label::Equal)
        .map(|(p, l)| (*p, *l))
        .collect();
    let (excl_preds, excl_labels): (Vec<Label>, Vec<Label>) = decided.into_iter().unzip();
    let kappa_excl = cohens_kappa(&excl_preds, &excl_labels)?;
    let macro_f1 = macro_f1(preds, labels)?;
    Ok(EvalReport {
        n_total,
        n_excl_equal,
        acc_incl,
        acc_excl,
        kappa_incl,
        kappa_excl,
        macro_f1,
        per_dimension_power,
    })
}

/// Renders the aligned human-readable table for stdout.
pub fn render_report_table(title: &str, report: &EvalReport) -> String {
    let fmt_kappa = |k: &Option<f64>| match k {
        Some(v) => format!("{v:.4}"),
        None => "undefined".to_string(),
    };
    let mut out = String::new();
    out.push_str(&format!("{title}\n"));
    out.push_str(&format!(
        "  {:<22} {:>10}\n",
        "pairs (total)", report.n_total
    ));
    out.push_str(&format!(
        "  {:<22} {:>10}\n",
        "pairs (excl equal)", report.n_excl_equal
    ));
    out.push_str(&format!(
        "  {:<22} {:>10.4}\n",
        "accuracy incl-equal", report.acc_incl
    ));
    out.push_str(&format!(
        "  {:<22} {:>10.4}\n",
        "accuracy excl-equal", report.acc_excl
    ));
    out.push_str(&format!(
        "  {:<22} {:>10}\n",
        "kappa incl-equal",
        fmt_kappa(&report.kappa_incl)
    ));
    out.push_str(&format!(
        "  {:<22} {:>10}\n",
        "kappa excl-equal",
        fmt_kappa(&report.kappa_excl)
    ));
    out.push_str(&format!("  {:<22} {:>10.4}\n", "macro F1", report.macro_f1));
    if !report.per_dimension_power.is_empty() {
        out.push_str("  dimension power:\n");
        let mut ranked: Vec<(&String, &f64)> = report.per_dimension_power.iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
        for (name, power) in ranked {
            out.push_str(&format!("    {:<28} {:>7.1}%\n", name, power * 100.0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    use Label::{Equal as E, Left as L, Right as R};

    #[test]
    fn perfect_predictions_score_one() {
        let labels = vec![L, R, E, L];
        assert_eq!(accuracy(&labels, &labels, false).unwrap(), 1.0);
        assert_eq!(accuracy(&labels, &labels, true).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_excl_drops_human_equal_pairs() {
        let labels = [L, R, E];
        let preds = [L, L, E];
        assert!((accuracy(&preds, &labels, true).unwrap() - 0.5).abs() < 1e-12);
        assert!((accuracy(&preds, &labels, false).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn model_equal_counts_as_error_in_excl_mode() {
        let labels = [L, R];
        let preds = [E, R];
        assert!((accuracy(&preds, &labels, true).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn accuracy_errors_when_nothing_remains() {
        let labels = [E, E];
        let preds = [L, R];
        assert!(accuracy(&preds, &labels, true).is_err());
    }

    #[test]
    fn kappa_of_identical_lists_is_one() {
        let labels = [L, R, L, E];
        assert!((cohens_kappa(&labels, &labels).unwrap().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_of_opposite_binary_lists_is_minus_one() {
        let labels = [L, L, R, R];
        let preds = [R, R, L, L];
        assert!((cohens_kappa(&preds, &labels).unwrap().unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_degenerate_marginals_is_undefined() {
        let labels = [L, L];
        let preds = [L, L];
        assert_eq!(cohens_kappa(&preds, &labels).unwrap(), None);
    }

    #[test]
    fn kappa_of_random_predictions_is_near_zero() {
        let mut rng = crate::seed::derive_rng(42, "test.kappa", &[]);
        let n = 10_000;
        let labels: Vec<Label> = (0..n)
            .map(|_| if rng.random_range(0.0..1.0) < 0.5 { L } else { R })
            .collect();
        let preds: Vec<Label> = (0..n)
            .map(|_| if rng.random_range(0.0..1.0) < 0.5 { L } else { R })
            .collect();
        let kappa = cohens_kappa(&preds, &labels).unwrap().unwrap();
        assert!(kappa.abs() < 0.03, "kappa {kappa}");
    }

    #[test]
    fn macro_f1_perfect_is_one() {
        let labels = [L, R, E, L];
        assert!((macro_f1(&labels, &labels).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_half_precision_half_recall() {
        // labels [A,A,B,B], preds [A,B,A,B]: F1 = 0.5 for both classes.
        let labels = [L, L, R, R];
        let preds = [L, R, L, R];
        assert!((macro_f1(&preds, &labels).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn never_predicted_class_contributes_zero() {
        // Human labels include equal; model never predicts it.
        let labels = [L, R, E];
        let preds = [L, R, L];
        // F1: left = 2/3... left: tp=1 fp=1 fn=0 -> 2/3; right: 1; equal: 0.
        let expected = (2.0 / 3.0 + 1.0 + 0.0) / 3.0;
        assert!((macro_f1(&preds, &labels).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn dimension_power_full_agreement() {
        let scores = vec![
            (vec![7.0, 5.0], vec![3.0, 5.0]),
            (vec![2.0, 5.0], vec![6.0, 5.0]),
        ];
        let labels = [L, R];
        let power = dimension_power(&scores, &labels, &["a".into(), "b".into()]).unwrap();
        assert_eq!(power["a"], 1.0);
        assert_eq!(power["b"], 0.0); // zero differences count as incorrect
    }

    #[test]
    fn dimension_power_planted_seventy_percent() {
        // 20 decided pairs; dimension agrees with the winner on exactly 14.
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let agree = i < 14;
            let (a, b) = if agree { (8.0, 2.0) } else { (2.0, 8.0) };
            scores.push((vec![a], vec![b]));
            labels.push(L);
        }
        let power = dimension_power(&scores, &labels, &["d".into()]).unwrap();
        assert!((power["d"] - 0.70).abs() < 1e-12);
    }

    #[test]
    fn dimension_power_needs_decided_pairs() {
        let scores = vec![(vec![5.0], vec![5.0])];
        assert!(dimension_power(&scores, &[E], &["d".into()]).is_err());
    }

    #[test]
    fn report_counts_are_consistent() {
        let labels = [L, R, E, L, R];
        let preds = [L, R, E, R, R];
        let report = build_report(&preds, &labels, BTreeMap::new()).unwrap();
        assert_eq!(report.n_total, 5);
        assert_eq!(report.n_excl_equal, 4);
        assert!((report.acc_incl - 0.8).abs() < 1e-12);
        assert!((report.acc_excl - 0.75).abs() < 1e-12);
        let table = render_report_table("demo", &report);
        assert!(table.contains("accuracy excl-equal"));
    }

    proptest! {
        /// Shuffling pair order leaves every metric unchanged.
        #[test]
        fn metrics_are_permutation_invariant(seed in 0u64..100) {
            let mut rng = crate::seed::derive_rng(seed, "test.perm", &[]);
            let n = 40;
            let labels: Vec<Label> = (0..n)
                .map(|_| [L, R, E][rng.random_range(0..3)])
                .collect();
            let preds: Vec<Label> = (0..n)
                .map(|_| [L, R, E][rng.random_range(0..3)])
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            let shuffled_labels: Vec<Label> = order.iter().map(|&i| labels[i]).collect();
            let shuffled_preds: Vec<Label> = order.iter().map(|&i| preds[i]).collect();
            let acc_a = accuracy(&preds, &labels, false).unwrap();
            let acc_b = accuracy(&shuffled_preds, &shuffled_labels, false).unwrap();
            prop_assert!((acc_a - acc_b).abs() < 1e-12);
            let kappa_a = cohens_kappa(&preds, &labels).unwrap();
            let kappa_b = cohens_kappa(&shuffled_preds, &shuffled_labels).unwrap();
            match (kappa_a, kappa_b) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
            let f1_a = macro_f1(&preds, &labels).unwrap();
            let f1_b = macro_f1(&shuffled_preds, &shuffled_labels).unwrap();
            prop_assert!((f1_a - f1_b).abs() < 1e-12);
        }
    }
}
