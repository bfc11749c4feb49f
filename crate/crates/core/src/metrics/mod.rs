//! Classification metrics and the statistics used to compare runs.

mod auc;
mod info;
mod ranksum;

pub use auc::{roc_auc_binary, roc_auc_macro};
pub use info::{bins_for, entropy, equal_frequency_bins, mutual_information, DEFAULT_MI_BINS};
pub use ranksum::{midranks, wilcoxon_exact, wilcoxon_normal, wilcoxon_rank_sum, WilcoxonResult, EXACT_LIMIT};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accuracy plus unweighted (macro) precision, recall and F1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Macro averages run over the classes that occur in `y_true` or `y_pred`;
/// a class with an empty denominator scores 0 for that quantity.
pub fn confusion_metrics(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<ConfusionMetrics> {
    if y_true.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(
            "confusion_metrics",
            format!("{} labels vs {} predictions", y_true.len(), y_pred.len()),
        ));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!("class {bad} outside vocabulary of {n_classes}")));
    }
    let mut tp = vec![0usize; n_classes];
    let mut pred = vec![0usize; n_classes];
    let mut truth = vec![0usize; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        truth[t] += 1;
        pred[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let (mut p_sum, mut r_sum, mut f_sum, mut k) = (0.0, 0.0, 0.0, 0usize);
    for c in 0..n_classes {
        if truth[c] == 0 && pred[c] == 0 {
            continue;
        }
        let p = ratio(tp[c], pred[c]);
        let r = ratio(tp[c], truth[c]);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        p_sum += p;
        r_sum += r;
        f_sum += f;
        k += 1;
    }
    let k = k as f64;
    Ok(ConfusionMetrics {
        accuracy: tp.iter().sum::<usize>() as f64 / y_true.len() as f64,
        precision: p_sum / k,
        recall: r_sum / k,
        f1: f_sum / k,
    })
}

/// Linear-interpolation quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median and interquartile range (Q3 - Q1), linear-interpolation quantiles.
pub fn median_iqr(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)))
}

/// Per-sample predictions from a row-stochastic score matrix (lowest class wins ties).
pub fn argmax_rows(scores: &crate::ndcore::Matrix) -> Vec<usize> {
    (0..scores.rows())
        .map(|r| {
            scores
                .row(r)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_half() {
        let m = confusion_metrics(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        let m = confusion_metrics(&[0, 0, 1, 1], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.f1, 0.5);
    }

    #[test]
    fn never_predicted_class_scores_zero_precision() {
        // class 2 occurs but is never predicted
        let m = confusion_metrics(&[0, 1, 2], &[0, 1, 1], 3).unwrap();
        assert!((m.precision - (1.0 + 0.5 + 0.0) / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!(confusion_metrics(&[], &[], 2).is_err());
        assert!(confusion_metrics(&[0], &[3], 2).is_err());
    }

    #[test]
    fn median_and_iqr() {
        assert_eq!(median_iqr(&[4.0, 1.0, 3.0, 2.0]).unwrap().0, 2.5);
        assert_eq!(median_iqr(&[7.0; 5]).unwrap().1, 0.0);
        let (_, iqr) = median_iqr(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        assert!((iqr - 3.5).abs() < 1e-12);
        assert!(median_iqr(&[]).is_err());
    }
}
