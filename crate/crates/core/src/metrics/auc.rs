use crate::error::{Error, Result};
use crate::ndcore::Matrix;

/// Twice the rank of every score (ties share their midrank), as integers.
fn doubled_midranks(scores: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0u64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based positions i+1..=j+1 share (i + j + 2) / 2
        let twice = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = twice;
        }
        i = j + 1;
    }
    ranks
}

/// Binary ROC AUC via the Mann-Whitney statistic; ties count one half.
/// `None` when either class is absent.
pub fn roc_auc_binary(positive: &[bool], scores: &[f64]) -> Option<f64> {
    debug_assert_eq!(positive.len(), scores.len());
    let n_pos = positive.iter().filter(|&&p| p).count() as u64;
    let n_neg = positive.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = doubled_midranks(scores);
    let twice_rank_sum: u64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    // 2U = 2R - n_pos (n_pos + 1), exact in integers
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Some(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Unweighted mean of one-vs-rest AUCs over the columns of `scores`.
/// Classes lacking positives or negatives are skipped with a warning.
pub fn roc_auc_macro(y_true: &[usize], scores: &Matrix) -> Result<f64> {
    if y_true.len() != scores.rows() {
        return Err(Error::shape("roc_auc_macro", format!("{} labels vs {} score rows", y_true.len(), scores.rows())));
    }
    if let Some(&bad) = y_true.iter().find(|&&c| c >= scores.cols()) {
        return Err(Error::InvalidArgument(format!("class {bad} has no score column")));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for c in 0..scores.cols() {
        let positive: Vec<bool> = y_true.iter().map(|&y| y == c).collect();
        match roc_auc_binary(&positive, &scores.column(c)) {
            Some(auc) => {
                total += auc;
                used += 1;
            }
            None => log::warn!("class {c} lacks positives or negatives; skipped in macro AUC"),
        }
    }
    if used == 0 {
        return Err(Error::Data("no class could be scored one-vs-rest".into()));
    }
    Ok(total / used as f64)
}
