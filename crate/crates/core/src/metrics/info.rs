use crate::error::{Error, Result};

use super::ranksum::midranks;

pub const DEFAULT_MI_BINS: usize = 8;

/// Bin count for `n` samples: the default, reduced to about sqrt(n) for small n.
pub fn bins_for(n: usize) -> usize {
    let root = (n as f64).sqrt().floor() as usize;
    DEFAULT_MI_BINS.min(root.max(2))
}

/// Equal-frequency bins from midranks, so ties share a bin and any strictly
/// monotone transform of `values` yields the same assignment.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len() as f64;
    midranks(values).into_iter().map(|r| (((r - 0.5) * bins as f64 / n).floor() as usize).min(bins - 1)).collect()
}

/// Plug-in entropy (nats) of a discrete sample.
pub fn entropy(symbols: &[usize]) -> f64 {
    let Some(&max) = symbols.iter().max() else {
        return 0.0;
    };
    let mut counts = vec![0usize; max + 1];
    for &s in symbols {
        counts[s] += 1;
    }
    let n = symbols.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Plug-in mutual information (nats) between a binned real feature and
/// discrete labels, clamped to `[0, min(H(bins), H(labels))]`.
pub fn mutual_information(feature: &[f64], labels: &[usize]) -> Result<f64> {
    if feature.len() != labels.len() {
        return Err(Error::shape("mutual_information", format!("{} values vs {} labels", feature.len(), labels.len())));
    }
    if feature.is_empty() {
        return Err(Error::InvalidArgument("mutual information of an empty sample".into()));
    }
    if feature.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("mutual information of non-finite values".into()));
    }
    let bins = bins_for(feature.len());
    let binned = equal_frequency_bins(feature, bins);
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; bins * classes];
    let mut pb = vec![0usize; bins];
    let mut py = vec![0usize; classes];
    for (&b, &y) in binned.iter().zip(labels) {
        joint[b * classes + y] += 1;
        pb[b] += 1;
        py[y] += 1;
    }
    let n = feature.len() as f64;
    let mut mi = 0.0;
    for b in 0..bins {
        for y in 0..classes {
            let c = joint[b * classes + y];
            if c > 0 {
                let pxy = c as f64 / n;
                mi += pxy * (pxy * n * n / (pb[b] as f64 * py[y] as f64)).ln();
            }
        }
    }
    let cap = entropy(&binned).min(entropy(labels));
    Ok(mi.clamp(0.0, cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn independent_and_determined() {
        // labels alternate within every bin
        let x: Vec<f64> = (0..64).map(f64::from).collect();
        let y: Vec<usize> = (0..64).map(|i| i % 2).collect();
        assert!(mutual_information(&x, &y).unwrap() < 1e-12);
        let y: Vec<usize> = (0..64).map(|i| usize::from(i >= 32)).collect();
        assert!((mutual_information(&x, &y).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(mutual_information(&[1.0; 10], &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn bin_counts() {
        assert_eq!(bins_for(4), 2);
        assert_eq!(bins_for(30), 5);
        assert_eq!(bins_for(1000), 8);
        let b = equal_frequency_bins(&[5.0, 1.0, 3.0, 2.0, 4.0, 6.0, 8.0, 7.0], 4);
        assert_eq!(b, vec![2, 0, 1, 0, 1, 2, 3, 3]);
    }

    proptest! {
        #[test]
        fn bounded_and_rank_invariant(
            xs in prop::collection::vec(-50.0f64..50.0, 4..120),
            seed in 0usize..1000,
        ) {
            let labels: Vec<usize> = (0..xs.len()).map(|i| (i * 7 + seed) % 3).collect();
            let mi = mutual_information(&xs, &labels).unwrap();
            let bins = equal_frequency_bins(&xs, bins_for(xs.len()));
            prop_assert!(mi >= 0.0);
            prop_assert!(mi <= entropy(&bins).min(entropy(&labels)));
            let cubed: Vec<f64> = xs.iter().map(|v| v * v * v + 2.0 * v).collect();
            prop_assert_eq!(mi, mutual_information(&cubed, &labels).unwrap());
        }
    }
}
