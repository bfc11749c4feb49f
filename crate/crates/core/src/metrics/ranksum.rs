use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Combined sample sizes up to which the two-sided p is enumerated exactly.
pub const EXACT_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Mann-Whitney U of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    twice_ranks(values).into_iter().map(|r| r as f64 / 2.0).collect()
}

fn twice_ranks(values: &[f64]) -> Vec<i64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            out[k] = (i + j + 2) as i64;
        }
        i = j + 1;
    }
    out
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("rank-sum test needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("rank-sum test on non-finite values".into()));
    }
    Ok(())
}

fn u_statistic(rank_sum: f64, na: usize) -> f64 {
    rank_sum - (na * (na + 1)) as f64 / 2.0
}

/// Two-sided p from the permutation distribution of the rank sum over every
/// split of the pooled midranks.
pub fn wilcoxon_exact(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    check(a, b)?;
    let n = a.len() + b.len();
    if n > EXACT_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "exact enumeration limited to {EXACT_LIMIT} observations, got {n}"
        )));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = twice_ranks(&pooled);
    let na = a.len();
    let observed: i64 = ranks[..na].iter().sum();
    // doubled ranks keep the comparison in integers
    let centre = (na * (n + 1)) as i64;
    let dev = (observed - centre).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let s: i64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        total += 1;
        if (s - centre).abs() >= dev {
            extreme += 1;
        }
    }
    Ok(WilcoxonResult {
        statistic: u_statistic(observed as f64 / 2.0, na),
        p_value: extreme as f64 / total as f64,
        exact: true,
    })
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity correction.
pub fn wilcoxon_normal(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    check(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = twice_ranks(&pooled);
    let rank_sum = ranks[..a.len()].iter().sum::<i64>() as f64 / 2.0;
    let u = u_statistic(rank_sum, a.len());
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    let ties: f64 = sorted
        .chunk_by(|x, y| x == y)
        .map(|g| {
            let t = g.len() as f64;
            t * t * t - t
        })
        .sum();
    let var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - na * nb / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
        libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(WilcoxonResult { statistic: u, p_value, exact: false })
}

/// Two-sided rank-sum test: exact for small pooled samples, normal otherwise.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() + b.len() <= EXACT_LIMIT {
        wilcoxon_exact(a, b)
    } else {
        wilcoxon_normal(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::Rng;

    #[test]
    fn separated_triplets() {
        let r = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!(r.exact);
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 2.0, 5.0];
        assert_eq!(wilcoxon_rank_sum(&a, &a).unwrap().p_value, 1.0);
        assert_eq!(wilcoxon_normal(&[3.0; 8], &[3.0; 8]).unwrap().p_value, 1.0);
    }

    #[test]
    fn midrank_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn disjoint_sixteen_repeats() {
        let a: Vec<f64> = (0..16).map(f64::from).collect();
        let b: Vec<f64> = (100..116).map(f64::from).collect();
        let r = wilcoxon_rank_sum(&a, &b).unwrap();
        assert!(!r.exact);
        assert!(r.p_value < 1e-3, "{}", r.p_value);
    }

    #[test]
    fn exact_and_normal_paths_agree_without_ties() {
        let mut rng = Rng::new(5);
        for n in 10..=12 {
            for _ in 0..50 {
                let na = 3 + rng.below(n - 5);
                let pool = rng.permutation(n);
                let shift = rng.uniform() * 4.0;
                let a: Vec<f64> = pool[..na].iter().map(|&v| v as f64 + shift).collect();
                let b: Vec<f64> = pool[na..].iter().map(|&v| v as f64 + 0.5).collect();
                let e = wilcoxon_exact(&a, &b).unwrap().p_value;
                let z = wilcoxon_normal(&a, &b).unwrap().p_value;
                assert!((e - z).abs() <= 0.03, "n={n} exact {e} normal {z}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(wilcoxon_rank_sum(&[], &[1.0]).is_err());
        assert!(wilcoxon_rank_sum(&[f64::NAN], &[1.0]).is_err());
        assert!(wilcoxon_exact(&[0.0; 7], &[1.0; 6]).is_err());
    }
}
