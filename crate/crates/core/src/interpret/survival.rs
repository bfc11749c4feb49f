use serde::Serialize;

use crate::dataio::{SurvivalRecord, SurvivalTable};
use crate::error::{Error, Result};
use crate::metrics::quantile_sorted;

pub const FIVE_YEARS_DAYS: f64 = 1825.0;

/// Product-limit survival estimate, stepping at each death time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KmCurve {
    /// Starts at 0, then every distinct death time ascending.
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    /// Subjects at risk just before each time.
    pub at_risk: Vec<usize>,
    pub deaths: Vec<usize>,
}

impl KmCurve {
    /// S(t), right-continuous.
    pub fn survival_at(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&x| x <= t);
        self.survival[i.saturating_sub(1)]
    }
}

fn grouped(times: &[f64], events: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for i in order {
        match out.last_mut() {
            Some(g) if g.0 == times[i] => {
                if events[i] {
                    g.1 += 1
                } else {
                    g.2 += 1
                }
            }
            _ => out.push((times[i], usize::from(events[i]), usize::from(!events[i]))),
        }
    }
    out
}

fn check_survival(times: &[f64], events: &[bool]) -> Result<()> {
    if times.len() != events.len() {
        return Err(Error::shape("survival", format!("{} times vs {} events", times.len(), events.len())));
    }
    if times.is_empty() {
        return Err(Error::InvalidArgument("survival analysis of an empty group".into()));
    }
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::Data(format!("invalid survival time {t}")));
    }
    Ok(())
}

/// Kaplan-Meier estimator. Deaths at a time precede censorings at that time.
///
/// Between censorings the product telescopes to a ratio of risk-set sizes, so
/// the estimate is kept as `S(last censoring) * at_risk / at_risk(last censoring)`;
/// with no censoring this is exactly the empirical survival fraction.
pub fn km_estimate(times: &[f64], events: &[bool]) -> Result<KmCurve> {
    check_survival(times, events)?;
    let mut curve = KmCurve { times: vec![0.0], survival: vec![1.0], at_risk: vec![times.len()], deaths: vec![0] };
    let mut remaining = times.len();
    let (mut base, mut base_n) = (1.0, remaining);
    for (t, d, c) in grouped(times, events) {
        if d > 0 {
            let s = base * ((remaining - d) as f64 / base_n as f64);
            if t == 0.0 {
                curve.survival[0] = s;
                curve.deaths[0] = d;
            } else {
                curve.times.push(t);
                curve.survival.push(s);
                curve.at_risk.push(remaining);
                curve.deaths.push(d);
            }
        }
        remaining -= d + c;
        if c > 0 && remaining > 0 {
            base = *curve.survival.last().expect("non-empty");
            base_n = remaining;
        }
    }
    Ok(curve)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogrankResult {
    pub statistic: f64,
    pub p_value: f64,
    pub observed_a: f64,
    pub expected_a: f64,
    pub variance: f64,
}

/// Two-group logrank test; chi-square with one degree of freedom.
pub fn logrank_test(a: &[SurvivalRecord], b: &[SurvivalRecord]) -> Result<LogrankResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("logrank test needs two non-empty groups".into()));
    }
    let times: Vec<f64> = a.iter().chain(b).map(|r| r.time).collect();
    let events: Vec<bool> = a.iter().chain(b).map(|r| r.event).collect();
    check_survival(&times, &events)?;
    let in_a: Vec<bool> = (0..times.len()).map(|i| i < a.len()).collect();
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&x, &y| times[x].total_cmp(&times[y]));
    let (mut na, mut nb) = (a.len() as f64, b.len() as f64);
    let (mut observed, mut expected, mut variance) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let (mut da, mut db, mut ca, mut cb) = (0.0, 0.0, 0.0, 0.0);
        while i < order.len() && times[order[i]] == t {
            let k = order[i];
            match (in_a[k], events[k]) {
                (true, true) => da += 1.0,
                (false, true) => db += 1.0,
                (true, false) => ca += 1.0,
                (false, false) => cb += 1.0,
            }
            i += 1;
        }
        let d = da + db;
        let n = na + nb;
        if d > 0.0 {
            observed += da;
            expected += d * na / n;
            if n > 1.0 {
                variance += d * (na / n) * (nb / n) * (n - d) / (n - 1.0);
            }
        }
        na -= da + ca;
        nb -= db + cb;
    }
    let statistic = if variance > 0.0 { (observed - expected).powi(2) / variance } else { 0.0 };
    let p_value = libm::erfc((statistic / 2.0).sqrt()).clamp(0.0, 1.0);
    Ok(LogrankResult { statistic, p_value, observed_a: observed, expected_a: expected, variance })
}

/// Indices at or below the lower tercile and at or above the upper tercile
/// (linear-interpolation quantiles). Ties at a cut point join that group, so
/// constant input puts every sample in both groups.
pub fn tercile_split(values: &[f64]) -> Result<(Vec<usize>, Vec<usize>)> {
    if values.len() < 3 {
        return Err(Error::InvalidArgument(format!("tercile split needs at least 3 samples, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("tercile split of non-finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, 1.0 / 3.0);
    let hi = quantile_sorted(&sorted, 2.0 / 3.0);
    let low = (0..values.len()).filter(|&i| values[i] <= lo).collect();
    let high = (0..values.len()).filter(|&i| values[i] >= hi).collect();
    Ok((low, high))
}

/// Administrative censoring at `limit_days`.
pub fn apply_survival_window(table: &SurvivalTable, limit_days: f64) -> Result<SurvivalTable> {
    if !(limit_days > 0.0) {
        return Err(Error::InvalidArgument(format!("survival window must be positive, got {limit_days}")));
    }
    let records = table
        .records
        .iter()
        .map(|r| {
            if r.time > limit_days {
                SurvivalRecord { sample: r.sample.clone(), time: limit_days, event: false }
            } else {
                r.clone()
            }
        })
        .collect();
    SurvivalTable::new(records)
}

/// Survival of the lower versus the upper tercile of one per-sample feature.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TercileComparison {
    pub low: KmCurve,
    pub high: KmCurve,
    pub n_low: usize,
    pub n_high: usize,
    pub logrank: LogrankResult,
}

/// Splits `records` by the terciles of `values` (one per record) and compares
/// the groups. A split whose groups overlap, as with a near-constant feature,
/// is a data error.
pub fn tercile_survival(values: &[f64], records: &[SurvivalRecord]) -> Result<TercileComparison> {
    if values.len() != records.len() {
        return Err(Error::shape("tercile_survival", format!("{} values for {} records", values.len(), records.len())));
    }
    let (low, high) = tercile_split(values)?;
    if low.iter().any(|i| high.binary_search(i).is_ok()) {
        return Err(Error::Data("terciles overlap; the feature is too coarse to split".into()));
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    let (a, b) = (pick(&low), pick(&high));
    let curve = |g: &[SurvivalRecord]| {
        km_estimate(&g.iter().map(|r| r.time).collect::<Vec<_>>(), &g.iter().map(|r| r.event).collect::<Vec<_>>())
    };
    Ok(TercileComparison {
        low: curve(&a)?,
        high: curve(&b)?,
        n_low: a.len(),
        n_high: b.len(),
        logrank: logrank_test(&a, &b)?,
    })
}
