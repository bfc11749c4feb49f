use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::Matrix;

use super::{ExpressionTable, Scale};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NormalizerKind {
    ZScore,
    Percentile,
    LogOffset { offset: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Fitted {
    ZScore {
        mean: Vec<f64>,
        sd: Vec<f64>,
    },
    /// Sorted training values per gene.
    Percentile {
        reference: Vec<Vec<f64>>,
    },
    LogOffset {
        offset: f64,
    },
}

/// Per-gene transform fitted on one table and applicable to any table with the
/// same gene axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub kind: NormalizerKind,
    pub gene_names: Vec<String>,
    fitted: Fitted,
}

pub fn fit_normalizer(table: &ExpressionTable, kind: NormalizerKind) -> Result<Normalizer> {
    if table.n_samples() == 0 {
        return Err(Error::Data("cannot fit a normalizer on an empty table".into()));
    }
    let n = table.n_samples() as f64;
    let fitted = match kind {
        NormalizerKind::ZScore => {
            let mut mean = Vec::with_capacity(table.n_genes());
            let mut sd = Vec::with_capacity(table.n_genes());
            for c in 0..table.n_genes() {
                let col = table.values.column(c);
                let m = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                mean.push(m);
                sd.push(var.sqrt());
            }
            Fitted::ZScore { mean, sd }
        }
        NormalizerKind::Percentile => Fitted::Percentile {
            reference: (0..table.n_genes())
                .map(|c| {
                    let mut col = table.values.column(c);
                    col.sort_by(f64::total_cmp);
                    col
                })
                .collect(),
        },
        NormalizerKind::LogOffset { offset } => {
            if !(offset > 0.0) {
                return Err(Error::Config(format!("log offset must be positive, got {offset}")));
            }
            Fitted::LogOffset { offset }
        }
    };
    Ok(Normalizer { kind, gene_names: table.gene_names.clone(), fitted })
}

/// Midrank of `v` within sorted `reference`, scaled to [0, 1]; values between
/// reference points are interpolated linearly, values outside are clamped.
pub fn percentile_rank(reference: &[f64], v: f64) -> f64 {
    let n = reference.len();
    if n <= 1 {
        return 0.5;
    }
    let less = reference.partition_point(|&r| r < v);
    let upto = reference.partition_point(|&r| r <= v);
    let top = (n - 1) as f64;
    let pos = if upto > less {
        less as f64 + (upto - less - 1) as f64 / 2.0
    } else if less == 0 {
        0.0
    } else if less == n {
        top
    } else {
        let (lo, hi) = (reference[less - 1], reference[less]);
        (less - 1) as f64 + (v - lo) / (hi - lo)
    };
    (pos / top).clamp(0.0, 1.0)
}

impl Normalizer {
    pub fn apply(&self, table: &ExpressionTable) -> Result<ExpressionTable> {
        if table.gene_names != self.gene_names {
            return Err(Error::Data("normalizer was fitted on a different gene axis".into()));
        }
        let (rows, cols) = table.values.shape();
        let mut out = Matrix::zeros(rows, cols);
        let scale = match &self.fitted {
            Fitted::ZScore { mean, sd } => {
                for r in 0..rows {
                    for (c, (o, &v)) in out.row_mut(r).iter_mut().zip(table.values.row(r)).enumerate() {
                        *o = if sd[c] > 0.0 { (v - mean[c]) / sd[c] } else { 0.0 };
                    }
                }
                Scale::ZScore
            }
            Fitted::Percentile { reference } => {
                for r in 0..rows {
                    for (c, (o, &v)) in out.row_mut(r).iter_mut().zip(table.values.row(r)).enumerate() {
                        *o = percentile_rank(&reference[c], v);
                    }
                }
                Scale::Percentile
            }
            Fitted::LogOffset { offset } => {
                let target = Scale::Log2PlusOffset { offset: *offset };
                let linear = table.linear_values()?;
                for (o, &v) in out.as_mut_slice().iter_mut().zip(linear.as_slice()) {
                    let y = target.from_linear(v.max(0.0))?;
                    *o = y;
                }
                target
            }
        };
        ExpressionTable::new(table.sample_ids.clone(), table.gene_names.clone(), out, scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_table(values: &[f64]) -> ExpressionTable {
        ExpressionTable::new(
            (0..values.len()).map(|i| format!("S{i}")).collect(),
            vec!["G".into()],
            Matrix::column_vector(values),
            Scale::Log2Plus1,
        )
        .unwrap()
    }

    #[test]
    fn zscore_hand_values() {
        let t = column_table(&[1.0, 2.0, 3.0]);
        let z = fit_normalizer(&t, NormalizerKind::ZScore).unwrap().apply(&t).unwrap();
        let k = 1.0 / (2.0f64 / 3.0).sqrt();
        for (a, b) in z.values.as_slice().iter().zip([-k, 0.0, k]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((k - 1.2247).abs() < 1e-4);
        let c = column_table(&[4.0, 4.0, 4.0]);
        let z = fit_normalizer(&c, NormalizerKind::ZScore).unwrap().apply(&c).unwrap();
        assert!(z.values.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn percentile_hand_values() {
        let t = column_table(&[10.0, 20.0, 30.0]);
        let norm = fit_normalizer(&t, NormalizerKind::Percentile).unwrap();
        assert_eq!(norm.apply(&t).unwrap().values.as_slice(), &[0.0, 0.5, 1.0]);
        let unseen = column_table(&[15.0, 5.0, 99.0]);
        assert_eq!(norm.apply(&unseen).unwrap().values.as_slice(), &[0.25, 0.0, 1.0]);
        let ties = column_table(&[1.0, 1.0, 2.0]);
        let p = fit_normalizer(&ties, NormalizerKind::Percentile).unwrap().apply(&ties).unwrap();
        assert_eq!(p.values.as_slice(), &[0.25, 0.25, 1.0]);
    }

    #[test]
    fn log_offset_matches_formula() {
        let t = column_table(&[0.0, 1.0]);
        let n = fit_normalizer(&t, NormalizerKind::LogOffset { offset: 1e-3 }).unwrap();
        let out = n.apply(&t).unwrap();
        assert!((out.values[(0, 0)] - (1e-3f64).log2()).abs() < 1e-12);
        assert!((out.values[(1, 0)] - (1.001f64).log2()).abs() < 1e-12);
    }

    #[test]
    fn gene_axis_mismatch() {
        let t = column_table(&[1.0, 2.0]);
        let n = fit_normalizer(&t, NormalizerKind::ZScore).unwrap();
        let mut other = t.clone();
        other.gene_names = vec!["H".into()];
        assert!(n.apply(&other).is_err());
    }
}
