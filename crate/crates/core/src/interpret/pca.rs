use serde::Serialize;

use crate::error::{Error, Result};
use crate::ndcore::Matrix;

/// Two-component principal component projection.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pca2d {
    /// `n x 2` scores.
    pub coords: Matrix,
    /// Fraction of total variance carried by each component.
    pub explained: [f64; 2],
    /// `d x 2` unit loadings; each column's largest-magnitude entry is positive.
    pub loadings: Matrix,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and eigenvectors as matching columns.
fn symmetric_eigen(mut a: Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut v = Matrix::identity(n);
    let scale = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let values = idx.iter().map(|&i| a[(i, i)]).collect();
    let vectors = v.select_columns(&idx).expect("permutation of existing columns");
    (values, vectors)
}

/// Projects centred rows onto their top two principal axes.
///
/// Works on the smaller of the covariance (`d x d`) and Gram (`n x n`)
/// matrices. A component with no variance gets zero scores and a warning.
pub fn pca_2d(rows: &Matrix) -> Result<Pca2d> {
    let (n, d) = rows.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 rows, got {n}")));
    }
    if d == 0 || !rows.all_finite() {
        return Err(Error::Numeric("PCA input is empty or non-finite".into()));
    }
    let means = rows.column_means();
    let mut centred = rows.clone();
    for r in 0..n {
        for (v, m) in centred.row_mut(r).iter_mut().zip(means.as_slice()) {
            *v -= m;
        }
    }
    let total: f64 = centred.as_slice().iter().map(|v| v * v).sum();
    let mut loadings = Matrix::zeros(d, 2);
    let mut explained = [0.0; 2];
    if total > 0.0 {
        let (values, vectors) = if d <= n {
            symmetric_eigen(centred.t_matmul(&centred)?)
        } else {
            // Gram route: X^T u / |X^T u| is the loading for eigenvector u
            let (values, u) = symmetric_eigen(centred.matmul_t(&centred)?);
            (values, centred.t_matmul(&u)?)
        };
        for k in 0..2.min(values.len()) {
            let lambda = values[k];
            if lambda <= 1e-12 * total {
                log::warn!("PCA component {} carries no variance; its coordinate is zeroed", k + 1);
                continue;
            }
            let mut col = vectors.column(k);
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            col.iter_mut().for_each(|v| *v /= norm);
            let lead = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if lead < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
            for (r, v) in col.into_iter().enumerate() {
                loadings[(r, k)] = v;
            }
            explained[k] = lambda / total;
        }
    }
    let coords = centred.matmul(&loadings)?;
    Ok(Pca2d { coords, explained, loadings })
}
