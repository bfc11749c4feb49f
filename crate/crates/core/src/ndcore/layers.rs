//! Affine maps, ReLU, inverted dropout and He initialization.

use crate::error::{Error, Result};

use super::{Matrix, Rng};

/// `x·W + b`, with the 1×k bias broadcast over rows.
pub fn affine_forward(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(Error::shape("affine_forward", format!("bias {:?} for weight {:?}", b.shape(), w.shape())));
    }
    let mut out = x.matmul(w)?;
    let bias = b.as_slice();
    for r in 0..out.rows() {
        for (o, &bv) in out.row_mut(r).iter_mut().zip(bias) {
            *o += bv;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct AffineGrads {
    pub x: Matrix,
    pub w: Matrix,
    pub b: Matrix,
}

pub fn affine_backward(x: &Matrix, w: &Matrix, upstream: &Matrix) -> Result<AffineGrads> {
    if x.cols() != w.rows() || upstream.cols() != w.cols() || upstream.rows() != x.rows() {
        return Err(Error::shape(
            "affine_backward",
            format!("x {:?}, W {:?}, upstream {:?}", x.shape(), w.shape(), upstream.shape()),
        ));
    }
    Ok(AffineGrads { x: upstream.matmul_t(w)?, w: x.t_matmul(upstream)?, b: upstream.column_sums() })
}

/// Gradients of the affine map with respect to its parameters only.
pub(crate) fn affine_param_grads(x: &Matrix, upstream: &Matrix) -> Result<(Matrix, Matrix)> {
    Ok((x.t_matmul(upstream)?, upstream.column_sums()))
}

pub fn relu_forward(x: &Matrix) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Passes `upstream` where the forward input was strictly positive.
pub fn relu_backward(input: &Matrix, upstream: &Matrix) -> Result<Matrix> {
    input
        .zip_map(upstream, |i, g| if i > 0.0 { g } else { 0.0 })
        .map_err(|_| Error::shape("relu_backward", "input and upstream shapes differ"))
}

/// Keep-mask of an inverted dropout draw.
#[derive(Clone, Debug)]
pub struct DropoutMask {
    /// 1.0 for kept entries, 0.0 for dropped ones.
    pub keep: Matrix,
    /// Survivor scale, `1 / (1 - rate)`.
    pub scale: f64,
}

impl DropoutMask {
    pub fn identity(rows: usize, cols: usize) -> Self {
        Self { keep: Matrix::filled(rows, cols, 1.0), scale: 1.0 }
    }

    pub fn backward(&self, upstream: &Matrix) -> Result<Matrix> {
        let s = self.scale;
        self.keep.zip_map(upstream, |k, g| k * g * s)
    }
}

pub fn dropout(x: &Matrix, rate: f64, training: bool, rng: &mut Rng) -> Result<(Matrix, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), DropoutMask::identity(x.rows(), x.cols())));
    }
    let scale = 1.0 / (1.0 - rate);
    let mut keep = Matrix::zeros(x.rows(), x.cols());
    let mut out = x.clone();
    for (k, o) in keep.as_mut_slice().iter_mut().zip(out.as_mut_slice()) {
        if rng.uniform() >= rate {
            *k = 1.0;
            *o *= scale;
        } else {
            *o = 0.0;
        }
    }
    Ok((out, DropoutMask { keep, scale }))
}

/// He-normal weights, variance `2 / fan_in`.
pub fn init_weights(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<Matrix> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidArgument(format!("layer fan must be positive, got {fan_in} -> {fan_out}")));
    }
    let sd = (2.0 / fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| sd * rng.normal()).collect();
    Matrix::new(fan_in, fan_out, data)
}

pub fn init_bias(fan_out: usize) -> Matrix {
    Matrix::zeros(1, fan_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::finite_diff_grad;

    #[test]
    fn affine_identity_and_hand_case() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]).unwrap();
        let out = affine_forward(&x, &Matrix::identity(2), &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(out, x);

        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let w = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let b = Matrix::row_vector(&[3.0, 3.0]);
        assert_eq!(affine_forward(&x, &w, &b).unwrap().as_slice(), &[4.0, 7.0]);
    }

    #[test]
    fn affine_empty_batch() {
        let x = Matrix::zeros(0, 3);
        let out = affine_forward(&x, &Matrix::zeros(3, 4), &Matrix::zeros(1, 4)).unwrap();
        assert_eq!(out.shape(), (0, 4));
    }

    #[test]
    fn affine_shape_errors() {
        let x = Matrix::zeros(2, 3);
        assert!(affine_forward(&x, &Matrix::zeros(2, 4), &Matrix::zeros(1, 4)).is_err());
        assert!(affine_forward(&x, &Matrix::zeros(3, 4), &Matrix::zeros(1, 3)).is_err());
        assert!(affine_backward(&x, &Matrix::zeros(3, 4), &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn affine_backward_scalar_and_zero() {
        let g = affine_backward(&Matrix::row_vector(&[2.0]), &Matrix::row_vector(&[3.0]), &Matrix::row_vector(&[1.0]))
            .unwrap();
        assert_eq!((g.x[(0, 0)], g.w[(0, 0)], g.b[(0, 0)]), (3.0, 2.0, 1.0));

        let mut rng = Rng::new(3);
        let x = init_weights(3, 4, &mut rng).unwrap();
        let w = init_weights(4, 2, &mut rng).unwrap();
        let g = affine_backward(&x, &w, &Matrix::zeros(3, 2)).unwrap();
        assert_eq!(g.x.max_abs() + g.w.max_abs() + g.b.max_abs(), 0.0);
    }

    #[test]
    fn affine_backward_matches_finite_differences() {
        let mut rng = Rng::new(11);
        let x = init_weights(3, 4, &mut rng).unwrap();
        let w = init_weights(4, 2, &mut rng).unwrap();
        let b = Matrix::row_vector(&[0.3, -0.7]);
        let up = init_weights(3, 2, &mut rng).unwrap();
        // scalar objective whose gradient w.r.t. the output is `up`
        let obj = |x: &Matrix, w: &Matrix, b: &Matrix| {
            let out = affine_forward(x, w, b).unwrap();
            out.as_slice().iter().zip(up.as_slice()).map(|(o, u)| o * u).sum::<f64>()
        };
        let g = affine_backward(&x, &w, &up).unwrap();
        let fx = finite_diff_grad(|xp| obj(xp, &w, &b), &x, 1e-5).unwrap();
        let fw = finite_diff_grad(|wp| obj(&x, wp, &b), &w, 1e-5).unwrap();
        let fb = finite_diff_grad(|bp| obj(&x, &w, bp), &b, 1e-5).unwrap();
        for (a, n) in [(&g.x, &fx), (&g.w, &fw), (&g.b, &fb)] {
            for (p, q) in a.as_slice().iter().zip(n.as_slice()) {
                assert!((p - q).abs() <= 1e-3 * p.abs().max(q.abs()).max(1e-8), "{p} vs {q}");
            }
        }
    }

    #[test]
    fn relu_cases() {
        let x = Matrix::row_vector(&[-1.0, 0.0, 2.0]);
        assert_eq!(relu_forward(&x).as_slice(), &[0.0, 0.0, 2.0]);
        let pos = Matrix::row_vector(&[0.0, 1.5]);
        assert_eq!(relu_forward(&pos), pos);
        let back = relu_backward(&Matrix::row_vector(&[-1.0, 2.0]), &Matrix::row_vector(&[5.0, 5.0])).unwrap();
        assert_eq!(back.as_slice(), &[0.0, 5.0]);
        // subgradient at exactly zero is zero
        let back = relu_backward(&Matrix::row_vector(&[0.0]), &Matrix::row_vector(&[5.0])).unwrap();
        assert_eq!(back.as_slice(), &[0.0]);
    }

    #[test]
    fn dropout_contract() {
        let mut rng = Rng::new(5);
        let x = Matrix::filled(4, 5, 3.0);
        let (y, m) = dropout(&x, 0.0, true, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(m.keep.as_slice().iter().all(|&k| k == 1.0));
        let (y, _) = dropout(&x, 0.7, false, &mut rng).unwrap();
        assert_eq!(y, x);
        let (y, m) = dropout(&x, 0.5, true, &mut rng).unwrap();
        for (v, k) in y.as_slice().iter().zip(m.keep.as_slice()) {
            assert_eq!(*v, if *k == 1.0 { 6.0 } else { 0.0 });
        }
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
        assert!(dropout(&x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = Rng::new(9);
        let x = Matrix::row_vector(&[1.0, -2.0, 4.0]);
        let draws = 20_000;
        let mut sums = [0.0; 3];
        for _ in 0..draws {
            let (y, _) = dropout(&x, 0.5, true, &mut rng).unwrap();
            for (s, v) in sums.iter_mut().zip(y.as_slice()) {
                *s += v;
            }
        }
        for (s, v) in sums.iter().zip(x.as_slice()) {
            let mean = s / draws as f64;
            assert!((mean - v).abs() <= 0.05 * v.abs(), "{mean} vs {v}");
        }
    }

    #[test]
    fn he_init_variance_and_determinism() {
        let mut rng = Rng::new(1);
        let w = init_weights(1000, 100, &mut rng).unwrap();
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let target = 2.0 / 1000.0;
        assert!((var - target).abs() <= 0.2 * target, "variance {var}");

        let a = init_weights(7, 3, &mut Rng::new(77)).unwrap();
        let b = init_weights(7, 3, &mut Rng::new(77)).unwrap();
        assert_eq!(a, b);
        assert!(init_bias(3).as_slice().iter().all(|&v| v == 0.0));
        assert!(init_weights(0, 3, &mut rng).is_err());
    }
}
