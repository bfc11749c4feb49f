//! Deterministic dense numerics: matrices, layers, Adam and a finite-difference
//! gradient oracle. All randomness flows through an explicit [`Rng`].

mod adam;
mod layers;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub(crate) use layers::affine_param_grads;
pub use layers::{
    affine_backward, affine_forward, dropout, init_bias, init_weights, relu_backward, relu_forward, AffineGrads,
    DropoutMask,
};
pub use matrix::Matrix;
pub use rng::Rng;

use crate::error::{Error, Result};

/// Central-difference gradient of a scalar function at `x`.
pub fn finite_diff_grad(mut f: impl FnMut(&Matrix) -> f64, x: &Matrix, h: f64) -> Result<Matrix> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!("objective not finite around coordinate {i}")));
        }
        grad.as_mut_slice()[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Symmetric relative error used by the gradient checks; values whose
/// magnitudes are both below `floor` compare by absolute difference.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
