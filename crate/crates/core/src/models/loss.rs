use crate::error::{Error, Result};
use crate::ndcore::Matrix;

use super::ScheduleKind;

/// Mean squared error over all entries, with its gradient w.r.t. `x_hat`.
pub fn mse_loss(x: &Matrix, x_hat: &Matrix) -> Result<(f64, Matrix)> {
    if x.shape() != x_hat.shape() {
        return Err(Error::shape("mse_loss", format!("{:?} vs {:?}", x.shape(), x_hat.shape())));
    }
    let count = x.len().max(1) as f64;
    let loss = x.as_slice().iter().zip(x_hat.as_slice()).map(|(a, b)| (b - a) * (b - a)).sum::<f64>() / count;
    let grad = x_hat.zip_map(x, |b, a| 2.0 * (b - a) / count)?;
    Ok((loss, grad))
}

/// KL divergence of diagonal Gaussians from N(0, I), averaged over samples
/// and summed over latent dimensions.
#[derive(Clone, Debug)]
pub struct KlTerm {
    pub value: f64,
    pub grad_mu: Matrix,
    pub grad_logvar: Matrix,
}

pub fn kl_gaussian(mu: &Matrix, logvar: &Matrix) -> Result<KlTerm> {
    if mu.shape() != logvar.shape() {
        return Err(Error::shape("kl_gaussian", format!("{:?} vs {:?}", mu.shape(), logvar.shape())));
    }
    let n = mu.rows().max(1) as f64;
    let value =
        mu.as_slice().iter().zip(logvar.as_slice()).map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv)).sum::<f64>()
            / n;
    Ok(KlTerm { value, grad_mu: mu.scale(1.0 / n), grad_logvar: logvar.map(|lv| 0.5 * (lv.exp() - 1.0) / n) })
}

/// Effective KL weight at epoch `t`.
///
/// `Step` switches from 0 to `beta` once `t >= ts`. `Smooth` is a logistic
/// ramp centred at `(ts + te) / 2` with slope `10 / (te - ts)`, so it reads
/// about 0.0067·β at `ts` and 0.9933·β at `te`.
pub fn beta_schedule(t: f64, kind: ScheduleKind, beta: f64, ts: f64, te: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("epoch must be nonnegative, got {t}")));
    }
    match kind {
        ScheduleKind::None => Ok(beta),
        ScheduleKind::Step => Ok(if t >= ts { beta } else { 0.0 }),
        ScheduleKind::Smooth => {
            if te <= ts {
                return Err(Error::Config(format!("smooth schedule needs te > ts, got ts={ts} te={te}")));
            }
            let mid = 0.5 * (ts + te);
            let x = 10.0 * (t - mid) / (te - ts);
            Ok(beta / (1.0 + (-x).exp()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::{finite_diff_grad, Rng};

    #[test]
    fn mse_cases() {
        let x = Matrix::row_vector(&[0.0, 0.0]);
        assert_eq!(mse_loss(&x, &x).unwrap().0, 0.0);
        let (l, g) = mse_loss(&x, &Matrix::row_vector(&[1.0, 1.0])).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g.as_slice(), &[1.0, 1.0]);
        assert!(mse_loss(&x, &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let mut rng = Rng::new(4);
        let x = Matrix::new(3, 4, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let xh = Matrix::new(3, 4, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let (_, g) = mse_loss(&x, &xh).unwrap();
        let fd = finite_diff_grad(|p| mse_loss(&x, p).unwrap().0, &xh, 1e-5).unwrap();
        for (a, b) in g.as_slice().iter().zip(fd.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn kl_closed_forms() {
        let z = Matrix::row_vector(&[0.0]);
        assert_eq!(kl_gaussian(&z, &z).unwrap().value, 0.0);
        let kl = kl_gaussian(&Matrix::row_vector(&[1.0]), &z).unwrap().value;
        assert!((kl - 0.5).abs() < 1e-15);
        let kl = kl_gaussian(&z, &Matrix::row_vector(&[1.0])).unwrap().value;
        assert!((kl - 0.5 * (std::f64::consts::E - 2.0)).abs() < 1e-15);
        assert!((kl - 0.3591).abs() < 1e-4);
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        let mut rng = Rng::new(8);
        let mu = Matrix::new(4, 3, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let lv = Matrix::new(4, 3, (0..12).map(|_| 0.5 * rng.normal()).collect()).unwrap();
        let kl = kl_gaussian(&mu, &lv).unwrap();
        let fm = finite_diff_grad(|p| kl_gaussian(p, &lv).unwrap().value, &mu, 1e-5).unwrap();
        let fl = finite_diff_grad(|p| kl_gaussian(&mu, p).unwrap().value, &lv, 1e-5).unwrap();
        for (a, b) in kl.grad_mu.as_slice().iter().zip(fm.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
        for (a, b) in kl.grad_logvar.as_slice().iter().zip(fl.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn schedule_points() {
        let b = 4.0;
        assert_eq!(beta_schedule(32.0, ScheduleKind::Step, b, 32.0, 160.0).unwrap(), b);
        assert_eq!(beta_schedule(31.0, ScheduleKind::Step, b, 32.0, 160.0).unwrap(), 0.0);
        assert_eq!(beta_schedule(96.0, ScheduleKind::Smooth, b, 32.0, 160.0).unwrap(), b / 2.0);
        let at_ts = beta_schedule(32.0, ScheduleKind::Smooth, b, 32.0, 160.0).unwrap();
        assert!((at_ts - b / (1.0 + 5f64.exp())).abs() < 1e-15);
        assert!((at_ts / b - 0.00669).abs() < 1e-5);
        assert_eq!(beta_schedule(0.0, ScheduleKind::None, b, 32.0, 160.0).unwrap(), b);
        assert!(beta_schedule(5.0, ScheduleKind::Smooth, b, 10.0, 10.0).is_err());
    }
}
