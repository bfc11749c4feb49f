use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::Matrix;

use super::{check_training_set, check_width};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// Inverse regularization strength: multiplies the data term.
    pub c: f64,
    pub max_iter: usize,
    /// Stop once every gradient component is at most this in magnitude.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { c: 1.0, max_iter: 100, tolerance: 1e-6 }
    }
}

/// Multinomial (softmax) logistic regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// `features × classes`.
    pub weights: Matrix,
    /// `1 × classes`.
    pub bias: Matrix,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    pub fn n_classes(&self) -> usize {
        self.bias.cols()
    }

    pub fn n_features(&self) -> usize {
        self.weights.rows()
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        check_width("lr_predict_proba", self.n_features(), x)?;
        let mut z = x.matmul(&self.weights)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(self.bias.as_slice()) {
                *v += b;
            }
        }
        Ok(z)
    }
}

/// Row-wise softmax, shifted by each row's maximum.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut p = logits.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    p
}

pub fn lr_predict_proba(model: &LogisticModel, x: &Matrix) -> Result<Matrix> {
    Ok(softmax_rows(&model.logits(x)?))
}

/// `(½‖W‖² + C·Σ cross-entropy, Σ cross-entropy)` of `model` on `(x, y)`.
pub fn lr_objective(model: &LogisticModel, x: &Matrix, y: &[usize], c: f64) -> Result<(f64, f64)> {
    let z = model.logits(x)?;
    let data = cross_entropy_sum(&z, y);
    let penalty = 0.5 * model.weights.as_slice().iter().map(|w| w * w).sum::<f64>();
    Ok((penalty + c * data, data))
}

fn cross_entropy_sum(z: &Matrix, y: &[usize]) -> f64 {
    (0..z.rows())
        .map(|r| {
            let row = z.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - row[y[r]]
        })
        .sum()
}

/// Objective and gradient over the flattened `[W, b]` vector.
struct Problem<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    classes: usize,
    c: f64,
}

impl Problem<'_> {
    fn unpack(&self, theta: &[f64]) -> LogisticModel {
        let wlen = self.x.cols() * self.classes;
        LogisticModel {
            weights: Matrix::new(self.x.cols(), self.classes, theta[..wlen].to_vec()).expect("sized by construction"),
            bias: Matrix::row_vector(&theta[wlen..]),
            iterations: 0,
            converged: false,
        }
    }

    fn eval(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let model = self.unpack(theta);
        let z = model.logits(self.x)?;
        let data = cross_entropy_sum(&z, self.y);
        let mut resid = softmax_rows(&z);
        for (r, &c) in self.y.iter().enumerate() {
            resid.row_mut(r)[c] -= 1.0;
        }
        let gw = self.x.t_matmul(&resid)?;
        let gb = resid.column_sums();
        let mut grad = Vec::with_capacity(theta.len());
        let mut penalty = 0.0;
        for (w, g) in model.weights.as_slice().iter().zip(gw.as_slice()) {
            penalty += 0.5 * w * w;
            grad.push(w + self.c * g);
        }
        grad.extend(gb.as_slice().iter().map(|g| self.c * g));
        let f = penalty + self.c * data;
        if !f.is_finite() {
            return Err(Error::Numeric("logistic objective is not finite".into()));
        }
        Ok((f, grad))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const HISTORY: usize = 10;
const ARMIJO: f64 = 1e-4;

/// L-BFGS with backtracking (Armijo) line search from zero parameters.
/// Every accepted iterate lowers the objective.
pub fn lr_fit(x: &Matrix, y: &[usize], n_classes: usize, config: &LogisticConfig) -> Result<LogisticModel> {
    check_training_set("lr_fit", x, y, n_classes)?;
    if !(config.c > 0.0) || !config.c.is_finite() {
        return Err(Error::InvalidArgument(format!("C must be positive, got {}", config.c)));
    }
    let mut present = vec![false; n_classes];
    y.iter().for_each(|&c| present[c] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Data("logistic regression needs at least two classes in the training labels".into()));
    }
    let problem = Problem { x, y, classes: n_classes, c: config.c };
    let mut theta = vec![0.0; (x.cols() + 1) * n_classes];
    let (mut f, mut g) = problem.eval(&theta)?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        if g.iter().all(|v| v.abs() <= config.tolerance) {
            converged = true;
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, yv, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, yv, _)) = history.back() {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, yv, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = if history.is_empty() { (1.0 / dot(&g, &g).sqrt()).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            if let Ok((ft, gt)) = problem.eval(&trial) {
                if ft <= f + ARMIJO * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next, fn_, gn)) = accepted else {
            log::debug!("lr_fit: line search stalled after {iterations} iterations");
            break;
        };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            if history.len() == HISTORY {
                history.pop_front();
            }
            history.push_back((s, yv, 1.0 / sy));
        }
        theta = next;
        f = fn_;
        g = gn;
        iterations += 1;
    }
    if !converged && g.iter().all(|v| v.abs() <= config.tolerance) {
        converged = true;
    }
    if !converged {
        log::debug!("lr_fit: stopped after {iterations} iterations without reaching the gradient tolerance");
    }
    let mut model = problem.unpack(&theta);
    model.iterations = iterations;
    model.converged = converged;
    Ok(model)
}
