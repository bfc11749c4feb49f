use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{adam_step, AdamState, Matrix, Rng};

use super::loss::beta_schedule;
use super::{Model, TrainConfig};

/// Per-epoch means of the training objective.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitHistory {
    pub loss: Vec<f64>,
    pub mse: Vec<f64>,
    pub kl: Vec<f64>,
    pub beta: Vec<f64>,
}

impl FitHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,beta,loss,mse,kl\n");
        for i in 0..self.loss.len() {
            out.push_str(&format!("{i},{},{},{},{}\n", self.beta[i], self.loss[i], self.mse[i], self.kl[i]));
        }
        out
    }
}

/// Mini-batch Adam on the reconstruction (and, for variational models, KL)
/// objective. Non-finite losses or gradients abort with [`Error::Diverged`].
pub fn fit(model: &mut Model, x: &Matrix, config: &TrainConfig, rng: &mut Rng) -> Result<FitHistory> {
    config.validate()?;
    model.validate()?;
    if x.cols() != model.gene_count() {
        return Err(Error::shape(
            "fit",
            format!("training data has {} genes, model expects {}", x.cols(), model.gene_count()),
        ));
    }
    if !x.all_finite() {
        return Err(Error::Data("training matrix contains non-finite values".into()));
    }
    let n = x.rows();
    let mut history = FitHistory::default();
    if config.epochs == 0 {
        return Ok(history);
    }
    if n == 0 {
        return Err(Error::Data("training matrix has no samples".into()));
    }

    let arch = model.arch.clone();
    let mut adam = AdamState::new(model.params.tensors().iter().map(|t| t.shape()));
    let batch = config.batch_size.min(n);
    for epoch in 0..config.epochs {
        let beta = if arch.kind.is_variational() {
            beta_schedule(epoch as f64, arch.schedule, arch.beta, arch.ts as f64, arch.te as f64)?
        } else {
            0.0
        };
        let order = rng.permutation(n);
        let (mut loss_sum, mut mse_sum, mut kl_sum) = (0.0, 0.0, 0.0);
        for idx in order.chunks(batch) {
            let xb = x.select_rows(idx)?;
            let (loss, grads) = model.loss_and_grads(&xb, beta, true, rng).map_err(|e| diverged(epoch, e))?;
            adam_step(&mut model.params.tensors_mut(), &grads, &mut adam, config.learning_rate)
                .map_err(|e| diverged(epoch, e))?;
            let w = idx.len() as f64;
            loss_sum += loss.total * w;
            mse_sum += loss.mse * w;
            kl_sum += loss.kl * w;
        }
        let epoch_loss = loss_sum / n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged { epoch, detail: format!("epoch loss {epoch_loss}") });
        }
        if let Some(bad) = model.params.tensors().iter().position(|t| !t.all_finite()) {
            return Err(Error::Diverged { epoch, detail: format!("parameter tensor {bad} became non-finite") });
        }
        history.loss.push(epoch_loss);
        history.mse.push(mse_sum / n as f64);
        history.kl.push(kl_sum / n as f64);
        history.beta.push(beta);
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
    }
    Ok(history)
}

fn diverged(epoch: usize, err: Error) -> Error {
    match err {
        Error::Numeric(detail) => Error::Diverged { epoch, detail },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArchitectureConfig, ModelKind};

    fn rank_one(n: usize, d: usize, rng: &mut Rng) -> Matrix {
        let load: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let mut x = Matrix::zeros(n, d);
        for r in 0..n {
            let f = rng.normal();
            for c in 0..d {
                x[(r, c)] = f * load[c];
            }
        }
        x
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let mut rng = Rng::new(0);
        let mut m = Model::build(ArchitectureConfig::new(ModelKind::Ae, vec![2]), 4, vec![], &mut rng).unwrap();
        let before = m.clone();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let h = fit(&mut m, &Matrix::zeros(3, 4), &cfg, &mut rng).unwrap();
        assert!(h.loss.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn linear_ae_learns_rank_one_data() {
        let mut rng = Rng::new(21);
        let x = rank_one(64, 6, &mut rng);
        let n = x.len() as f64;
        let mean = x.sum() / n;
        let var = x.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut arch = ArchitectureConfig::new(ModelKind::Ae, vec![1]);
        arch.dropout_rate = 0.0;
        let mut m = Model::build(arch, 6, vec![], &mut rng).unwrap();
        let cfg = TrainConfig { epochs: 500, learning_rate: 1e-2, batch_size: 16, seed: 0 };
        let h = fit(&mut m, &x, &cfg, &mut rng).unwrap();
        assert_eq!(h.loss.len(), 500);
        let out = m.forward(&x, false, &mut rng).unwrap();
        let mse = crate::models::mse_loss(&x, &out.x_hat).unwrap().0;
        assert!(mse < 0.1 * var, "mse {mse} vs variance {var}");
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = || {
            let mut rng = Rng::new(5);
            let x = rank_one(20, 5, &mut rng);
            let mut m = Model::build(ArchitectureConfig::new(ModelKind::Vae, vec![3, 2]), 5, vec![], &mut rng).unwrap();
            let cfg = TrainConfig { epochs: 10, learning_rate: 1e-3, batch_size: 8, seed: 0 };
            let h = fit(&mut m, &x, &cfg, &mut rng).unwrap();
            (m, h)
        };
        let (m1, h1) = run();
        let (m2, h2) = run();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
    }

    #[test]
    fn overflow_reports_the_epoch() {
        let mut rng = Rng::new(0);
        let mut m = Model::build(ArchitectureConfig::new(ModelKind::Vae, vec![2]), 3, vec![], &mut rng).unwrap();
        let x = Matrix::from_rows(&[[1e200, -1e200, 1e200], [2e200, 0.0, -1e200]]).unwrap();
        let cfg = TrainConfig { epochs: 5, learning_rate: 1e-3, batch_size: 2, seed: 0 };
        let err = fit(&mut m, &x, &cfg, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("epoch"));
    }

    #[test]
    fn gene_width_mismatch() {
        let mut rng = Rng::new(0);
        let mut m = Model::build(ArchitectureConfig::new(ModelKind::Ae, vec![2]), 4, vec![], &mut rng).unwrap();
        assert!(fit(&mut m, &Matrix::zeros(3, 5), &TrainConfig::default(), &mut rng).is_err());
    }
}
