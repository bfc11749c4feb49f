//! Downstream classifiers fitted on latent or pathway-activity features.
//! Class labels are indices `0..n_classes` into a vocabulary held by the caller.

mod forest;
mod logistic;

pub use forest::{rf_fit, rf_predict_proba, ForestConfig, ForestModel, Tree, TreeNode};
pub use logistic::{lr_fit, lr_objective, lr_predict_proba, softmax_rows, LogisticConfig, LogisticModel};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ClassifierKind {
    Lr,
    Rf,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Lr => "LR",
            ClassifierKind::Rf => "RF",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LR" => Ok(ClassifierKind::Lr),
            "RF" => Ok(ClassifierKind::Rf),
            _ => Err(Error::Config(format!("unknown classifier `{s}` (expected LR or RF)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Classifier {
    Logistic(LogisticModel),
    Forest(ForestModel),
}

impl Classifier {
    /// Fits `kind` with its default hyperparameters.
    pub fn fit(kind: ClassifierKind, x: &Matrix, y: &[usize], n_classes: usize, rng: &mut Rng) -> Result<Self> {
        Ok(match kind {
            ClassifierKind::Lr => Classifier::Logistic(lr_fit(x, y, n_classes, &LogisticConfig::default())?),
            ClassifierKind::Rf => Classifier::Forest(rf_fit(x, y, n_classes, &ForestConfig::default(), rng)?),
        })
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Classifier::Logistic(m) => lr_predict_proba(m, x),
            Classifier::Forest(m) => rf_predict_proba(m, x),
        }
    }
}

pub(crate) fn check_training_set(op: &'static str, x: &Matrix, y: &[usize], n_classes: usize) -> Result<()> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::InvalidArgument(format!("{op}: empty training matrix {}x{}", x.rows(), x.cols())));
    }
    if x.rows() != y.len() {
        return Err(Error::shape(op, format!("{} rows vs {} labels", x.rows(), y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!("{op}: class {bad} outside vocabulary of {n_classes}")));
    }
    if !x.all_finite() {
        return Err(Error::Numeric(format!("{op}: non-finite feature values")));
    }
    Ok(())
}

pub(crate) fn check_width(op: &'static str, expected: usize, x: &Matrix) -> Result<()> {
    if x.cols() != expected {
        return Err(Error::shape(op, format!("model expects {expected} features, got {}", x.cols())));
    }
    Ok(())
}
