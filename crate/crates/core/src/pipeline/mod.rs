//! Experiment protocol: stratified k-fold grid search on the training cohort,
//! then repeated external validation of the chosen cell on a held-out cohort.
//!
//! Every unit of work (architecture x fold, or repeat) gets its own RNG
//! stream derived from the master seed and results are merged by index, so
//! outputs do not depend on the number of worker threads.

mod cv;
mod report;
mod validate;

pub use cv::{cross_validate, stratified_folds, CellScore, CvResult, GridCell, GridSpec};
pub use report::{
    compare_runs, parse_report_csv, report_rows_csv, write_report_csv, Comparison, Direction, MedianIqr, MetricName,
    MetricsReport, RepeatResult, ReportRow, RunReport, Summary, TABLE_COLUMNS,
};
pub use validate::{external_validate, Cohort};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{fit_normalizer, ExpressionTable, NormalizerKind};
use crate::error::{Error, Result};
use crate::models::{Encoded, Model, ModelKind, PathwayMask, TrainConfig};
use crate::ndcore::{Matrix, Rng};

/// Which learned representation feeds the classifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    /// Latent code; the posterior mean for variational models at inference.
    #[default]
    Z,
    Mu,
    /// Pathway activity vector.
    A,
}

impl Space {
    pub fn as_str(self) -> &'static str {
        match self {
            Space::Z => "z",
            Space::Mu => "mu",
            Space::A => "a",
        }
    }

    pub fn check(self, kind: ModelKind) -> Result<()> {
        match self {
            Space::A if !kind.uses_pathways() => Err(Error::Config(format!("pathway space unavailable for {kind}"))),
            Space::Mu if !kind.is_variational() => Err(Error::Config(format!("{kind} has no posterior mean"))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Space {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z" => Ok(Space::Z),
            "mu" => Ok(Space::Mu),
            "a" => Ok(Space::A),
            _ => Err(Error::Config(format!("unknown representation space `{s}` (expected z, mu or a)"))),
        }
    }
}

/// Deterministic inference: dropout off, no sampling.
pub fn extract_representation(model: &Model, x: &Matrix, space: Space) -> Result<Matrix> {
    space.check(model.kind())?;
    // inference draws no randomness; the stream is a formality
    let mut rng = Rng::new(0);
    let input =
        if model.kind().uses_pathways() { model.pathway_activity_forward(x, false, &mut rng)? } else { x.clone() };
    if space == Space::A {
        return Ok(input);
    }
    Ok(match model.encode(&input, false, &mut rng)? {
        Encoded::Deterministic(z) => z,
        Encoded::Variational { mu, .. } => mu,
    })
}

/// How the held-out table is normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestNormalization {
    /// Fit the normalizer on the held-out table itself.
    #[default]
    Refit,
    /// Apply the statistics fitted on the training table.
    ReuseTrain,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub normalizer: NormalizerKind,
    pub test_policy: TestNormalization,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self { normalizer: NormalizerKind::ZScore, test_policy: TestNormalization::Refit }
    }
}

impl Preprocess {
    /// Normalized `(train, test)` values.
    pub fn apply(
        &self,
        train: &ExpressionTable,
        test: &ExpressionTable,
        policy: TestNormalization,
    ) -> Result<(Matrix, Matrix)> {
        let fitted = fit_normalizer(train, self.normalizer)?;
        let train_values = fitted.apply(train)?.values;
        let test_values = match policy {
            TestNormalization::Refit => fit_normalizer(test, self.normalizer)?.apply(test)?.values,
            TestNormalization::ReuseTrain => fitted.apply(test)?.values,
        };
        Ok((train_values, test_values))
    }
}

/// Everything shared by the grid search and the validation repeats.
#[derive(Clone, Debug)]
pub struct ExperimentSetup {
    pub masks: Vec<PathwayMask>,
    pub vocabulary: Vec<String>,
    pub preprocess: Preprocess,
    pub space: Space,
    pub train: TrainConfig,
    /// Shown after the model kind, e.g. `PAAE(KEGG)`.
    pub pathway_label: Option<String>,
}

impl ExperimentSetup {
    pub fn n_classes(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn model_label(&self, kind: ModelKind) -> String {
        match (&self.pathway_label, kind.uses_pathways()) {
            (Some(label), true) => format!("{kind}({label})"),
            _ => kind.to_string(),
        }
    }
}

/// JSON has no NaN; failed runs store `null`.
pub(crate) mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|x| (!x.is_nan()).then_some(*x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
        }
    }
}

/// Errors that count as a failed training run rather than aborting the experiment.
pub(crate) fn is_training_failure(e: &Error) -> bool {
    matches!(e, Error::Diverged { .. } | Error::Numeric(_))
}
