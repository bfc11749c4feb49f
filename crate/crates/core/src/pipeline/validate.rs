use rayon::prelude::*;

use crate::classifiers::Classifier;
use crate::dataio::ExpressionTable;
use crate::error::{Error, Result};
use crate::metrics::{argmax_rows, confusion_metrics, roc_auc_macro};
use crate::models::{fit, mse_loss, Model};
use crate::ndcore::{Matrix, Rng};

use super::report::{MetricsReport, RepeatResult, RunReport, Summary};
use super::{extract_representation, is_training_failure, ExperimentSetup, GridCell};

/// An expression table with class indices for its rows.
#[derive(Clone, Copy, Debug)]
pub struct Cohort<'a> {
    pub table: &'a ExpressionTable,
    pub labels: &'a [usize],
}

struct Prepared<'a> {
    x_train: Matrix,
    x_test: Matrix,
    y_train: &'a [usize],
    y_test: &'a [usize],
    genes: usize,
}

fn run_repeat(p: &Prepared, setup: &ExperimentSetup, cell: &GridCell, seed: u64) -> Result<MetricsReport> {
    let mut rng = Rng::new(seed);
    let mut model = Model::build(cell.architecture.clone(), p.genes, setup.masks.clone(), &mut rng)?;
    fit(&mut model, &p.x_train, &setup.train, &mut rng)?;
    let recon = model.forward(&p.x_test, false, &mut rng)?.x_hat;
    let (test_mse, _) = mse_loss(&p.x_test, &recon)?;
    let r_train = extract_representation(&model, &p.x_train, setup.space)?;
    let r_test = extract_representation(&model, &p.x_test, setup.space)?;
    if !r_train.all_finite() || !r_test.all_finite() || !test_mse.is_finite() {
        return Err(Error::Numeric("non-finite representation or reconstruction".into()));
    }
    let clf = Classifier::fit(cell.classifier, &r_train, p.y_train, setup.n_classes(), &mut rng)?;
    let proba = clf.predict_proba(&r_test)?;
    let cm = confusion_metrics(p.y_test, &argmax_rows(&proba), setup.n_classes())?;
    Ok(MetricsReport {
        test_mse,
        accuracy: cm.accuracy,
        precision: cm.precision,
        recall: cm.recall,
        f1: cm.f1,
        roc_auc: roc_auc_macro(p.y_test, &proba)?,
    })
}

/// Repeated external validation of one grid cell. Repeat `r` uses seed
/// `base_seed + r` for model initialisation, training and the classifier.
/// A repeat whose training fails numerically is kept, flagged as diverged,
/// with NaN metrics, and left out of the medians.
pub fn external_validate(
    train: Cohort,
    test: Cohort,
    setup: &ExperimentSetup,
    cell: &GridCell,
    repeats: usize,
    base_seed: u64,
) -> Result<RunReport> {
    let (Cohort { table: train, labels: train_y }, Cohort { table: test, labels: test_y }) = (train, test);
    if repeats == 0 {
        return Err(Error::Config("external validation needs at least one repeat".into()));
    }
    if train.gene_names != test.gene_names {
        return Err(Error::Data("training and test tables must share one gene axis; intersect them first".into()));
    }
    if train.n_samples() != train_y.len() || test.n_samples() != test_y.len() {
        return Err(Error::shape("external_validate", "labels do not match table rows"));
    }
    setup.space.check(cell.architecture.kind)?;
    let (x_train, x_test) = setup.preprocess.apply(train, test, setup.preprocess.test_policy)?;
    let prepared = Prepared { x_train, x_test, y_train: train_y, y_test: test_y, genes: train.n_genes() };
    let seeds: Vec<u64> = (0..repeats as u64).map(|r| base_seed.wrapping_add(r)).collect();
    let results = seeds
        .par_iter()
        .enumerate()
        .map(|(repeat, &seed)| match run_repeat(&prepared, setup, cell, seed) {
            Ok(metrics) => Ok(RepeatResult { repeat, seed, diverged: false, error: None, metrics }),
            Err(e) if is_training_failure(&e) => {
                log::warn!("repeat {repeat} (seed {seed}) failed: {e}");
                Ok(RepeatResult {
                    repeat,
                    seed,
                    diverged: true,
                    error: Some(e.to_string()),
                    metrics: MetricsReport::failed(),
                })
            }
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let arch = &cell.architecture;
    let param_count = Model::build(arch.clone(), train.n_genes(), setup.masks.clone(), &mut Rng::new(0))?.param_count();
    Ok(RunReport {
        model: setup.model_label(arch.kind),
        schedule: if arch.kind.is_variational() { arch.schedule.to_string() } else { "-".into() },
        space: setup.space.to_string(),
        classifier: cell.classifier.to_string(),
        param_count,
        architecture: arch.clone(),
        train: setup.train.clone(),
        seeds,
        summary: Summary::from_repeats(&results),
        repeats: results,
    })
}
