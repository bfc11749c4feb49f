use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{Classifier, ClassifierKind};
use crate::dataio::{render_rows, write_text, ExpressionTable};
use crate::error::{Error, Result};
use crate::metrics::roc_auc_macro;
use crate::models::{fit, ArchitectureConfig, Model, ScheduleKind};
use crate::ndcore::Rng;

use super::{extract_representation, is_training_failure, ExperimentSetup, TestNormalization};

/// Option lists whose cartesian product forms the search grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub encoder_layer_sizes: Vec<Vec<usize>>,
    #[serde(default = "GridSpec::no_hidden")]
    pub pathway_hidden_sizes: Vec<Vec<usize>>,
    #[serde(default = "GridSpec::unit_beta")]
    pub betas: Vec<f64>,
    #[serde(default = "GridSpec::no_schedule")]
    pub schedules: Vec<ScheduleKind>,
    pub classifiers: Vec<ClassifierKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub architecture: ArchitectureConfig,
    pub classifier: ClassifierKind,
}

impl GridSpec {
    fn no_hidden() -> Vec<Vec<usize>> {
        vec![Vec::new()]
    }

    fn unit_beta() -> Vec<f64> {
        vec![1.0]
    }

    fn no_schedule() -> Vec<ScheduleKind> {
        vec![ScheduleKind::None]
    }

    /// Distinct architectures in grid order (encoder, pathway hidden, beta,
    /// schedule). Axes that do not apply to `base.kind` collapse to the base value.
    pub fn architectures(&self, base: &ArchitectureConfig) -> Result<Vec<ArchitectureConfig>> {
        let axis_err = |name: &str| Error::Config(format!("grid axis `{name}` is empty"));
        if self.encoder_layer_sizes.is_empty() {
            return Err(axis_err("encoder_layer_sizes"));
        }
        if self.classifiers.is_empty() {
            return Err(axis_err("classifiers"));
        }
        let kind = base.kind;
        let hidden = if kind.uses_pathways() {
            self.pathway_hidden_sizes.clone()
        } else {
            vec![base.pathway_hidden_sizes.clone()]
        };
        let betas = if kind.is_variational() { self.betas.clone() } else { vec![base.beta] };
        let schedules = if kind.is_variational() { self.schedules.clone() } else { vec![base.schedule] };
        for (name, empty) in [
            ("pathway_hidden_sizes", hidden.is_empty()),
            ("betas", betas.is_empty()),
            ("schedules", schedules.is_empty()),
        ] {
            if empty {
                return Err(axis_err(name));
            }
        }
        let mut out = Vec::new();
        for enc in &self.encoder_layer_sizes {
            for h in &hidden {
                for &beta in &betas {
                    for &schedule in &schedules {
                        let arch = ArchitectureConfig {
                            encoder_layer_sizes: enc.clone(),
                            pathway_hidden_sizes: h.clone(),
                            beta,
                            schedule,
                            ..base.clone()
                        };
                        arch.validate()?;
                        out.push(arch);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Architectures x classifiers, classifier varying fastest.
    pub fn cells(&self, base: &ArchitectureConfig) -> Result<Vec<GridCell>> {
        Ok(self
            .architectures(base)?
            .into_iter()
            .flat_map(|a| self.classifiers.iter().map(move |&c| GridCell { architecture: a.clone(), classifier: c }))
            .collect())
    }
}

/// Fold index per sample. Each class's members are shuffled and dealt to
/// folds in turn, continuing from where the previous class stopped.
pub fn stratified_folds(y: &[usize], n_classes: usize, folds: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    let mut members = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        members
            .get_mut(c)
            .ok_or_else(|| Error::InvalidArgument(format!("class {c} outside vocabulary of {n_classes}")))?
            .push(i);
    }
    let mut assignment = vec![0; y.len()];
    let mut next = 0;
    for (c, m) in members.iter_mut().enumerate() {
        if m.is_empty() {
            continue;
        }
        if m.len() < folds {
            return Err(Error::Data(format!("class {c} has {} samples, fewer than {folds} folds", m.len())));
        }
        rng.shuffle(m);
        for &i in m.iter() {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub index: usize,
    pub cell: GridCell,
    pub param_count: usize,
    /// NaN where training failed on that fold.
    #[serde(with = "super::nan_as_null::vec")]
    pub fold_auc: Vec<f64>,
    #[serde(with = "super::nan_as_null")]
    pub mean_auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub cells: Vec<CellScore>,
    /// Index into `cells` of the selected cell.
    pub best: usize,
    pub fold_of_sample: Vec<usize>,
}

impl CvResult {
    pub fn best_cell(&self) -> &CellScore {
        &self.cells[self.best]
    }

    /// Cells by mean AUC descending (failed cells last), ties in grid order.
    pub fn ranked(&self) -> Vec<&CellScore> {
        let mut r: Vec<&CellScore> = self.cells.iter().collect();
        r.sort_by(|a, b| {
            let key = |c: &CellScore| if c.mean_auc.is_nan() { f64::NEG_INFINITY } else { c.mean_auc };
            key(b).total_cmp(&key(a)).then(a.index.cmp(&b.index))
        });
        r
    }

    /// One row per cell, best first, the selected cell marked.
    pub fn write_csv(&self, path: &Path, setup: &ExperimentSetup) -> Result<()> {
        let header = [
            "rank",
            "selected",
            "model",
            "encoder_layer_sizes",
            "pathway_hidden_sizes",
            "beta",
            "schedule",
            "classifier",
            "params",
            "mean_auc",
            "fold_auc",
        ];
        let mut rows = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join("-");
        for (rank, c) in self.ranked().into_iter().enumerate() {
            let a = &c.cell.architecture;
            rows.push(vec![
                (rank + 1).to_string(),
                u8::from(c.index == self.best).to_string(),
                setup.model_label(a.kind),
                join(&a.encoder_layer_sizes),
                join(&a.pathway_hidden_sizes),
                a.beta.to_string(),
                a.schedule.to_string(),
                c.cell.classifier.to_string(),
                c.param_count.to_string(),
                c.mean_auc.to_string(),
                c.fold_auc.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
            ]);
        }
        write_text(path, &render_rows(path, &rows)?)
    }
}

struct Folds<'a> {
    table: &'a ExpressionTable,
    y: &'a [usize],
    setup: &'a ExperimentSetup,
    classifiers: &'a [ClassifierKind],
    fold_of: &'a [usize],
    seed: u64,
}

/// Validation AUC of every classifier for one architecture on one fold;
/// `None` per classifier when training failed numerically.
fn run_unit(ctx: &Folds, arch: &ArchitectureConfig, fold: usize, unit: u64) -> Result<Vec<Option<f64>>> {
    let Folds { table, y, setup, classifiers, fold_of, seed } = *ctx;
    let train_rows: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != fold).collect();
    let val_rows: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == fold).collect();
    let (train_t, val_t) = (table.select_samples(&train_rows)?, table.select_samples(&val_rows)?);
    let (x_train, x_val) = setup.preprocess.apply(&train_t, &val_t, TestNormalization::ReuseTrain)?;
    let y_train: Vec<usize> = train_rows.iter().map(|&i| y[i]).collect();
    let y_val: Vec<usize> = val_rows.iter().map(|&i| y[i]).collect();

    let mut model_rng = Rng::derive(seed, 2 * unit);
    let mut clf_rng = Rng::derive(seed, 2 * unit + 1);
    let trained = (|| {
        let mut model = Model::build(arch.clone(), table.n_genes(), setup.masks.clone(), &mut model_rng)?;
        fit(&mut model, &x_train, &setup.train, &mut model_rng)?;
        let r_train = extract_representation(&model, &x_train, setup.space)?;
        let r_val = extract_representation(&model, &x_val, setup.space)?;
        Ok((r_train, r_val))
    })();
    let (r_train, r_val) = match trained {
        Ok(r) => r,
        Err(e) if is_training_failure(&e) => {
            log::warn!("fold {fold}: training failed ({e}); cell scored as failed");
            return Ok(vec![None; classifiers.len()]);
        }
        Err(e) => return Err(e),
    };
    classifiers
        .iter()
        .map(|&kind| {
            let scored = Classifier::fit(kind, &r_train, &y_train, setup.n_classes(), &mut clf_rng)
                .and_then(|c| c.predict_proba(&r_val))
                .and_then(|p| roc_auc_macro(&y_val, &p));
            match scored {
                Ok(auc) => Ok(Some(auc)),
                Err(e) if is_training_failure(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Grid search by stratified k-fold cross-validation on the training table
/// only. Each (architecture, fold) model is trained once and shared by all
/// classifiers. Selection: highest mean fold AUC, then fewest parameters,
/// then grid order.
pub fn cross_validate(
    table: &ExpressionTable,
    y: &[usize],
    setup: &ExperimentSetup,
    base: &ArchitectureConfig,
    grid: &GridSpec,
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    if table.n_samples() != y.len() {
        return Err(Error::shape("cross_validate", format!("{} samples vs {} labels", table.n_samples(), y.len())));
    }
    setup.space.check(base.kind)?;
    let archs = grid.architectures(base)?;
    let fold_of = stratified_folds(y, setup.n_classes(), folds, &mut Rng::derive(seed, u64::MAX))?;
    let units: Vec<(usize, usize)> = (0..archs.len()).flat_map(|a| (0..folds).map(move |f| (a, f))).collect();
    let ctx = Folds { table, y, setup, classifiers: &grid.classifiers, fold_of: &fold_of, seed };
    let results = units
        .par_iter()
        .enumerate()
        .map(|(u, &(a, f))| run_unit(&ctx, &archs[a], f, u as u64))
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for (a, arch) in archs.iter().enumerate() {
        let param_count =
            Model::build(arch.clone(), table.n_genes(), setup.masks.clone(), &mut Rng::new(0))?.param_count();
        for (ci, &classifier) in grid.classifiers.iter().enumerate() {
            let fold_auc: Vec<f64> = (0..folds).map(|f| results[a * folds + f][ci].unwrap_or(f64::NAN)).collect();
            let mean_auc = fold_auc.iter().sum::<f64>() / folds as f64;
            cells.push(CellScore {
                index: cells.len(),
                cell: GridCell { architecture: arch.clone(), classifier },
                param_count,
                fold_auc,
                mean_auc,
            });
        }
    }
    let best = cells
        .iter()
        .filter(|c| c.mean_auc.is_finite())
        .min_by(|a, b| {
            b.mean_auc.total_cmp(&a.mean_auc).then(a.param_count.cmp(&b.param_count)).then(a.index.cmp(&b.index))
        })
        .map(|c| c.index)
        .ok_or_else(|| Error::Numeric("every grid cell failed to train".into()))?;
    Ok(CvResult { cells, best, fold_of_sample: fold_of })
}
