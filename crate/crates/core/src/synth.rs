//! Pathway-structured synthetic expression data.
//!
//! Samples draw a class, then latent factors around that class's centroid.
//! Each pathway is a block of genes driven mainly by one factor; genes outside
//! every pathway load on random factors. Values sit on a log2(x + 1)-like
//! scale. Survival times depend on the first factor, so genes of the pathways
//! it drives carry prognostic signal.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{ExpressionTable, LabelTable, Pathway, PathwaySet, Scale, SurvivalRecord, SurvivalTable};
use crate::error::{Error, Result};
use crate::ndcore::{Matrix, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub factors: usize,
    pub pathways: usize,
    pub genes: usize,
    /// Genes that belong to no pathway.
    pub free_genes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Spread of the class centroids in factor space.
    pub class_separation: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            factors: 8,
            pathways: 20,
            genes: 400,
            free_genes: 150,
            train_samples: 600,
            test_samples: 400,
            class_separation: 1.5,
            noise_sd: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let pathway_genes = self.genes.saturating_sub(self.free_genes);
        if self.classes < 2 || self.factors < 2 || self.pathways == 0 {
            return Err(Error::Config("synthetic data needs ≥ 2 classes, ≥ 2 factors and ≥ 1 pathway".into()));
        }
        if pathway_genes < self.pathways {
            return Err(Error::Config(format!(
                "{} pathway genes cannot fill {} pathways",
                pathway_genes, self.pathways
            )));
        }
        if self.train_samples < self.classes || self.test_samples == 0 {
            return Err(Error::Config("too few synthetic samples".into()));
        }
        if !(self.noise_sd >= 0.0) || !(self.class_separation >= 0.0) {
            return Err(Error::Config("noise and separation must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub train: ExpressionTable,
    pub test: ExpressionTable,
    pub train_labels: LabelTable,
    pub test_labels: LabelTable,
    pub pathways: PathwaySet,
    /// Covers train and test samples.
    pub survival: SurvivalTable,
}

pub const LABEL_COLUMN: &str = "subtype";
pub const SURVIVAL_TIME_COLUMN: &str = "OS_DAYS";
pub const SURVIVAL_EVENT_COLUMN: &str = "OS_EVENT";
const OFFSET: f64 = 6.0;

fn class_name(c: usize) -> String {
    format!("C{c}")
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let (k, g) = (config.factors, config.genes);
    let in_pathways = g - config.free_genes;
    let gene_names: Vec<String> = (0..g).map(|i| format!("G{:04}", i + 1)).collect();

    // loadings: factors x genes, two non-zero entries per gene
    let mut loadings = Matrix::zeros(k, g);
    let mut pathways = Vec::with_capacity(config.pathways);
    for p in 0..config.pathways {
        let lo = p * in_pathways / config.pathways;
        let hi = (p + 1) * in_pathways / config.pathways;
        let main = p % k;
        let side = (main + 1 + p / k) % k;
        let side = if side == main { (main + 1) % k } else { side };
        for gene in lo..hi {
            let sign = if rng.uniform() < 0.2 { -1.0 } else { 1.0 };
            loadings[(main, gene)] = sign * (0.8 + 0.4 * rng.uniform());
            loadings[(side, gene)] = 0.3 * rng.normal();
        }
        pathways.push(Pathway { name: format!("PATHWAY_{:02}", p + 1), genes: gene_names[lo..hi].to_vec() });
    }
    for gene in in_pathways..g {
        let a = rng.below(k);
        let b = (a + 1 + rng.below(k - 1)) % k;
        loadings[(a, gene)] = 0.8 * rng.normal();
        loadings[(b, gene)] = 0.8 * rng.normal();
    }
    let centroids: Vec<Vec<f64>> =
        (0..config.classes).map(|_| (0..k).map(|_| config.class_separation * rng.normal()).collect()).collect();

    let n = config.train_samples + config.test_samples;
    let mut values = Matrix::zeros(n, g);
    let mut classes = Vec::with_capacity(n);
    let mut survival = Vec::with_capacity(n);
    let sample_ids: Vec<String> = (0..n).map(|i| format!("S{:05}", i + 1)).collect();
    for r in 0..n {
        let c = r % config.classes;
        let h: Vec<f64> = centroids[c].iter().map(|m| m + rng.normal()).collect();
        for gene in 0..g {
            let signal: f64 = (0..k).map(|f| loadings[(f, gene)] * h[f]).sum();
            values[(r, gene)] = (OFFSET + signal + config.noise_sd * rng.normal()).max(0.0);
        }
        classes.push(c);
        // exponential survival, hazard rising with the first factor
        let hazard = (1.0 / 1500.0) * (0.9 * h[0]).exp();
        let death = -(1.0 - rng.uniform()).ln() / hazard;
        let censor = 500.0 + 3500.0 * rng.uniform();
        survival.push(SurvivalRecord {
            sample: sample_ids[r].clone(),
            time: death.min(censor).round().max(1.0),
            event: death <= censor,
        });
    }
    // shuffle sample order so classes are not interleaved by construction
    let perm = rng.permutation(n);
    let values = values.select_rows(&perm)?;
    let classes: Vec<usize> = perm.iter().map(|&i| classes[i]).collect();
    let survival: Vec<SurvivalRecord> = perm
        .iter()
        .enumerate()
        .map(|(new, &old)| SurvivalRecord { sample: sample_ids[new].clone(), ..survival[old].clone() })
        .collect();

    let table = ExpressionTable::new(sample_ids.clone(), gene_names, values, Scale::Log2Plus1)?;
    let train_rows: Vec<usize> = (0..config.train_samples).collect();
    let test_rows: Vec<usize> = (config.train_samples..n).collect();
    let labels = |rows: &[usize]| {
        LabelTable::from_entries(rows.iter().map(|&r| (sample_ids[r].clone(), class_name(classes[r]))).collect())
    };
    Ok(SynthDataset {
        train: table.select_samples(&train_rows)?,
        test: table.select_samples(&test_rows)?,
        train_labels: labels(&train_rows)?,
        test_labels: labels(&test_rows)?,
        pathways: PathwaySet { pathways },
        survival: SurvivalTable::new(survival)?,
    })
}

/// File locations written by [`write_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthPaths {
    pub train_expression: PathBuf,
    pub test_expression: PathBuf,
    pub train_labels: PathBuf,
    pub test_labels: PathBuf,
    pub pathways: PathBuf,
    pub survival: PathBuf,
}

impl SynthPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train_expression: dir.join("train_expression.tsv"),
            test_expression: dir.join("test_expression.tsv"),
            train_labels: dir.join("train_labels.tsv"),
            test_labels: dir.join("test_labels.tsv"),
            pathways: dir.join("pathways.gmt"),
            survival: dir.join("survival.tsv"),
        }
    }

    pub fn all(&self) -> Vec<&Path> {
        vec![
            &self.train_expression,
            &self.test_expression,
            &self.train_labels,
            &self.test_labels,
            &self.pathways,
            &self.survival,
        ]
        .into_iter()
        .map(PathBuf::as_path)
        .collect()
    }
}

pub fn write_dataset(data: &SynthDataset, dir: &Path) -> Result<SynthPaths> {
    let paths = SynthPaths::in_dir(dir);
    data.train.write_tsv(&paths.train_expression)?;
    data.test.write_tsv(&paths.test_expression)?;
    data.train_labels.write(&paths.train_labels, LABEL_COLUMN)?;
    data.test_labels.write(&paths.test_labels, LABEL_COLUMN)?;
    data.pathways.write_gmt(&paths.pathways)?;
    let mut rows =
        vec![vec!["sample".to_string(), SURVIVAL_TIME_COLUMN.to_string(), SURVIVAL_EVENT_COLUMN.to_string()]];
    rows.extend(
        data.survival.records.iter().map(|r| vec![r.sample.clone(), r.time.to_string(), u8::from(r.event).to_string()]),
    );
    crate::dataio::write_text(&paths.survival, &crate::dataio::render_rows(&paths.survival, &rows)?)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{load_expression_tsv, load_labels, load_survival, parse_gmt, Orientation};

    #[test]
    fn shape_of_default_dataset() {
        let d = generate(&SynthConfig::default()).unwrap();
        assert_eq!((d.train.n_samples(), d.train.n_genes()), (600, 400));
        assert_eq!(d.test.n_samples(), 400);
        assert_eq!(d.pathways.len(), 20);
        let covered: std::collections::HashSet<&String> = d.pathways.pathways.iter().flat_map(|p| &p.genes).collect();
        assert_eq!(covered.len(), 250);
        assert_eq!(d.train_labels.vocabulary.len(), 5);
        assert!(d.train.values.as_slice().iter().all(|&v| v >= 0.0));
        assert_eq!(d.survival.len(), 1000);
    }

    #[test]
    fn seeded_and_round_trips() {
        let cfg = SynthConfig {
            genes: 60,
            free_genes: 20,
            pathways: 4,
            train_samples: 30,
            test_samples: 10,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.train, b.train);
        let dir = tempfile::tempdir().unwrap();
        let paths = write_dataset(&a, dir.path()).unwrap();
        let train = load_expression_tsv(&paths.train_expression, Orientation::SamplesAsRows, Scale::Log2Plus1).unwrap();
        assert_eq!(train, a.train);
        assert_eq!(load_labels(&paths.test_labels, LABEL_COLUMN, &[]).unwrap(), a.test_labels);
        assert_eq!(parse_gmt(&paths.pathways).unwrap(), a.pathways);
        assert_eq!(load_survival(&paths.survival, SURVIVAL_TIME_COLUMN, SURVIVAL_EVENT_COLUMN).unwrap(), a.survival);
        assert!(generate(&SynthConfig { free_genes: 400, ..Default::default() }).is_err());
    }
}
