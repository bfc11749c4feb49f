use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifiers::ClassifierKind;
use crate::dataio::{NormalizerKind, Orientation, Scale};
use crate::error::{Error, Result};
use crate::interpret::{DistanceMetric, FIVE_YEARS_DAYS};
use crate::models::{ArchitectureConfig, TrainConfig};
use crate::pipeline::{GridSpec, Preprocess, Space, TestNormalization};

/// Environment variable consulted when neither the flag nor the config names an output directory.
pub const OUTPUT_DIR_ENV: &str = "PAAE_OUTPUT_DIR";
const FALLBACK_OUTPUT_DIR: &str = "runs";

/// Value scale of an expression file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleName {
    #[default]
    Log2Plus1,
    Log2PlusOffset,
    Linear,
    ZScore,
    Percentile,
}

/// Per-sample rescaling applied after loading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    /// FPKM to `log2(TPM + 1)`.
    FpkmToTpm,
    /// Microarray intensity to `log2(IPM + 1)`.
    IntensityToIpm,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathwayFormat {
    /// `.json` means MSigDB JSON, anything else GMT.
    #[default]
    Auto,
    Gmt,
    MsigdbJson,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerName {
    #[default]
    ZScore,
    Percentile,
    LogOffset,
}

fn default_label_column() -> String {
    crate::synth::LABEL_COLUMN.into()
}

fn default_time_column() -> String {
    crate::synth::SURVIVAL_TIME_COLUMN.into()
}

fn default_event_column() -> String {
    crate::synth::SURVIVAL_EVENT_COLUMN.into()
}

/// Files describing one cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    pub expression: PathBuf,
    #[serde(default = "CohortConfig::default_orientation")]
    pub orientation: Orientation,
    #[serde(default)]
    pub scale: ScaleName,
    /// Offset for `log2_plus_offset`.
    #[serde(default)]
    pub scale_offset: Option<f64>,
    #[serde(default)]
    pub transform: Transform,
    /// Two-column `id -> gene symbol` table with a header row.
    #[serde(default)]
    pub gene_mapping: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// Label values treated as missing.
    #[serde(default)]
    pub drop_labels: Vec<String>,
    #[serde(default)]
    pub survival: Option<PathBuf>,
    #[serde(default = "default_time_column")]
    pub survival_time_column: String,
    #[serde(default = "default_event_column")]
    pub survival_event_column: String,
}

impl CohortConfig {
    fn default_orientation() -> Orientation {
        Orientation::SamplesAsRows
    }

    pub fn scale(&self) -> Result<Scale> {
        Ok(match (self.scale, self.scale_offset) {
            (ScaleName::Log2PlusOffset, Some(offset)) if offset > 0.0 => Scale::Log2PlusOffset { offset },
            (ScaleName::Log2PlusOffset, _) => {
                return Err(Error::Config("scale `log2_plus_offset` needs a positive `scale_offset`".into()))
            }
            (_, Some(_)) => return Err(Error::Config("`scale_offset` only applies to `log2_plus_offset`".into())),
            (ScaleName::Log2Plus1, None) => Scale::Log2Plus1,
            (ScaleName::Linear, None) => Scale::Linear,
            (ScaleName::ZScore, None) => Scale::ZScore,
            (ScaleName::Percentile, None) => Scale::Percentile,
        })
    }

    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        std::iter::once(&self.expression).chain(&self.gene_mapping).chain(&self.labels).chain(&self.survival)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| *p = base.join(&*p);
        join(&mut self.expression);
        self.gene_mapping.as_mut().map(join);
        self.labels.as_mut().map(join);
        self.survival.as_mut().map(join);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathwayConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub format: PathwayFormat,
    /// Shown in model labels, e.g. `PAAE(KEGG)`.
    #[serde(default)]
    pub label: Option<String>,
}

impl PathwayConfig {
    pub fn format(&self) -> PathwayFormat {
        match self.format {
            PathwayFormat::Auto if self.path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => {
                PathwayFormat::MsigdbJson
            }
            PathwayFormat::Auto => PathwayFormat::Gmt,
            f => f,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationConfig {
    #[serde(default)]
    pub method: NormalizerName,
    /// Offset for `log_offset`.
    #[serde(default)]
    pub offset: Option<f64>,
    #[serde(default)]
    pub test_policy: TestNormalization,
}

impl NormalizationConfig {
    pub fn preprocess(&self) -> Result<Preprocess> {
        let normalizer = match (self.method, self.offset) {
            (NormalizerName::LogOffset, Some(offset)) if offset > 0.0 => NormalizerKind::LogOffset { offset },
            (NormalizerName::LogOffset, _) => {
                return Err(Error::Config("normalization `log_offset` needs a positive `offset`".into()))
            }
            (_, Some(_)) => return Err(Error::Config("`offset` only applies to `log_offset` normalization".into())),
            (NormalizerName::ZScore, None) => NormalizerKind::ZScore,
            (NormalizerName::Percentile, None) => NormalizerKind::Percentile,
        };
        Ok(Preprocess { normalizer, test_policy: self.test_policy })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub space: Space,
    pub classifier: ClassifierKind,
    pub folds: usize,
    pub repeats: usize,
    /// Grid-search JSON whose selected cell `validate` should use instead of `[model]`.
    pub grid_result: Option<PathBuf>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { space: Space::Z, classifier: ClassifierKind::Lr, folds: 4, repeats: 16, grid_result: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretConfig {
    /// Genes listed per pathway in the ANPW table.
    pub top_genes: usize,
    /// Pathways (by mutual information) shown in the clustermap.
    pub clustermap_pathways: usize,
    /// Pathways (by mutual information) given their own featuremap panel.
    pub featuremap_pathways: usize,
    pub metric: DistanceMetric,
    pub cluster_rows: bool,
    pub cluster_columns: bool,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        Self {
            top_genes: 10,
            clustermap_pathways: 32,
            featuremap_pathways: 5,
            metric: DistanceMetric::Cosine,
            cluster_rows: true,
            cluster_columns: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalConfig {
    pub top_pathways: usize,
    pub top_genes: usize,
    pub window_days: f64,
    pub alpha: f64,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        Self { top_pathways: 5, top_genes: 10, window_days: FIVE_YEARS_DAYS, alpha: 0.05 }
    }
}

/// Everything one experiment needs, read from TOML. Relative paths are taken
/// relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Used in output file names.
    #[serde(default = "ExperimentConfig::default_dataset")]
    pub dataset: String,
    /// Master seed; training, folds and repeats derive their streams from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub data: CohortConfig,
    /// Held-out cohort for external validation.
    #[serde(default)]
    pub test_data: Option<CohortConfig>,
    #[serde(default)]
    pub pathways: Option<PathwayConfig>,
    #[serde(default)]
    pub normalization: NormalizationConfig,
    pub model: ArchitectureConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub interpret: InterpretConfig,
    #[serde(default)]
    pub survival: SurvivalConfig,
}

/// Which subcommand a config is being checked for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Train,
    GridSearch,
    Validate,
    Interpret,
    Survival,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::GridSearch => "gridsearch",
            Stage::Validate => "validate",
            Stage::Interpret => "interpret",
            Stage::Survival => "survival",
        }
    }
}

fn require_file(what: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} `{}` does not exist", path.display())))
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("`{name}` must be at least 1")));
    }
    Ok(())
}

impl ExperimentConfig {
    fn default_dataset() -> String {
        "dataset".into()
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.data.resolve_paths(base_dir);
        if let Some(t) = cfg.test_data.as_mut() {
            t.resolve_paths(base_dir);
        }
        if let Some(p) = cfg.pathways.as_mut() {
            p.path = base_dir.join(&p.path);
        }
        if let Some(g) = cfg.evaluation.grid_result.as_mut() {
            *g = base_dir.join(&*g);
        }
        if let Some(o) = cfg.output_dir.as_mut() {
            *o = base_dir.join(&*o);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config file `{}` does not exist", path.display())),
            _ => Error::io(path, e),
        })?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// Flag, then config, then [`OUTPUT_DIR_ENV`], then `runs`.
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT_DIR))
    }

    /// Training settings with the master seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    /// Full validation for `stage`; runs before anything is written.
    pub fn validate(&self, stage: Stage) -> Result<()> {
        if self.dataset.is_empty() || !self.dataset.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            return Err(Error::Config(format!(
                "dataset name `{}` must be non-empty and use only letters, digits, `_` and `.`",
                self.dataset
            )));
        }
        for cohort in std::iter::once(&self.data).chain(&self.test_data) {
            cohort.scale()?;
            for p in cohort.paths() {
                require_file("input file", p)?;
            }
        }
        self.normalization.preprocess()?;
        self.model.validate()?;
        self.train.validate()?;
        let needs_pathways = self.model.kind.uses_pathways() || matches!(stage, Stage::Interpret | Stage::Survival);
        match &self.pathways {
            Some(p) => require_file("pathway file", &p.path)?,
            None if needs_pathways => {
                return Err(Error::Config(format!("{} needs a `[pathways]` file", self.model.kind)));
            }
            None => {}
        }
        let needs_labels = stage != Stage::Train;
        if needs_labels && self.data.labels.is_none() {
            return Err(Error::Config(format!("`{}` needs `data.labels`", stage.as_str())));
        }
        match stage {
            Stage::Train => self.evaluation.space.check(self.model.kind)?,
            Stage::GridSearch => {
                self.evaluation.space.check(self.model.kind)?;
                let grid =
                    self.grid.as_ref().ok_or_else(|| Error::Config("`gridsearch` needs a `[grid]` section".into()))?;
                grid.cells(&self.model)?;
                if self.evaluation.folds < 2 {
                    return Err(Error::Config("cross-validation needs at least 2 folds".into()));
                }
            }
            Stage::Validate => {
                if self.evaluation.grid_result.is_none() {
                    self.evaluation.space.check(self.model.kind)?;
                }
                let test = self
                    .test_data
                    .as_ref()
                    .ok_or_else(|| Error::Config("`validate` needs a `[test_data]` cohort".into()))?;
                if test.labels.is_none() {
                    return Err(Error::Config("`validate` needs `test_data.labels`".into()));
                }
                positive("evaluation.repeats", self.evaluation.repeats)?;
                if let Some(g) = &self.evaluation.grid_result {
                    require_file("grid result", g)?;
                }
            }
            Stage::Interpret => {
                let i = &self.interpret;
                positive("interpret.top_genes", i.top_genes)?;
                positive("interpret.clustermap_pathways", i.clustermap_pathways)?;
            }
            Stage::Survival => {
                if self.data.survival.is_none() {
                    return Err(Error::Config("`survival` needs `data.survival`".into()));
                }
                let s = &self.survival;
                positive("survival.top_pathways", s.top_pathways)?;
                positive("survival.top_genes", s.top_genes)?;
                if !(s.window_days > 0.0) || !(s.alpha > 0.0 && s.alpha < 1.0) {
                    return Err(Error::Config("survival window must be positive and alpha in (0, 1)".into()));
                }
            }
        }
        check_output_dir(&self.output_dir())
    }

    /// SHA-256 of the resolved config as JSON.
    pub fn hash(&self) -> Result<String> {
        sha256_json(self)
    }
}

pub(crate) fn sha256_json<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_string(value).map_err(|e| Error::Serde(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(json.as_bytes())))
}

/// The directory must be an existing writable directory, or creatable below
/// its nearest existing ancestor.
pub(crate) fn check_output_dir(dir: &Path) -> Result<()> {
    let mut probe = dir;
    loop {
        if probe.exists() {
            let meta = std::fs::metadata(probe).map_err(|e| Error::io(probe, e))?;
            if !meta.is_dir() {
                return Err(Error::Config(format!("output location `{}` is not a directory", probe.display())));
            }
            if meta.permissions().readonly() {
                return Err(Error::Config(format!("output directory `{}` is not writable", probe.display())));
            }
            return Ok(());
        }
        match probe.parent() {
            Some(p) if !p.as_os_str().is_empty() => probe = p,
            _ => return Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
dataset = "toy"
seed = 7

[data]
expression = "train.tsv"
labels = "labels.tsv"

[pathways]
path = "sets.json"

[model]
kind = "PAAE"
encoder_layer_sizes = [8]
"#;

    #[test]
    fn parses_with_defaults_and_relative_paths() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.data.expression, Path::new("/cfg/train.tsv"));
        assert_eq!(cfg.data.label_column, "subtype");
        assert_eq!(cfg.pathways.as_ref().unwrap().format(), PathwayFormat::MsigdbJson);
        assert_eq!(cfg.evaluation.repeats, 16);
        assert_eq!(cfg.interpret.top_genes, 10);
        assert_eq!(cfg.train_config().seed, 7);
        assert_eq!(cfg.normalization.preprocess().unwrap(), Preprocess::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nsede = 8");
        assert!(matches!(ExperimentConfig::from_toml_str(&text, Path::new("")), Err(Error::Config(_))));
    }

    #[test]
    fn missing_inputs_fail_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL, dir.path()).unwrap();
        cfg.output_dir = Some(dir.path().join("out"));
        let err = cfg.validate(Stage::Train).unwrap_err();
        assert!(err.to_string().contains("train.tsv"), "{err}");
        std::fs::write(dir.path().join("train.tsv"), "").unwrap();
        std::fs::write(dir.path().join("labels.tsv"), "").unwrap();
        let err = cfg.validate(Stage::Train).unwrap_err();
        assert!(err.to_string().contains("pathway file"), "{err}");
        std::fs::write(dir.path().join("sets.json"), "{}").unwrap();
        cfg.validate(Stage::Train).unwrap();
        assert!(cfg.validate(Stage::GridSearch).unwrap_err().to_string().contains("[grid]"));
        assert!(cfg.validate(Stage::Survival).unwrap_err().to_string().contains("data.survival"));
        assert!(!dir.path().join("out").exists());
    }

    #[test]
    fn option_pairs_checked() {
        let mut n = NormalizationConfig { method: NormalizerName::LogOffset, offset: None, ..Default::default() };
        assert!(n.preprocess().is_err());
        n.offset = Some(1e-3);
        assert_eq!(n.preprocess().unwrap().normalizer, NormalizerKind::LogOffset { offset: 1e-3 });
        n.method = NormalizerName::ZScore;
        assert!(n.preprocess().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_toml_str(MINIMAL, Path::new("")).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed += 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }

    #[test]
    fn output_dir_must_be_a_directory() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        std::fs::write(&file, "").unwrap();
        assert!(check_output_dir(&file.join("sub")).is_err());
        check_output_dir(&dir.path().join("new/deeper")).unwrap();
    }
}
