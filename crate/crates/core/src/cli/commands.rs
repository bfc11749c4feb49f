use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dataio::{
    align_labels, fit_normalizer, fpkm_to_tpm_log, intensity_to_ipm_log, intersect_genes, load_expression_tsv,
    load_gene_mapping, load_labels, load_survival, map_gene_ids, merge_duplicate_genes, parse_gmt, parse_msigdb_json,
    render_rows, resolve_pathways, write_text, ExpressionTable, LabelTable, PathwaySet,
};
use crate::error::{Error, Result};
use crate::interpret::{
    apply_survival_window, emit_clustermap, emit_featuremap, emit_km_plot, hierarchical_cluster, pca_2d,
    rank_pathways_by_mi, tercile_survival, top_genes_by_anpw, Heatmap, RankedPathway, ScatterMap,
};
use crate::models::{fit, load_checkpoint, save_checkpoint, Model, PathwayMask};
use crate::ndcore::{Matrix, Rng};
use crate::pipeline::{
    cross_validate, external_validate, extract_representation, write_report_csv, Cohort, CvResult, ExperimentSetup,
    GridCell, Space,
};
use crate::synth::{generate, write_dataset, SynthConfig};

use super::config::{
    check_output_dir, sha256_json, CohortConfig, ExperimentConfig, PathwayConfig, PathwayFormat, Stage, Transform,
};

/// File names follow `<prefix>-<dataset>-<model>-<space>.<ext>`.
struct Artifacts {
    dir: PathBuf,
    dataset: String,
    model: String,
    files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_sha256: &'a str,
    files: Vec<String>,
}

/// Keeps names usable inside file names.
fn file_token(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' }).collect()
}

impl Artifacts {
    fn create(dir: PathBuf, dataset: &str, model: &str) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir, dataset: dataset.into(), model: model.into(), files: Vec::new() })
    }

    fn path(&mut self, prefix: &str, space: &str, ext: &str) -> PathBuf {
        let p = self.dir.join(format!("{prefix}-{}-{}-{space}.{ext}", self.dataset, self.model));
        self.files.push(p.clone());
        p
    }

    /// Writes the manifest and returns every file of the run, manifest last.
    fn finish(mut self, command: &str, config_sha256: &str) -> Result<Vec<PathBuf>> {
        let files = self.files.iter().map(|f| f.strip_prefix(&self.dir).unwrap_or(f).display().to_string()).collect();
        let manifest = Manifest { command, version: env!("CARGO_PKG_VERSION"), config_sha256, files };
        let path = self.dir.join(format!("manifest-{command}.json"));
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serde(e.to_string()))?;
        write_text(&path, &(json + "\n"))?;
        self.files.push(path);
        Ok(self.files)
    }
}

fn write_csv(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    write_text(path, &render_rows(path, rows)?)
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

fn load_table(cohort: &CohortConfig) -> Result<ExpressionTable> {
    let mut table = load_expression_tsv(&cohort.expression, cohort.orientation, cohort.scale()?)?;
    if let Some(mapping) = &cohort.gene_mapping {
        table = merge_duplicate_genes(&map_gene_ids(&table, &load_gene_mapping(mapping)?)?)?;
    }
    match cohort.transform {
        Transform::None => Ok(table),
        Transform::FpkmToTpm => fpkm_to_tpm_log(&table),
        Transform::IntensityToIpm => intensity_to_ipm_log(&table),
    }
}

fn load_cohort_labels(cohort: &CohortConfig) -> Result<LabelTable> {
    let path = cohort.labels.as_ref().ok_or_else(|| Error::Config("cohort has no label file".into()))?;
    load_labels(path, &cohort.label_column, &cohort.drop_labels)
}

fn load_pathway_set(p: &PathwayConfig) -> Result<PathwaySet> {
    match p.format() {
        PathwayFormat::MsigdbJson => parse_msigdb_json(&p.path),
        _ => parse_gmt(&p.path),
    }
}

fn masks_for(cfg: &ExperimentConfig, genes: &[String]) -> Result<Vec<PathwayMask>> {
    match &cfg.pathways {
        Some(p) if cfg.model.kind.uses_pathways() => {
            let (masks, report) = resolve_pathways(&load_pathway_set(p)?, genes)?;
            log::info!(
                "{} pathways resolved, {} dropped, {} listed genes absent",
                masks.len(),
                report.dropped(),
                report.missing_genes()
            );
            Ok(masks)
        }
        _ => Ok(Vec::new()),
    }
}

fn setup_for(
    cfg: &ExperimentConfig,
    masks: Vec<PathwayMask>,
    vocabulary: Vec<String>,
    space: Space,
) -> Result<ExperimentSetup> {
    Ok(ExperimentSetup {
        masks,
        vocabulary,
        preprocess: cfg.normalization.preprocess()?,
        space,
        train: cfg.train_config(),
        pathway_label: cfg.pathways.as_ref().and_then(|p| p.label.clone()),
    })
}

fn normalized(cfg: &ExperimentConfig, table: &ExpressionTable) -> Result<Matrix> {
    let kind = cfg.normalization.preprocess()?.normalizer;
    Ok(fit_normalizer(table, kind)?.apply(table)?.values)
}

/// Writes a synthetic dataset plus a ready-to-run `experiment.toml`.
pub fn cmd_synth(config: &SynthConfig, out: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    check_output_dir(out)?;
    let data = generate(config)?;
    let paths = write_dataset(&data, out)?;
    let mut files: Vec<PathBuf> = paths.all().into_iter().map(Path::to_path_buf).collect();
    let experiment = out.join("experiment.toml");
    write_text(&experiment, EXPERIMENT_TEMPLATE)?;
    files.push(experiment);
    let art = Artifacts { dir: out.to_path_buf(), dataset: String::new(), model: String::new(), files };
    art.finish("synth", &sha256_json(config)?)
}

const EXPERIMENT_TEMPLATE: &str = r#"# Experiment over the synthetic cohort in this directory.
dataset = "synthetic"
seed = 0
output_dir = "runs"

[data]
expression = "train_expression.tsv"
labels = "train_labels.tsv"
survival = "survival.tsv"

[test_data]
expression = "test_expression.tsv"
labels = "test_labels.tsv"

[pathways]
path = "pathways.gmt"
label = "SYNTH"

[normalization]
method = "z_score"
test_policy = "refit"

[model]
kind = "PAAE"
pathway_hidden_sizes = [4]
encoder_layer_sizes = [8]
dropout_rate = 0.1

[train]
epochs = 64
learning_rate = 1e-3
batch_size = 64

[grid]
encoder_layer_sizes = [[8], [16, 8]]
pathway_hidden_sizes = [[], [4]]
classifiers = ["LR", "RF"]

[evaluation]
space = "z"
classifier = "LR"
folds = 4
repeats = 4
"#;

/// Trains one model on the training cohort; writes the checkpoint and the
/// per-epoch loss history.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate(Stage::Train)?;
    let table = load_table(&cfg.data)?;
    let masks = masks_for(cfg, &table.gene_names)?;
    let x = normalized(cfg, &table)?;
    let mut rng = Rng::new(cfg.seed);
    let mut model =
        Model::build(cfg.model.clone(), table.n_genes(), masks, &mut rng)?.with_gene_names(table.gene_names.clone())?;
    let history = fit(&mut model, &x, &cfg.train_config(), &mut rng)?;
    log::info!("trained {} ({} parameters), final loss {:?}", model.kind(), model.param_count(), history.loss.last());

    let mut art = Artifacts::create(cfg.output_dir(), &cfg.dataset, model.kind().as_str())?;
    let space = cfg.evaluation.space.as_str();
    save_checkpoint(&model, &art.path("checkpoint", space, "ckpt"))?;
    write_text(&art.path("history", space, "csv"), &history.to_csv())?;
    art.finish("train", &cfg.hash()?)
}

/// Training table restricted to labelled samples, with class indices.
fn labelled_training(cfg: &ExperimentConfig) -> Result<(ExpressionTable, Vec<usize>, Vec<String>)> {
    let table = load_table(&cfg.data)?;
    let labels = load_cohort_labels(&cfg.data)?;
    let (table, y) = align_labels(&table, &labels, &labels.vocabulary)?;
    Ok((table, y, labels.vocabulary))
}

/// Stratified k-fold grid search on the training cohort.
pub fn cmd_gridsearch(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate(Stage::GridSearch)?;
    let grid = cfg.grid.as_ref().expect("validated");
    let (table, y, vocabulary) = labelled_training(cfg)?;
    let masks = masks_for(cfg, &table.gene_names)?;
    let setup = setup_for(cfg, masks, vocabulary, cfg.evaluation.space)?;
    let result = cross_validate(&table, &y, &setup, &cfg.model, grid, cfg.evaluation.folds, cfg.seed)?;
    let best = result.best_cell();
    log::info!("selected cell {} with mean AUC {:.4}", best.index, best.mean_auc);

    let mut art = Artifacts::create(cfg.output_dir(), &cfg.dataset, cfg.model.kind.as_str())?;
    let space = cfg.evaluation.space.as_str();
    result.write_csv(&art.path("grid", space, "csv"), &setup)?;
    let json = serde_json::to_string_pretty(&result).map_err(|e| Error::Serde(e.to_string()))?;
    write_text(&art.path("grid", space, "json"), &(json + "\n"))?;
    art.finish("gridsearch", &cfg.hash()?)
}

fn read_grid_result(path: &Path) -> Result<CvResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let result: CvResult = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    if result.best >= result.cells.len() {
        return Err(Error::parse(path, 0, "selected cell index out of range"));
    }
    Ok(result)
}

/// Repeated external validation of one cell: `[model]` with the configured
/// classifier, or the cell selected by a previous grid search.
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate(Stage::Validate)?;
    let test_cfg = cfg.test_data.as_ref().expect("validated");
    let cell = match &cfg.evaluation.grid_result {
        Some(path) => read_grid_result(path)?.best_cell().cell.clone(),
        None => GridCell { architecture: cfg.model.clone(), classifier: cfg.evaluation.classifier },
    };
    let space = cfg.evaluation.space;
    space.check(cell.architecture.kind)?;

    let (train, test) = intersect_genes(&load_table(&cfg.data)?, &load_table(test_cfg)?)?;
    let train_labels = load_cohort_labels(&cfg.data)?;
    let vocabulary = train_labels.vocabulary.clone();
    let (train, y_train) = align_labels(&train, &train_labels, &vocabulary)?;
    let (test, y_test) = align_labels(&test, &load_cohort_labels(test_cfg)?, &vocabulary)?;
    let masks = match &cfg.pathways {
        Some(p) if cell.architecture.kind.uses_pathways() => {
            resolve_pathways(&load_pathway_set(p)?, &train.gene_names)?.0
        }
        _ => Vec::new(),
    };
    let setup = setup_for(cfg, masks, vocabulary, space)?;
    let report = external_validate(
        Cohort { table: &train, labels: &y_train },
        Cohort { table: &test, labels: &y_test },
        &setup,
        &cell,
        cfg.evaluation.repeats,
        cfg.seed,
    )?;

    let mut art = Artifacts::create(cfg.output_dir(), &cfg.dataset, cell.architecture.kind.as_str())?;
    report.write_json(&art.path("report", space.as_str(), "json"))?;
    write_report_csv(std::slice::from_ref(&report), &art.path("report", space.as_str(), "csv"))?;
    let files = art.finish("validate", &cfg.hash()?)?;
    let failed = report.summary.failed;
    if failed > 0 {
        let first = report.repeats.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        if report.summary.completed == 0 {
            return Err(Error::Numeric(format!("all {failed} repeats diverged (first: {first})")));
        }
        log::warn!("{failed} of {} repeats diverged and are excluded from the medians ({first})", report.repeats.len());
    }
    Ok(files)
}

/// A pathway checkpoint with the training cohort projected through it.
struct Projected {
    model: Model,
    raw: ExpressionTable,
    labels: Vec<usize>,
    vocabulary: Vec<String>,
    activity: Matrix,
    latent: Matrix,
    pathway_names: Vec<String>,
}

fn project(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<Projected> {
    if !checkpoint.is_file() {
        return Err(Error::Config(format!("checkpoint `{}` does not exist", checkpoint.display())));
    }
    let model = load_checkpoint(checkpoint)?;
    Space::A.check(model.kind())?;
    if model.gene_names.is_empty() {
        return Err(Error::Data("checkpoint does not record its gene names".into()));
    }
    let table = load_table(&cfg.data)?.align_genes(&model.gene_names)?;
    let label_table = load_cohort_labels(&cfg.data)?;
    let (raw, labels) = align_labels(&table, &label_table, &label_table.vocabulary)?;
    let x = normalized(cfg, &raw)?;
    let activity = extract_representation(&model, &x, Space::A)?;
    let latent = extract_representation(&model, &x, Space::Z)?;
    let pathway_names = model.pathway_names().into_iter().map(str::to_string).collect();
    Ok(Projected { model, raw, labels, vocabulary: label_table.vocabulary, activity, latent, pathway_names })
}

fn mask_gene_names(model: &Model, j: usize) -> Vec<String> {
    model.masks[j].indices.iter().map(|&i| model.gene_names[i].clone()).collect()
}

fn clustermap(
    cfg: &ExperimentConfig,
    values: &Matrix,
    p: &Projected,
    columns: &[String],
    title: &str,
    svg: &Path,
    csv: &Path,
) -> Result<()> {
    let metric = cfg.interpret.metric;
    let row_tree = if cfg.interpret.cluster_rows { Some(hierarchical_cluster(values, metric)?) } else { None };
    let column_tree =
        if cfg.interpret.cluster_columns { Some(hierarchical_cluster(&values.transpose(), metric)?) } else { None };
    let map = Heatmap {
        values,
        row_names: &p.raw.sample_ids,
        column_names: columns,
        labels: &p.labels,
        vocabulary: &p.vocabulary,
        row_tree: row_tree.as_ref(),
        column_tree: column_tree.as_ref(),
        title,
    };
    emit_clustermap(&map, svg, csv)
}

/// Pathway rankings, gene weights, clustermaps and featuremaps for a pathway checkpoint.
pub fn cmd_interpret(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate(Stage::Interpret)?;
    let p = project(cfg, checkpoint)?;
    let icfg = &cfg.interpret;
    let ranking = rank_pathways_by_mi(&p.activity, &p.labels, &p.pathway_names, p.pathway_names.len())?;

    let mut art = Artifacts::create(cfg.output_dir(), &cfg.dataset, p.model.kind().as_str())?;
    let mut rows = vec![header(&["rank", "pathway", "column", "mutual_information"])];
    rows.extend(ranking.iter().enumerate().map(|(i, r)| {
        vec![(i + 1).to_string(), r.name.clone(), r.column.to_string(), r.mutual_information.to_string()]
    }));
    write_csv(&art.path("mi", "a", "csv"), &rows)?;

    let mut rows = vec![header(&["pathway", "rank", "gene", "npw", "anpw"])];
    for (j, name) in p.pathway_names.iter().enumerate() {
        let top =
            top_genes_by_anpw(&p.model.params.pathway_encoders[j], &mask_gene_names(&p.model, j), icfg.top_genes)?;
        rows.extend(top.iter().enumerate().map(|(k, g)| {
            vec![name.clone(), (k + 1).to_string(), g.gene.clone(), g.npw.to_string(), g.npw.abs().to_string()]
        }));
    }
    write_csv(&art.path("anpw", "a", "csv"), &rows)?;

    let shown: Vec<&RankedPathway> = ranking.iter().take(icfg.clustermap_pathways).collect();
    let cols: Vec<usize> = shown.iter().map(|r| r.column).collect();
    let names: Vec<String> = shown.iter().map(|r| r.name.clone()).collect();
    let title = format!("{} pathway activity, top {} by mutual information", p.model.kind(), cols.len());
    let (svg, csv) = (art.path("clustermap", "a", "svg"), art.path("clustermap", "a", "csv"));
    clustermap(cfg, &p.activity.select_columns(&cols)?, &p, &names, &title, &svg, &csv)?;
    let latent_names: Vec<String> = (0..p.latent.cols()).map(|i| format!("z{i}")).collect();
    let title = format!("{} latent space", p.model.kind());
    let (svg, csv) = (art.path("clustermap", "z", "svg"), art.path("clustermap", "z", "csv"));
    clustermap(cfg, &p.latent, &p, &latent_names, &title, &svg, &csv)?;

    let pca = pca_2d(&p.activity)?;
    let axis = |i: usize| format!("PC{} ({:.1}%)", i + 1, 100.0 * pca.explained[i]);
    let title = format!("{} pathway activity", p.model.kind());
    let map = ScatterMap {
        coords: &pca.coords,
        labels: &p.labels,
        vocabulary: &p.vocabulary,
        axis_labels: [axis(0), axis(1)],
        title: &title,
    };
    let panels: Vec<(usize, String, PathBuf)> = ranking
        .iter()
        .take(icfg.featuremap_pathways)
        .map(|r| (r.column, r.name.clone(), art.path(&format!("featuremap_{}", file_token(&r.name)), "a", "svg")))
        .collect();
    let class_path = art.path("featuremap", "a", "svg");
    emit_featuremap(&map, &p.activity, &panels, &class_path)?;
    art.finish("interpret", &cfg.hash()?)
}

/// Kaplan-Meier comparison of expression terciles for the top-weighted genes
/// of the most informative pathways, on the training cohort.
pub fn cmd_survival(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate(Stage::Survival)?;
    let scfg = &cfg.survival;
    let p = project(cfg, checkpoint)?;
    let path = cfg.data.survival.as_ref().expect("validated");
    let table = apply_survival_window(
        &load_survival(path, &cfg.data.survival_time_column, &cfg.data.survival_event_column)?,
        scfg.window_days,
    )?;
    // samples with both expression and survival, in expression order
    let rows: Vec<(usize, crate::dataio::SurvivalRecord)> =
        p.raw.sample_ids.iter().enumerate().filter_map(|(i, s)| table.get(s).map(|r| (i, r.clone()))).collect();
    if rows.len() < 3 {
        return Err(Error::Data(format!("only {} samples carry survival data; at least 3 are needed", rows.len())));
    }
    let records: Vec<_> = rows.iter().map(|(_, r)| r.clone()).collect();
    let sample_rows: Vec<usize> = rows.iter().map(|(i, _)| *i).collect();
    let gene_index = p.raw.gene_index();

    let ranking = rank_pathways_by_mi(&p.activity, &p.labels, &p.pathway_names, scfg.top_pathways)?;
    let mut art = Artifacts::create(cfg.output_dir(), &cfg.dataset, p.model.kind().as_str())?;
    let mut summary = vec![header(&[
        "pathway",
        "gene",
        "npw",
        "n_low",
        "n_high",
        "statistic",
        "p_value",
        "low_survival",
        "high_survival",
        "significant",
        "plot",
    ])];
    for r in &ranking {
        let genes = mask_gene_names(&p.model, r.column);
        for g in top_genes_by_anpw(&p.model.params.pathway_encoders[r.column], &genes, scfg.top_genes)? {
            let col = gene_index[g.gene.as_str()];
            let values: Vec<f64> = sample_rows.iter().map(|&i| p.raw.values[(i, col)]).collect();
            let cmp = match tercile_survival(&values, &records) {
                Ok(c) => c,
                Err(Error::Data(msg)) => {
                    log::warn!("{} / {}: {msg}; skipped", r.name, g.gene);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let prefix = format!("km_{}_{}", file_token(&r.name), file_token(&g.gene));
            let plot = art.path(&prefix, "a", "svg");
            let title = format!("{} ({}), p = {:.3e}", g.gene, r.name, cmp.logrank.p_value);
            emit_km_plot(&[("low tercile", &cmp.low), ("high tercile", &cmp.high)], &title, scfg.window_days, &plot)?;
            summary.push(vec![
                r.name.clone(),
                g.gene.clone(),
                g.npw.to_string(),
                cmp.n_low.to_string(),
                cmp.n_high.to_string(),
                cmp.logrank.statistic.to_string(),
                cmp.logrank.p_value.to_string(),
                cmp.low.survival_at(scfg.window_days).to_string(),
                cmp.high.survival_at(scfg.window_days).to_string(),
                u8::from(cmp.logrank.p_value <= scfg.alpha).to_string(),
                plot.file_name().expect("file").to_string_lossy().into_owned(),
            ]);
        }
    }
    write_csv(&art.path("logrank", "a", "csv"), &summary)?;
    art.finish("survival", &cfg.hash()?)
}
