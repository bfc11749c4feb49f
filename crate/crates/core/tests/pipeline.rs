use paae::classifiers::ClassifierKind;
use paae::dataio::{align_labels, resolve_pathways, ExpressionTable};
use paae::models::{ArchitectureConfig, ModelKind, TrainConfig};
use paae::pipeline::{
    compare_runs, cross_validate, external_validate, Cohort, Direction, ExperimentSetup, GridCell, GridSpec,
    Preprocess, RunReport, Space,
};
use paae::synth::{generate, SynthConfig};
use paae::Error;

struct Fixture {
    train: ExpressionTable,
    y_train: Vec<usize>,
    test: ExpressionTable,
    y_test: Vec<usize>,
    setup: ExperimentSetup,
}

fn fixture() -> Fixture {
    let data = generate(&SynthConfig {
        genes: 80,
        free_genes: 20,
        pathways: 6,
        train_samples: 100,
        test_samples: 60,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let vocabulary = data.train_labels.vocabulary.clone();
    let (train, y_train) = align_labels(&data.train, &data.train_labels, &vocabulary).unwrap();
    let (test, y_test) = align_labels(&data.test, &data.test_labels, &vocabulary).unwrap();
    let (masks, _) = resolve_pathways(&data.pathways, &train.gene_names).unwrap();
    let setup = ExperimentSetup {
        masks,
        vocabulary,
        preprocess: Preprocess::default(),
        space: Space::Z,
        train: TrainConfig { epochs: 20, learning_rate: 1e-3, batch_size: 32, seed: 0 },
        pathway_label: Some("SYNTH".into()),
    };
    Fixture { train, y_train, test, y_test, setup }
}

fn paae_cell() -> GridCell {
    let mut architecture = ArchitectureConfig::new(ModelKind::Paae, vec![4]);
    architecture.dropout_rate = 0.0;
    GridCell { architecture, classifier: ClassifierKind::Lr }
}

fn validate(f: &Fixture, cell: &GridCell, repeats: usize, seed: u64) -> paae::Result<RunReport> {
    external_validate(
        Cohort { table: &f.train, labels: &f.y_train },
        Cohort { table: &f.test, labels: &f.y_test },
        &f.setup,
        cell,
        repeats,
        seed,
    )
}

#[test]
fn external_validation_is_reproducible_per_repeat() {
    let f = fixture();
    let cell = paae_cell();
    let report = validate(&f, &cell, 3, 10).unwrap();
    assert_eq!(report.repeats.len(), 3);
    assert_eq!(report.summary.completed, 3);
    assert_eq!(report, validate(&f, &cell, 3, 10).unwrap());
    // repeat r depends only on its own seed, not on how many repeats run
    let single = validate(&f, &cell, 1, 11).unwrap();
    assert_eq!(single.repeats[0].metrics, report.repeats[1].metrics);
    assert_eq!(RunReport::from_json(&report.to_json().unwrap()).unwrap(), report);

    let same = compare_runs(&report, &report, "ROC AUC").unwrap();
    assert_eq!(same.p_value, 1.0);
    assert_eq!(same.direction, Direction::Tied);
}

#[test]
fn external_validation_rejects_bad_requests() {
    let f = fixture();
    assert!(matches!(validate(&f, &paae_cell(), 0, 0), Err(Error::Config(_))));
    let mut dense = paae_cell();
    dense.architecture.kind = ModelKind::Ae;
    let mut setup = f.setup.clone();
    setup.space = Space::A;
    let f = Fixture { setup, ..f };
    assert!(matches!(validate(&f, &dense, 1, 0), Err(Error::Config(_))));
}

#[test]
fn cross_validation_selects_the_best_cell() {
    let f = fixture();
    let grid = GridSpec {
        encoder_layer_sizes: vec![vec![4], vec![8, 4]],
        pathway_hidden_sizes: vec![vec![]],
        betas: vec![0.0],
        schedules: vec![Default::default()],
        classifiers: vec![ClassifierKind::Lr],
    };
    let base = paae_cell().architecture;
    let result = cross_validate(&f.train, &f.y_train, &f.setup, &base, &grid, 3, 4).unwrap();
    assert_eq!(result.cells.len(), 2);
    assert!(result.cells.iter().all(|c| c.fold_auc.len() == 3));
    let best = result.best_cell();
    assert!(result.cells.iter().all(|c| c.mean_auc <= best.mean_auc));
    assert_eq!(result.fold_of_sample.len(), f.y_train.len());
    let again = cross_validate(&f.train, &f.y_train, &f.setup, &base, &grid, 3, 4).unwrap();
    assert_eq!(serde_json::to_string(&result).unwrap(), serde_json::to_string(&again).unwrap());
}
