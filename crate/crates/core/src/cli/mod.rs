//! The `paae` command line: one TOML experiment config, flag overrides, and
//! a subcommand per protocol step. Every subcommand validates the whole
//! config before writing anything and records its outputs in a manifest.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numeric failure
//! or divergence.

mod commands;
mod config;

pub use commands::{cmd_gridsearch, cmd_interpret, cmd_survival, cmd_synth, cmd_train, cmd_validate};
pub use config::{
    CohortConfig, EvaluationConfig, ExperimentConfig, InterpretConfig, NormalizationConfig, NormalizerName,
    PathwayConfig, PathwayFormat, ScaleName, Stage, SurvivalConfig, Transform, OUTPUT_DIR_ENV,
};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::classifiers::ClassifierKind;
use crate::error::{Error, Result};
use crate::models::{ModelKind, ScheduleKind};
use crate::pipeline::Space;
use crate::synth::SynthConfig;

#[derive(Debug, Parser)]
#[command(name = "paae", version, about = "Pathway-constrained autoencoders for gene expression")]
pub struct Cli {
    /// Worker threads; 1 gives bit-reproducible runs. Defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a pathway-structured synthetic dataset and an example config.
    Synth(SynthArgs),
    /// Train one autoencoder; writes a checkpoint and the loss history.
    Train(RunArgs),
    /// Stratified k-fold grid search on the training cohort.
    Gridsearch(RunArgs),
    /// Repeated external validation on the test cohort.
    Validate(RunArgs),
    /// Pathway rankings, gene weights, clustermaps and featuremaps.
    Interpret(CheckpointArgs),
    /// Kaplan-Meier tercile splits for top-weighted genes.
    Survival(CheckpointArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with generator settings; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_samples: Option<usize>,
    #[arg(long)]
    pub test_samples: Option<usize>,
    #[arg(long)]
    pub genes: Option<usize>,
    #[arg(long)]
    pub pathways: Option<usize>,
}

/// Flags that override the experiment config.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub kind: Option<ModelKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub schedule: Option<ScheduleKind>,
    #[arg(long)]
    pub space: Option<Space>,
    #[arg(long)]
    pub classifier: Option<ClassifierKind>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($flag:ident => $($target:tt)+) => {
                if let Some(v) = self.$flag.clone() {
                    cfg.$($target)+ = v;
                }
            };
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = Some(dir.clone());
        }
        set!(dataset => dataset);
        set!(seed => seed);
        set!(kind => model.kind);
        set!(epochs => train.epochs);
        set!(learning_rate => train.learning_rate);
        set!(batch_size => train.batch_size);
        set!(dropout => model.dropout_rate);
        set!(beta => model.beta);
        set!(schedule => model.schedule);
        set!(space => evaluation.space);
        set!(classifier => evaluation.classifier);
        set!(folds => evaluation.folds);
        set!(repeats => evaluation.repeats);
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct CheckpointArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Checkpoint of a pathway model written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
}

fn experiment(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    args.overrides.apply(&mut cfg);
    Ok(cfg)
}

fn synth_config(args: &SynthArgs) -> Result<SynthConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.train_samples = args.train_samples.unwrap_or(cfg.train_samples);
    cfg.test_samples = args.test_samples.unwrap_or(cfg.test_samples);
    cfg.genes = args.genes.unwrap_or(cfg.genes);
    cfg.pathways = args.pathways.unwrap_or(cfg.pathways);
    Ok(cfg)
}

fn dispatch(command: &Command) -> Result<Vec<PathBuf>> {
    match command {
        Command::Synth(a) => cmd_synth(&synth_config(a)?, &a.out),
        Command::Train(a) => cmd_train(&experiment(a)?),
        Command::Gridsearch(a) => cmd_gridsearch(&experiment(a)?),
        Command::Validate(a) => cmd_validate(&experiment(a)?),
        Command::Interpret(a) => cmd_interpret(&experiment(&a.run)?, &a.checkpoint),
        Command::Survival(a) => cmd_survival(&experiment(&a.run)?, &a.checkpoint),
    }
}

/// Runs a parsed command line, returning the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    match cli.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(|| dispatch(&cli.command)),
        None => dispatch(&cli.command),
    }
}

/// Parses `args`, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let text = "[data]\nexpression = \"x.tsv\"\n[model]\nkind = \"AE\"\nencoder_layer_sizes = [4]\n";
        let mut cfg = ExperimentConfig::from_toml_str(text, std::path::Path::new("")).unwrap();
        let cli =
            Cli::try_parse_from(["paae", "train", "-c", "x.toml", "--epochs", "3", "--kind", "VAE", "--space", "mu"])
                .unwrap();
        let Command::Train(args) = cli.command else { panic!("expected train") };
        args.overrides.apply(&mut cfg);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.model.kind, ModelKind::Vae);
        assert_eq!(cfg.evaluation.space, Space::Mu);
        assert_eq!(cfg.train.batch_size, 128);
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(main_with_args(["paae", "train"]), 1);
        assert_eq!(main_with_args(["paae", "bogus"]), 1);
        assert_eq!(main_with_args(["paae", "train", "-c", "/nonexistent/x.toml"]), 1);
        assert_eq!(main_with_args(["paae", "--threads", "0", "train", "-c", "x.toml"]), 1);
    }
}
