//! `agropath` command-line front end.

mod commands;
mod data;
mod exit;
mod results;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use agropath::io::config::{ConfigFile, PipelineConfig};
use agropath::metrics::Averaging;
use agropath::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "agropath", version, about = "Quality-gated foliar disease identification")]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 is the deterministic reference mode.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a manifest from a directory with one subdirectory per class.
    Ingest(IngestArgs),
    /// Train the quality model on MOS-labelled manifests.
    TrainIqa(TrainIqaArgs),
    /// Train the disease classifier on a labelled manifest.
    TrainClassifier(TrainClassifierArgs),
    /// Stratified k-fold evaluation of the classifier recipe.
    CrossValidate(CrossValidateArgs),
    /// Score a saved model on a manifest.
    Evaluate(EvaluateArgs),
    /// Pick the gate threshold that discards a given share of a scored set.
    CalibrateGate(CalibrateGateArgs),
    /// Run the gate-then-classify workflow on images.
    Predict(PredictArgs),
    /// Render CSV reports from saved results files.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Dataset root with one subdirectory per class.
    root: PathBuf,
    /// Built-in registry name or registry text file.
    #[arg(long)]
    registry: String,
    /// Manifest CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainIqaArgs {
    /// Training manifest with a `mos` column.
    #[arg(long)]
    train: PathBuf,
    /// Validation manifest with a `mos` column.
    #[arg(long)]
    val: PathBuf,
    /// `tiny` or `small`; overrides the config file.
    #[arg(long)]
    preset: Option<String>,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Training history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainClassifierArgs {
    /// Labelled training manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Built-in registry name or registry text file; defaults to the
    /// manifest's registry, then to its sorted label set.
    #[arg(long)]
    registry: Option<String>,
    /// `mobile` or `large`; overrides the config file.
    #[arg(long)]
    preset: Option<String>,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Training history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CrossValidateArgs {
    /// Labelled manifest to split into folds.
    #[arg(long)]
    manifest: PathBuf,
    /// Built-in registry name or registry text file.
    #[arg(long)]
    registry: Option<String>,
    /// `mobile` or `large`; overrides the config file.
    #[arg(long)]
    preset: Option<String>,
    /// Number of folds; overrides the config file.
    #[arg(long)]
    folds: Option<usize>,
    /// cv-summary CSV to write.
    #[arg(long)]
    report: PathBuf,
    /// Per-fold confusion matrices as JSON.
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Quality or classifier model file.
    #[arg(long)]
    model: PathBuf,
    /// Labelled manifest, or one with a `mos` column for a quality model.
    #[arg(long)]
    manifest: PathBuf,
    /// Row name in the report (`split` or `dataset` column).
    #[arg(long, default_value = "test")]
    name: String,
    /// Report CSV to write.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Raw results JSON for `report`.
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CalibrateGateArgs {
    /// Quality model file.
    #[arg(long)]
    iqa: PathBuf,
    /// Images to score; labels and MOS are ignored.
    #[arg(long)]
    manifest: PathBuf,
    /// Share of images to discard; overrides the config file.
    #[arg(long)]
    discard_fraction: Option<f64>,
    /// File that receives the threshold.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Quality model file.
    #[arg(long)]
    iqa: PathBuf,
    /// Classifier model file.
    #[arg(long)]
    classifier: PathBuf,
    /// Gate threshold; required unless `--threshold-file` is given.
    #[arg(long, conflicts_with = "threshold_file")]
    threshold: Option<f32>,
    /// File written by `calibrate-gate`.
    #[arg(long)]
    threshold_file: Option<PathBuf>,
    /// Registry the classifier must carry.
    #[arg(long)]
    registry: Option<String>,
    /// Result CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Images to score and classify.
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// `classification`, `iqa` or `cv-summary`.
    #[arg(long)]
    kind: String,
    /// Results files written by `evaluate` or `cross-validate`.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// `macro` or `micro`; overrides the config file.
    #[arg(long)]
    averaging: Option<Averaging>,
    /// Report CSV to write.
    #[arg(long)]
    out: PathBuf,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(&ConfigFile::read(path)?)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {} worker threads: {e}", cfg.threads)))?
        .install(|| match &cli.command {
            Command::Ingest(a) => commands::ingest(a),
            Command::TrainIqa(a) => commands::train_iqa(a, &cfg),
            Command::TrainClassifier(a) => commands::train_classifier(a, &cfg),
            Command::CrossValidate(a) => commands::cross_validate(a, &cfg),
            Command::Evaluate(a) => commands::evaluate(a, &cfg),
            Command::CalibrateGate(a) => commands::calibrate_gate(a, &cfg),
            Command::Predict(a) => commands::predict(a),
            Command::Report(a) => commands::report(a, &cfg),
        })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::code(&e))
        }
    }
}
