//! Subcommand bodies.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use agropath::classifier::{
    build_classifier, cross_validate as run_cv, evaluate_classifier, train_classifier as fit_classifier,
    ClassifierConfig,
};
use agropath::io::config::PipelineConfig;
use agropath::io::ingest::ingest as ingest_tree;
use agropath::io::model_file::{self, SavedModel};
use agropath::io::report::{emit_report, ReportData};
use agropath::io::write_atomic;
use agropath::metrics::{classification_report, regression_report};
use agropath::nn::EpochRecord;
use agropath::quality::{build_iqa_model, calibrate_threshold, score_quality, train_iqa as fit_iqa};
use agropath::workflow::{run_workflow, WorkflowStatus};
use agropath::{Error, Result};

use crate::data::{labeled, read_manifest, registry_arg, resolve_registry, scored};
use crate::results::Results;
use crate::{
    CalibrateGateArgs, CrossValidateArgs, EvaluateArgs, IngestArgs, PredictArgs, ReportArgs, TrainClassifierArgs,
    TrainIqaArgs,
};

fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut text = String::from("epoch,lr,train_loss,val_loss,val_accuracy,improved\n");
    for h in history {
        let acc = h.val_accuracy.map(|a| format!("{a:.4}")).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{:.6},{:.6},{acc},{}\n",
            h.epoch, h.lr, h.train_loss, h.val_loss, h.improved
        ));
    }
    write_atomic(path, text.as_bytes())
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let registry = registry_arg(&args.registry)?;
    let outcome = ingest_tree(&args.root, &registry)?;
    for (class, n) in &outcome.class_counts {
        info!("{class}: {n}");
    }
    outcome.manifest.write(&args.out)?;
    info!(
        "wrote {} rows to {} ({} warnings)",
        outcome.manifest.rows.len(),
        args.out.display(),
        outcome.warnings.len()
    );
    Ok(())
}

pub fn train_iqa(args: &TrainIqaArgs, cfg: &PipelineConfig) -> Result<()> {
    let preset = match &args.preset {
        Some(p) => p.parse().map_err(|_| Error::Usage(format!("unknown iqa preset '{p}'")))?,
        None => cfg.iqa_preset,
    };
    let train = scored(&read_manifest(&args.train)?)?;
    let val = scored(&read_manifest(&args.val)?)?;
    let mut train_cfg = cfg.iqa_train.clone();
    train_cfg.shuffle_seed = cfg.seed;
    let model = build_iqa_model(preset, cfg.input_size, cfg.seed)?;
    let start = Instant::now();
    let trained = fit_iqa(model, &train, &val, &train_cfg)?;
    info!(
        "best epoch {} of {} in {:.1}s",
        trained.best_epoch,
        trained.history.len(),
        start.elapsed().as_secs_f64()
    );
    if let Some(h) = &args.history {
        write_history(h, &trained.history)?;
    }
    model_file::save(&args.out, &SavedModel::Quality(trained.model))
}

fn classifier_config(cfg: &PipelineConfig, preset_arg: Option<&str>) -> Result<(agropath::classifier::ClassifierPreset, ClassifierConfig)> {
    match preset_arg {
        Some(p) => {
            let preset = p.parse().map_err(|_| Error::Usage(format!("unknown classifier preset '{p}'")))?;
            let mut c = cfg.classifier.clone();
            if preset != cfg.classifier_preset {
                c.train.batch_size = ClassifierConfig::for_preset(preset).train.batch_size;
            }
            Ok((preset, c))
        }
        None => Ok((cfg.classifier_preset, cfg.classifier.clone())),
    }
}

pub fn train_classifier(args: &TrainClassifierArgs, cfg: &PipelineConfig) -> Result<()> {
    let loaded = read_manifest(&args.manifest)?;
    let registry = resolve_registry(args.registry.as_deref(), &loaded.manifest)?;
    let samples = labeled(&loaded, &registry)?;
    let (preset, config) = classifier_config(cfg, args.preset.as_deref())?;
    let model = build_classifier(preset, registry, cfg.input_size, cfg.seed)?;
    let start = Instant::now();
    let trained = fit_classifier(model, &samples, &config.with_seed(cfg.seed))?;
    let best = &trained.history[trained.best_epoch - 1];
    info!(
        "best epoch {} (holdout accuracy {:.4}) of {} in {:.1}s",
        trained.best_epoch,
        best.val_accuracy.unwrap_or(f64::NAN),
        trained.history.len(),
        start.elapsed().as_secs_f64()
    );
    if let Some(h) = &args.history {
        write_history(h, &trained.history)?;
    }
    model_file::save(&args.out, &SavedModel::Classifier(trained.model))
}

pub fn cross_validate(args: &CrossValidateArgs, cfg: &PipelineConfig) -> Result<()> {
    let loaded = read_manifest(&args.manifest)?;
    let registry = resolve_registry(args.registry.as_deref(), &loaded.manifest)?;
    let samples = labeled(&loaded, &registry)?;
    let (preset, config) = classifier_config(cfg, args.preset.as_deref())?;
    let k = args.folds.unwrap_or(cfg.folds);
    let start = Instant::now();
    let cv = run_cv(preset, &registry, &samples, cfg.input_size, k, &config, cfg.seed)?;
    info!(
        "{k}-fold accuracy {:.4} ± {:.4} in {:.1}s",
        cv.mean.accuracy,
        cv.stddev.accuracy,
        start.elapsed().as_secs_f64()
    );
    let folds: Vec<_> = cv.folds.iter().map(|f| f.matrix.clone()).collect();
    let results = Results::CvSummary {
        classes: registry.classes().to_vec(),
        folds,
    };
    if let Some(path) = &args.results {
        results.write(path)?;
    }
    emit_report(&render(&[results], "cv-summary", cfg.averaging)?, &args.report)
}

pub fn evaluate(args: &EvaluateArgs, cfg: &PipelineConfig) -> Result<()> {
    let loaded = read_manifest(&args.manifest)?;
    let results = match model_file::load(&args.model)? {
        SavedModel::Classifier(model) => {
            let samples = labeled(&loaded, &model.registry)?;
            let (matrix, report) = evaluate_classifier(&model, &samples, cfg.averaging)?;
            info!("accuracy {:.4}, {} f1 {:.4}", report.accuracy, report.averaging, report.f1);
            Results::Classification {
                name: args.name.clone(),
                classes: model.registry.classes().to_vec(),
                matrix,
            }
        }
        SavedModel::Quality(model) => {
            let samples = scored(&loaded)?;
            let pred: Vec<f64> = samples
                .par_iter()
                .map(|s| score_quality(&model, &s.image).map(f64::from))
                .collect::<Result<_>>()?;
            let target: Vec<f64> = samples.iter().map(|s| f64::from(s.mos.expect("checked by scored"))).collect();
            let report = regression_report(&pred, &target)?;
            info!("rmse {:.4}, plcc {:.4}, srocc {:.4}", report.rmse, report.plcc, report.srocc);
            Results::Iqa {
                name: args.name.clone(),
                report,
            }
        }
    };
    if let Some(path) = &args.results {
        results.write(path)?;
    }
    if let Some(path) = &args.report {
        emit_report(&render(std::slice::from_ref(&results), results.kind(), cfg.averaging)?, path)?;
    }
    Ok(())
}

pub fn calibrate_gate(args: &CalibrateGateArgs, cfg: &PipelineConfig) -> Result<()> {
    let q = args.discard_fraction.unwrap_or(cfg.discard_fraction);
    let iqa = model_file::load_quality(&args.iqa)?;
    let loaded = read_manifest(&args.manifest)?;
    let images = crate::data::decode_all(&loaded.paths)?;
    let scores: Vec<f32> = images
        .par_iter()
        .map(|img| score_quality(&iqa, img))
        .collect::<Result<_>>()?;
    let threshold = calibrate_threshold(&scores, q)?;
    let discarded = scores.iter().filter(|&&s| s < threshold).count();
    info!("threshold {threshold} discards {discarded} of {} images", scores.len());
    match &args.out {
        Some(path) => write_atomic(path, format!("{threshold}\n").as_bytes()),
        None => {
            println!("{threshold}");
            Ok(())
        }
    }
}

fn read_threshold(path: &Path) -> Result<f32> {
    let text = std::fs::read_to_string(path)?;
    text.trim()
        .parse()
        .map_err(|_| Error::Data(format!("threshold file {} does not hold a number", path.display())))
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let threshold = match (args.threshold, &args.threshold_file) {
        (Some(t), _) => t,
        (None, Some(path)) => read_threshold(path)?,
        (None, None) => return Err(Error::Usage("predict needs --threshold or --threshold-file".into())),
    };
    let expected = args.registry.as_deref().map(registry_arg).transpose()?;
    let iqa = model_file::load_quality(&args.iqa)?;
    let clf = model_file::load_classifier(&args.classifier)?;
    let results = args
        .images
        .par_iter()
        .map(|p| run_workflow(p, &iqa, &clf, threshold, expected.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["path".to_string(), "status".into(), "score".into(), "threshold".into(), "class".into()];
    header.extend(clf.registry.classes().iter().map(|c| format!("p_{c}")));
    out.write_record(&header)?;
    let mut rejected = 0;
    for (path, r) in args.images.iter().zip(&results) {
        let mut row = vec![
            path.display().to_string(),
            String::new(),
            format!("{:.6}", r.score),
            format!("{:.6}", r.threshold),
            String::new(),
        ];
        match &r.status {
            WorkflowStatus::Rejected => {
                rejected += 1;
                row[1] = "rejected".into();
                row.extend(std::iter::repeat_n(String::new(), clf.registry.len()));
            }
            WorkflowStatus::Diagnosed {
                class_name,
                probabilities,
                ..
            } => {
                row[1] = "diagnosed".into();
                row[4] = class_name.clone();
                row.extend(probabilities.iter().map(|p| format!("{p:.6}")));
            }
        }
        out.write_record(&row)?;
    }
    let bytes = out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    if rejected > 0 {
        warn!("{rejected} of {} images rejected by the quality gate", results.len());
    }
    match &args.out {
        Some(path) => write_atomic(path, &bytes),
        None => {
            std::io::stdout().write_all(&bytes)?;
            Ok(())
        }
    }
}

/// Builds report rows from results files of one kind.
fn render(results: &[Results], kind: &str, averaging: agropath::metrics::Averaging) -> Result<ReportData> {
    let mismatch = |r: &Results| Error::Usage(format!("results of kind '{}' in a {kind} report", r.kind()));
    match kind {
        "classification" => results
            .iter()
            .map(|r| match r {
                Results::Classification { name, matrix, .. } => {
                    Ok((name.clone(), classification_report(matrix, averaging)?))
                }
                other => Err(mismatch(other)),
            })
            .collect::<Result<_>>()
            .map(ReportData::Classification),
        "iqa" => results
            .iter()
            .map(|r| match r {
                Results::Iqa { name, report } => Ok((name.clone(), *report)),
                other => Err(mismatch(other)),
            })
            .collect::<Result<_>>()
            .map(ReportData::Iqa),
        "cv-summary" => {
            let mut folds = Vec::new();
            for r in results {
                match r {
                    Results::CvSummary { folds: f, .. } => {
                        for m in f {
                            folds.push(classification_report(m, averaging)?);
                        }
                    }
                    other => return Err(mismatch(other)),
                }
            }
            Ok(ReportData::CvSummary(folds))
        }
        _ => Err(Error::Usage(format!(
            "unknown report kind '{kind}' (classification, iqa, cv-summary)"
        ))),
    }
}

pub fn report(args: &ReportArgs, cfg: &PipelineConfig) -> Result<()> {
    let results = args.inputs.iter().map(|p| Results::read(p)).collect::<Result<Vec<_>>>()?;
    let data = render(&results, &args.kind, args.averaging.unwrap_or(cfg.averaging))?;
    emit_report(&data, &args.out)
}
