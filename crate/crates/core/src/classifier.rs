//! Disease classifier: presets, holdout training, prediction and stratified k-fold.

use std::collections::BTreeMap;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::{augment_batch, item_seed, AugmentConfig, AugmentParams};
use crate::backbone::{backbone, BlockSpec};
use crate::error::{Error, Result};
use crate::imaging::{preprocess, resize_bilinear, to_input_tensor, to_sample_tensor, ImagePlanar};
use crate::metrics::{classification_report, confusion_matrix, Averaging, ClassificationReport, ConfusionMatrix};
use crate::nn::{
    argmax, fit, Dataset, EpochRecord, LayerSpec, LossKind, LrSchedule, Mode, Network,
    PatienceMetric, Targets, TrainConfig,
};
use crate::quality::check_input_size;
use crate::registry::LabelRegistry;

/// Smallest per-class count that still allows a stratified holdout.
pub const MIN_SAMPLES_PER_CLASS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierPreset {
    Mobile,
    Large,
}

impl ClassifierPreset {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierPreset::Mobile => "mobile",
            ClassifierPreset::Large => "large",
        }
    }
}

impl std::str::FromStr for ClassifierPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mobile" => Ok(ClassifierPreset::Mobile),
            "large" => Ok(ClassifierPreset::Large),
            _ => Err(Error::InvalidArgument(format!("unknown classifier preset '{s}'"))),
        }
    }
}

fn block(out_ch: usize, stride: usize) -> BlockSpec {
    BlockSpec {
        out_ch,
        expand: 2,
        kernel: 3,
        stride,
        se_reduction: 4,
    }
}

/// Backbone, global max pooling, dense projection to `num_classes`, softmax.
pub fn classifier_layers(preset: ClassifierPreset, num_classes: usize) -> Vec<LayerSpec> {
    let (stem, blocks, head) = match preset {
        ClassifierPreset::Mobile => (16, vec![block(24, 2), block(32, 2)], 64),
        ClassifierPreset::Large => (
            16,
            vec![block(32, 2), block(32, 1), block(48, 2), block(48, 1)],
            96,
        ),
    };
    let mut layers = backbone(stem, &blocks, head);
    layers.extend([
        LayerSpec::GlobalMaxPool,
        LayerSpec::Dense {
            in_dim: head,
            out_dim: num_classes,
        },
        LayerSpec::Softmax,
    ]);
    layers
}

#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub network: Network,
    pub preset: String,
    pub input_size: usize,
    pub registry: LabelRegistry,
}

pub fn build_classifier(
    preset: ClassifierPreset,
    registry: LabelRegistry,
    input_size: usize,
    seed: u64,
) -> Result<ClassifierModel> {
    check_input_size(input_size)?;
    if registry.len() < 2 {
        return Err(Error::InvalidArgument("a classifier needs at least two classes".into()));
    }
    let network = Network::new(
        classifier_layers(preset, registry.len()),
        &[3, input_size, input_size],
        seed,
    )?;
    Ok(ClassifierModel {
        network,
        preset: preset.as_str().to_string(),
        input_size,
        registry,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub train: TrainConfig,
    pub holdout_fraction: f64,
    pub augment: AugmentConfig,
    /// Augmented copies per training image; see [`augment_batch`].
    pub expansion: usize,
    pub augment_seed: u64,
    pub split_seed: u64,
}

impl ClassifierConfig {
    /// Adam at 3e-3 halved every 20 epochs, batches of 32 (16 for the large
    /// preset), stopping after 3 epochs without holdout-accuracy improvement.
    pub fn for_preset(preset: ClassifierPreset) -> Self {
        Self {
            train: TrainConfig {
                schedule: LrSchedule::step_decay(3e-3, 0.5, 20),
                batch_size: match preset {
                    ClassifierPreset::Mobile => 32,
                    ClassifierPreset::Large => 16,
                },
                max_epochs: 60,
                patience: 3,
                patience_metric: PatienceMetric::ValidationAccuracy,
                shuffle_seed: 0,
            },
            holdout_fraction: 0.2,
            augment: AugmentConfig::default(),
            expansion: 2,
            augment_seed: 0,
            split_seed: 0,
        }
    }

    /// Derives every internal seed from one master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.shuffle_seed = item_seed(seed, 0, 0);
        self.augment_seed = item_seed(seed, 1, 0);
        self.split_seed = item_seed(seed, 2, 0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.augment.validate()?;
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "holdout fraction {} outside (0, 1)",
                self.holdout_fraction
            )));
        }
        if self.expansion == 0 {
            return Err(Error::InvalidArgument("expansion factor must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image: ImagePlanar,
    pub label: usize,
}

/// Which input images each phase touched, by index into the training slice.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub train_indices: Vec<usize>,
    pub holdout_indices: Vec<usize>,
    /// Source index and parameters of every augmented training copy.
    pub augmented: Vec<(usize, AugmentParams)>,
}

#[derive(Debug, Clone)]
pub struct ClassifierTraining {
    pub model: ClassifierModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub log: TrainingLog,
    pub warnings: Vec<String>,
}

fn class_members(labels: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members
            .get_mut(l)
            .ok_or_else(|| Error::Index(format!("label {l} at sample {i} with {k} classes")))?
            .push(i);
    }
    Ok(members)
}

/// Splits per class into `(train, holdout)` with `round(fraction·n_c)`
/// (at least one) holdout items from every class.
pub fn stratified_holdout(
    labels: &[usize],
    num_classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for (class, mut members) in class_members(labels, num_classes)?.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < MIN_SAMPLES_PER_CLASS {
            return Err(Error::Data(format!(
                "class {class} has {} samples; stratification needs at least {MIN_SAMPLES_PER_CLASS}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n_hold = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        holdout.extend_from_slice(&members[..n_hold]);
        train.extend_from_slice(&members[n_hold..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    Ok((train, holdout))
}

/// Trains on `samples` after carving out a stratified holdout used only for
/// early stopping. Augmentation touches the training split only.
pub fn train_classifier(
    model: ClassifierModel,
    samples: &[LabeledImage],
    config: &ClassifierConfig,
) -> Result<ClassifierTraining> {
    config.validate()?;
    let k = model.registry.len();
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let members = class_members(&labels, k)?;
    let mut warnings = Vec::new();
    for (c, m) in members.iter().enumerate() {
        if m.is_empty() {
            let msg = format!(
                "class '{}' has no training samples",
                model.registry.class(c).unwrap_or_default()
            );
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let (train_idx, holdout_idx) =
        stratified_holdout(&labels, k, config.holdout_fraction, config.split_seed)?;

    let size = model.input_size;
    let prepared: Vec<Option<ImagePlanar>> = {
        let mut need = vec![false; samples.len()];
        train_idx.iter().chain(&holdout_idx).for_each(|&i| need[i] = true);
        samples
            .par_iter()
            .zip(need)
            .map(|(s, n)| n.then(|| preprocess(&s.image, size)).transpose())
            .collect::<Result<_>>()?
    };
    let take = |i: usize| prepared[i].clone().expect("prepared above");

    let train_images: Vec<ImagePlanar> = train_idx.iter().map(|&i| take(i)).collect();
    let augmented = augment_batch(&train_images, &config.augment, config.augment_seed, config.expansion)?;
    let mut log = TrainingLog {
        train_indices: train_idx.clone(),
        holdout_indices: holdout_idx.clone(),
        augmented: Vec::new(),
    };
    let mut inputs = Vec::with_capacity(augmented.len());
    let mut targets = Vec::with_capacity(augmented.len());
    for a in &augmented {
        let src = train_idx[a.source_index];
        if let Some(p) = a.params {
            log.augmented.push((src, p));
        }
        inputs.push(to_sample_tensor(&a.image));
        targets.push(labels[src]);
    }
    let train_set = Dataset::new(inputs, Targets::Classes(targets))?;
    let val_set = Dataset::new(
        holdout_idx.iter().map(|&i| to_sample_tensor(&take(i))).collect(),
        Targets::Classes(holdout_idx.iter().map(|&i| labels[i]).collect()),
    )?;
    drop(prepared);

    let mut train_cfg = config.train.clone();
    train_cfg.batch_size = train_cfg.batch_size.min(train_set.len());
    let outcome = fit(model.network, &train_set, &val_set, &train_cfg, LossKind::CrossEntropy)?;
    info!(
        "classifier trained {} epochs, best epoch {}",
        outcome.history.len(),
        outcome.best_epoch
    );
    Ok(ClassifierTraining {
        model: ClassifierModel {
            network: outcome.network,
            preset: model.preset,
            input_size: model.input_size,
            registry: model.registry,
        },
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        log,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub class_name: String,
    pub probabilities: Vec<f32>,
}

fn inference_network(model: &ClassifierModel) -> std::borrow::Cow<'_, Network> {
    if model.network.mode() == Mode::Inference {
        std::borrow::Cow::Borrowed(&model.network)
    } else {
        let mut net = model.network.clone();
        net.set_mode(Mode::Inference);
        std::borrow::Cow::Owned(net)
    }
}

/// Classifies images that already went through [`preprocess`]; batched inference.
pub fn predict_preprocessed(model: &ClassifierModel, images: &[ImagePlanar]) -> Result<Vec<Prediction>> {
    let net = inference_network(model);
    let k = model.registry.len();
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(32) {
        let tensors = chunk
            .iter()
            .map(|img| resize_bilinear(img, model.input_size, model.input_size).map(|r| to_sample_tensor(&r)))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<_> = tensors.iter().collect();
        let probs = net.infer(&crate::tensor::Tensor::stack(&refs)?)?;
        for row in probs.data().chunks(k) {
            let class_index = argmax(row);
            out.push(Prediction {
                class_index,
                class_name: model.registry.class(class_index).unwrap_or_default().to_string(),
                probabilities: row.to_vec(),
            });
        }
    }
    Ok(out)
}

pub fn predict(model: &ClassifierModel, image: &ImagePlanar) -> Result<Prediction> {
    let pre = preprocess(image, model.input_size)?;
    let net = inference_network(model);
    let probs = net.infer(&to_input_tensor(&pre))?;
    let class_index = argmax(probs.data());
    Ok(Prediction {
        class_index,
        class_name: model.registry.class(class_index).unwrap_or_default().to_string(),
        probabilities: probs.into_data(),
    })
}

/// Confusion matrix and report of `model` on labelled images.
pub fn evaluate_classifier(
    model: &ClassifierModel,
    samples: &[LabeledImage],
    averaging: Averaging,
) -> Result<(ConfusionMatrix, ClassificationReport)> {
    let pre = samples
        .par_iter()
        .map(|s| preprocess(&s.image, model.input_size))
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<usize> = predict_preprocessed(model, &pre)?
        .into_iter()
        .map(|p| p.class_index)
        .collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let cm = confusion_matrix(&preds, &labels, model.registry.len())?;
    let report = classification_report(&cm, averaging)?;
    Ok((cm, report))
}

/// Disjoint test folds covering every sample exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Indices of every fold except `fold`, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }
}

/// Shuffles each class, then deals its members round-robin onto the folds,
/// continuing the deal across classes so fold sizes differ by at most one.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    if k > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds {} samples",
            labels.len()
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { folds, seed })
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub matrix: ConfusionMatrix,
    pub report: ClassificationReport,
    pub history: Vec<EpochRecord>,
    /// Training log with indices mapped back into the full sample slice.
    pub log: TrainingLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub plan: FoldPlan,
    pub folds: Vec<FoldResult>,
    pub mean: MetricSummary,
    /// Sample standard deviation across folds.
    pub stddev: MetricSummary,
    pub averaging: Averaging,
}

fn summarize(reports: &[&ClassificationReport]) -> (MetricSummary, MetricSummary) {
    let n = reports.len() as f64;
    let stat = |f: &dyn Fn(&ClassificationReport) -> f64| {
        let mean = reports.iter().map(|r| f(r)).sum::<f64>() / n;
        let var = if reports.len() > 1 {
            reports.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean, var.sqrt())
    };
    let a = stat(&|r| r.accuracy);
    let p = stat(&|r| r.precision);
    let rc = stat(&|r| r.recall);
    let f = stat(&|r| r.f1);
    (
        MetricSummary {
            accuracy: a.0,
            precision: p.0,
            recall: rc.0,
            f1: f.0,
        },
        MetricSummary {
            accuracy: a.1,
            precision: p.1,
            recall: rc.1,
            f1: f.1,
        },
    )
}

/// Stratified k-fold evaluation: each fold trains a fresh model (with its
/// own holdout carved from the training folds) and is scored on its test fold.
/// Folds run on the current rayon pool.
pub fn cross_validate(
    preset: ClassifierPreset,
    registry: &LabelRegistry,
    samples: &[LabeledImage],
    input_size: usize,
    k: usize,
    config: &ClassifierConfig,
    seed: u64,
) -> Result<CrossValidation> {
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let plan = stratified_kfold(&labels, k, seed)?;
    let averaging = Averaging::default();
    let folds = (0..k)
        .into_par_iter()
        .map(|fold| {
            let run = || -> Result<FoldResult> {
                let train_idx = plan.train_indices(fold);
                let test_idx = plan.folds[fold].clone();
                let train: Vec<LabeledImage> = train_idx.iter().map(|&i| samples[i].clone()).collect();
                let test: Vec<LabeledImage> = test_idx.iter().map(|&i| samples[i].clone()).collect();
                let fold_seed = item_seed(seed, fold, 1);
                let model = build_classifier(preset, registry.clone(), input_size, fold_seed)?;
                let cfg = config.clone().with_seed(fold_seed);
                let trained = train_classifier(model, &train, &cfg)?;
                let (matrix, report) = evaluate_classifier(&trained.model, &test, averaging)?;
                info!("fold {}: accuracy {:.4}", fold + 1, report.accuracy);
                let map = |v: &[usize]| v.iter().map(|&i| train_idx[i]).collect::<Vec<_>>();
                let log = TrainingLog {
                    train_indices: map(&trained.log.train_indices),
                    holdout_indices: map(&trained.log.holdout_indices),
                    augmented: trained
                        .log
                        .augmented
                        .iter()
                        .map(|&(i, p)| (train_idx[i], p))
                        .collect(),
                };
                Ok(FoldResult {
                    fold,
                    test_indices: test_idx,
                    matrix,
                    report,
                    history: trained.history,
                    log,
                })
            };
            run().map_err(|e| Error::Fold {
                fold,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<&ClassificationReport> = folds.iter().map(|f| &f.report).collect();
    let (mean, stddev) = summarize(&reports);
    Ok(CrossValidation {
        plan,
        folds,
        mean,
        stddev,
        averaging,
    })
}
