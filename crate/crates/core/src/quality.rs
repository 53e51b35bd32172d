//! No-reference quality regressor and the pass/discard gate in front of the classifier.

use log::warn;

use crate::backbone::{backbone, BlockSpec};
use crate::error::{Error, Result};
use crate::imaging::{preprocess, to_input_tensor, to_sample_tensor, ImagePlanar};
use crate::nn::{
    fit, Activation, Dataset, EpochRecord, LayerSpec, LossKind, LrSchedule, Mode, Network,
    PatienceMetric, Targets, TrainConfig,
};

pub const SUPPORTED_INPUT_SIZES: [usize; 3] = [64, 128, 224];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IqaPreset {
    Tiny,
    Small,
}

impl IqaPreset {
    pub fn as_str(self) -> &'static str {
        match self {
            IqaPreset::Tiny => "tiny",
            IqaPreset::Small => "small",
        }
    }
}

impl std::str::FromStr for IqaPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(IqaPreset::Tiny),
            "small" => Ok(IqaPreset::Small),
            _ => Err(Error::InvalidArgument(format!("unknown IQA preset '{s}'"))),
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

/// Backbone, global average pooling, then a two-layer regression head.
pub fn iqa_layers(preset: IqaPreset) -> Vec<LayerSpec> {
    let (stem, blocks, head, hidden) = match preset {
        IqaPreset::Tiny => (8, vec![block(16, 2), block(24, 2)], 48, 16),
        IqaPreset::Small => (
            16,
            vec![block(24, 2), block(32, 2), block(48, 2)],
            96,
            32,
        ),
    };
    let mut layers = backbone(stem, &blocks, head);
    layers.extend([
        LayerSpec::GlobalAvgPool,
        LayerSpec::Dense {
            in_dim: head,
            out_dim: hidden,
        },
        LayerSpec::Activation(Activation::Swish),
        LayerSpec::Dense {
            in_dim: hidden,
            out_dim: 1,
        },
    ]);
    layers
}

#[derive(Debug, Clone)]
pub struct IqaModel {
    pub network: Network,
    pub preset: String,
    pub input_size: usize,
}

pub fn check_input_size(input_size: usize) -> Result<()> {
    if SUPPORTED_INPUT_SIZES.contains(&input_size) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "unsupported input size {input_size}; expected one of {SUPPORTED_INPUT_SIZES:?}"
        )))
    }
}

pub fn build_iqa_model(preset: IqaPreset, input_size: usize, seed: u64) -> Result<IqaModel> {
    check_input_size(input_size)?;
    let network = Network::new(iqa_layers(preset), &[3, input_size, input_size], seed)?;
    Ok(IqaModel {
        network,
        preset: preset.as_str().to_string(),
        input_size,
    })
}

/// Adam at 1e-2 halved every 15 epochs, at most 100 epochs of 32-image
/// shuffled batches, stopping after 10 epochs without validation-loss improvement.
pub fn default_iqa_config() -> TrainConfig {
    TrainConfig {
        schedule: LrSchedule::step_decay(1e-2, 0.5, 15),
        batch_size: 32,
        max_epochs: 100,
        patience: 10,
        patience_metric: PatienceMetric::ValidationLoss,
        shuffle_seed: 0,
    }
}

#[derive(Debug, Clone)]
pub struct QualitySample {
    pub image: ImagePlanar,
    /// Mean opinion score normalized to `[0, 1]`.
    pub mos: Option<f32>,
}

#[derive(Debug, Clone)]
pub struct IqaTraining {
    pub model: IqaModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
}

fn quality_dataset(samples: &[QualitySample], size: usize, what: &str) -> Result<Dataset> {
    let mut inputs = Vec::with_capacity(samples.len());
    let mut scores = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let mos = s
            .mos
            .ok_or_else(|| Error::Data(format!("{what} sample {i} has no MOS label")))?;
        if !(0.0..=1.0).contains(&mos) {
            return Err(Error::Data(format!("{what} sample {i}: MOS {mos} outside [0, 1]")));
        }
        inputs.push(to_sample_tensor(&preprocess(&s.image, size)?));
        scores.push(mos);
    }
    Dataset::new(inputs, Targets::Scores(scores))
}

/// Fits the regressor with mean-squared error and returns the best-validation snapshot.
pub fn train_iqa(
    model: IqaModel,
    train: &[QualitySample],
    val: &[QualitySample],
    config: &TrainConfig,
) -> Result<IqaTraining> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("IQA training needs non-empty train and validation sets".into()));
    }
    let train_set = quality_dataset(train, model.input_size, "train")?;
    let val_set = quality_dataset(val, model.input_size, "validation")?;
    let mut warnings = Vec::new();
    if let Targets::Scores(s) = &train_set.targets {
        if s.iter().all(|&v| v == s[0]) {
            let msg = format!("all training MOS values equal {}; quality cannot be learned", s[0]);
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let mut config = config.clone();
    if config.batch_size > train.len() {
        let msg = format!("batch size {} reduced to the {} training samples", config.batch_size, train.len());
        warn!("{msg}");
        warnings.push(msg);
        config.batch_size = train.len();
    }
    let outcome = fit(model.network, &train_set, &val_set, &config, LossKind::MeanSquared)?;
    Ok(IqaTraining {
        model: IqaModel {
            network: outcome.network,
            preset: model.preset,
            input_size: model.input_size,
        },
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        warnings,
    })
}

/// Clamps a raw regressor output into `[0, 1]`; NaN maps to 0.
pub fn clamp_score(raw: f32) -> f32 {
    if raw > 0.0 {
        raw.min(1.0)
    } else {
        0.0
    }
}

/// Scores an image that already went through [`preprocess`] at any size.
pub fn score_preprocessed(model: &IqaModel, image: &ImagePlanar) -> Result<f32> {
    let sized = crate::imaging::resize_bilinear(image, model.input_size, model.input_size)?;
    let out = if model.network.mode() == Mode::Inference {
        model.network.infer(&to_input_tensor(&sized))?
    } else {
        let mut net = model.network.clone();
        net.set_mode(Mode::Inference);
        net.infer(&to_input_tensor(&sized))?
    };
    Ok(clamp_score(out.data()[0]))
}

pub fn score_quality(model: &IqaModel, image: &ImagePlanar) -> Result<f32> {
    score_preprocessed(model, &preprocess(image, model.input_size)?)
}

/// Threshold that leaves exactly `⌊q·N⌋` scores strictly below it: the
/// midpoint between the last discarded and first kept score. When those two
/// are tied, the tie passes and fewer items are discarded.
pub fn calibrate_threshold(scores: &[f32], discard_fraction: f64) -> Result<f32> {
    if !(0.0..1.0).contains(&discard_fraction) {
        return Err(Error::InvalidArgument(format!(
            "discard fraction {discard_fraction} outside [0, 1)"
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no scores to calibrate on".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f32::total_cmp);
    // Guards q·N landing a hair below an integer, e.g. (41/227)·227.
    let discard = (discard_fraction * sorted.len() as f64 + 1e-9).floor() as usize;
    if discard == 0 {
        return Ok(sorted[0]);
    }
    let (below, above) = (sorted[discard - 1], sorted[discard]);
    if below == above {
        return Ok(above);
    }
    let mid = below + (above - below) / 2.0;
    // Keep the midpoint strictly above `below` under f32 rounding.
    Ok(if mid > below { mid } else { above })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    pub score: f32,
    pub threshold: f32,
    pub passed: bool,
}

pub fn gate(score: f32, threshold: f32) -> GateDecision {
    GateDecision {
        score,
        threshold,
        passed: score >= threshold,
    }
}
