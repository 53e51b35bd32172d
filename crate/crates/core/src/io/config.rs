//! Flat `key = value` configuration file.
//!
//! Blank lines and lines starting with `#` are ignored. Keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `seed`, `threads` | master seed, worker threads |
//! | `input_size` | square model input (64, 128 or 224) |
//! | `iqa.preset` | `tiny` or `small` |
//! | `classifier.preset` | `mobile` or `large` |
//! | `{iqa,classifier}.lr` | initial learning rate |
//! | `{iqa,classifier}.decay_factor` | step-decay multiplier |
//! | `{iqa,classifier}.decay_period` | epochs per decay step |
//! | `{iqa,classifier}.decay_mode` | `repeated` or `one-shot` |
//! | `{iqa,classifier}.batch_size`, `.max_epochs`, `.patience` | loop limits |
//! | `{iqa,classifier}.patience_metric` | `val_loss` or `val_accuracy` |
//! | `classifier.holdout_fraction` | share of each class held out for early stopping |
//! | `augment.flip_horizontal`, `augment.flip_vertical` | `true` / `false` |
//! | `augment.rotation_min`, `augment.rotation_max` | degrees |
//! | `augment.scale_min`, `augment.scale_max` | per-axis scale factors |
//! | `augment.translate_min`, `augment.translate_max` | pixels |
//! | `augment.expansion` | augmented copies per training image |
//! | `gate.discard_fraction` | calibration quantile |
//! | `report.averaging` | `macro` or `micro` |
//! | `cv.folds` | number of cross-validation folds |

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::classifier::{ClassifierConfig, ClassifierPreset};
use crate::error::{Error, Result};
use crate::metrics::Averaging;
use crate::nn::{DecayMode, PatienceMetric, TrainConfig};
use crate::quality::{default_iqa_config, IqaPreset};

pub const KEYS: &[&str] = &[
    "seed",
    "threads",
    "input_size",
    "iqa.preset",
    "iqa.lr",
    "iqa.decay_factor",
    "iqa.decay_period",
    "iqa.decay_mode",
    "iqa.batch_size",
    "iqa.max_epochs",
    "iqa.patience",
    "iqa.patience_metric",
    "classifier.preset",
    "classifier.lr",
    "classifier.decay_factor",
    "classifier.decay_period",
    "classifier.decay_mode",
    "classifier.batch_size",
    "classifier.max_epochs",
    "classifier.patience",
    "classifier.patience_metric",
    "classifier.holdout_fraction",
    "augment.flip_horizontal",
    "augment.flip_vertical",
    "augment.rotation_min",
    "augment.rotation_max",
    "augment.scale_min",
    "augment.scale_max",
    "augment.translate_min",
    "augment.translate_max",
    "augment.expansion",
    "gate.discard_fraction",
    "report.averaging",
    "cv.folds",
];

/// Raw key/value pairs from a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("config line {}: expected 'key = value'", n + 1)))?;
            let key = k.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Usage(format!("config line {}: unknown key '{key}'", n + 1)));
            }
            if values.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Usage(format!("config line {}: duplicate key '{key}'", n + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Usage(format!("config key '{key}': cannot parse '{v}'")))
            })
            .transpose()
    }

    fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.typed(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn apply_train(&self, prefix: &str, cfg: &mut TrainConfig) -> Result<()> {
        let k = |name: &str| format!("{prefix}.{name}");
        self.set(&k("lr"), &mut cfg.schedule.initial_lr)?;
        self.set(&k("decay_factor"), &mut cfg.schedule.decay_factor)?;
        self.set(&k("decay_period"), &mut cfg.schedule.decay_period_epochs)?;
        if let Some(m) = self.get(&k("decay_mode")) {
            cfg.schedule.mode = match m {
                "repeated" => DecayMode::Repeated,
                "one-shot" => DecayMode::OneShot,
                _ => return Err(Error::Usage(format!("{}: unknown decay mode '{m}'", k("decay_mode")))),
            };
        }
        self.set(&k("batch_size"), &mut cfg.batch_size)?;
        self.set(&k("max_epochs"), &mut cfg.max_epochs)?;
        self.set(&k("patience"), &mut cfg.patience)?;
        if let Some(m) = self.get(&k("patience_metric")) {
            cfg.patience_metric = match m {
                "val_loss" => PatienceMetric::ValidationLoss,
                "val_accuracy" => PatienceMetric::ValidationAccuracy,
                _ => return Err(Error::Usage(format!("{}: unknown metric '{m}'", k("patience_metric")))),
            };
        }
        Ok(())
    }
}

/// Every tunable of the pipeline, with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub threads: usize,
    pub input_size: usize,
    pub iqa_preset: IqaPreset,
    pub iqa_train: TrainConfig,
    pub classifier_preset: ClassifierPreset,
    pub classifier: ClassifierConfig,
    pub discard_fraction: f64,
    pub averaging: Averaging,
    pub folds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 1,
            input_size: 64,
            iqa_preset: IqaPreset::Tiny,
            iqa_train: default_iqa_config(),
            classifier_preset: ClassifierPreset::Mobile,
            classifier: ClassifierConfig::for_preset(ClassifierPreset::Mobile),
            discard_fraction: 41.0 / 227.0,
            averaging: Averaging::Macro,
            folds: 10,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(file: &ConfigFile) -> Result<Self> {
        let mut cfg = Self::default();
        file.set("seed", &mut cfg.seed)?;
        file.set("threads", &mut cfg.threads)?;
        file.set("input_size", &mut cfg.input_size)?;
        file.set("iqa.preset", &mut cfg.iqa_preset)?;
        file.set("classifier.preset", &mut cfg.classifier_preset)?;
        // Preset-dependent defaults (batch size) come first, explicit keys override.
        cfg.classifier = ClassifierConfig::for_preset(cfg.classifier_preset);
        file.apply_train("iqa", &mut cfg.iqa_train)?;
        file.apply_train("classifier", &mut cfg.classifier.train)?;
        file.set("classifier.holdout_fraction", &mut cfg.classifier.holdout_fraction)?;
        let aug = &mut cfg.classifier.augment;
        file.set("augment.flip_horizontal", &mut aug.flip_h_enabled)?;
        file.set("augment.flip_vertical", &mut aug.flip_v_enabled)?;
        file.set("augment.rotation_min", &mut aug.rotation_deg.lo)?;
        file.set("augment.rotation_max", &mut aug.rotation_deg.hi)?;
        file.set("augment.scale_min", &mut aug.scale.lo)?;
        file.set("augment.scale_max", &mut aug.scale.hi)?;
        file.set("augment.translate_min", &mut aug.translate_px.lo)?;
        file.set("augment.translate_max", &mut aug.translate_px.hi)?;
        file.set("augment.expansion", &mut cfg.classifier.expansion)?;
        file.set("gate.discard_fraction", &mut cfg.discard_fraction)?;
        file.set("report.averaging", &mut cfg.averaging)?;
        file.set("cv.folds", &mut cfg.folds)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Usage(m),
            other => other,
        };
        crate::quality::check_input_size(self.input_size).map_err(usage)?;
        self.iqa_train.validate().map_err(usage)?;
        self.classifier.validate().map_err(usage)?;
        if self.threads == 0 {
            return Err(Error::Usage("threads must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.discard_fraction) {
            return Err(Error::Usage("gate.discard_fraction must be in [0, 1)".into()));
        }
        if self.folds < 2 {
            return Err(Error::Usage("cv.folds must be >= 2".into()));
        }
        Ok(())
    }
}
