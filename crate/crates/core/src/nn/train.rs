//! Mini-batch training loop with step-decayed Adam and patience-based early stopping.

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{cross_entropy_loss, mse_loss};
use super::network::{Mode, Network};
use super::optim::{adam_step, AdamState, LrSchedule};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatienceMetric {
    ValidationLoss,
    ValidationAccuracy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub patience_metric: PatienceMetric,
    pub shuffle_seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidArgument(
                "max_epochs and patience must be positive".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidArgument(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Scores(Vec<f32>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Scores(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// In-memory supervised set; every input has the network's per-sample shape.
#[derive(Debug, Clone)]
pub struct Dataset<T: Scalar = f32> {
    pub inputs: Vec<Tensor<T>>,
    pub targets: Targets,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Vec<Tensor<T>>, targets: Targets) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Data(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> Result<(Tensor<T>, Targets)> {
        let refs: Vec<&Tensor<T>> = idx.iter().map(|&i| &self.inputs[i]).collect();
        let x = Tensor::stack(&refs)?;
        let t = match &self.targets {
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
            Targets::Scores(s) => Targets::Scores(idx.iter().map(|&i| s[i]).collect()),
        };
        Ok((x, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    MeanSquared,
}

fn loss_and_grad<T: Scalar>(kind: LossKind, out: &Tensor<T>, targets: &Targets) -> Result<(f64, Tensor<T>)> {
    match (kind, targets) {
        (LossKind::CrossEntropy, Targets::Classes(labels)) => cross_entropy_loss(out, labels),
        (LossKind::MeanSquared, Targets::Scores(s)) => {
            let t = Tensor::new(
                out.shape().to_vec(),
                s.iter().map(|&v| T::from_f64_lossy(v as f64)).collect(),
            )?;
            mse_loss(out, &t)
        }
        _ => Err(Error::Usage("loss kind does not match target kind".into())),
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_metric: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

/// Tracks the best validation metric and counts consecutive non-improving epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    higher_is_better: bool,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, metric: PatienceMetric) -> Self {
        Self {
            patience,
            higher_is_better: metric == PatienceMetric::ValidationAccuracy,
            best: None,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> Observation {
        let improved = match self.best {
            None => true,
            Some(b) if self.higher_is_better => metric > b,
            Some(b) => metric < b,
        };
        if improved {
            self.best = Some(metric);
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Observation {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T: Scalar = f32> {
    /// Snapshot from the best validation epoch, in inference mode.
    pub network: Network<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Validation loss and (for classification) accuracy, computed in inference mode.
pub fn evaluate<T: Scalar>(
    network: &Network<T>,
    data: &Dataset<T>,
    loss: LossKind,
    batch_size: usize,
) -> Result<(f64, Option<f64>)> {
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, t) = data.batch(chunk)?;
        let out = network.infer(&x)?;
        let (l, _) = loss_and_grad(loss, &out, &t)?;
        total_loss += l * chunk.len() as f64;
        if let Targets::Classes(labels) = &t {
            let k = out.shape()[1];
            correct += out
                .data()
                .chunks(k)
                .zip(labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
        }
    }
    let n = data.len() as f64;
    let acc = matches!(data.targets, Targets::Classes(_)).then(|| correct as f64 / n);
    Ok((total_loss / n, acc))
}

/// Mini-batch partition of a shuffled order; a trailing single sample is
/// merged into the previous batch so batch statistics stay defined.
fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if out.len() > 1 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

pub fn fit<T: Scalar>(
    mut network: Network<T>,
    train: &Dataset<T>,
    val: &Dataset<T>,
    config: &TrainConfig,
    loss: LossKind,
) -> Result<FitOutcome<T>> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation sets must be non-empty".into()));
    }
    if config.batch_size > train.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {} exceeds training set size {}",
            config.batch_size,
            train.len()
        )));
    }
    if config.patience_metric == PatienceMetric::ValidationAccuracy
        && !matches!(val.targets, Targets::Classes(_))
    {
        return Err(Error::Usage("validation accuracy needs class targets".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut adam = AdamState::new(network.params());
    let mut stopper = EarlyStopping::new(config.patience, config.patience_metric);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best = network.clone();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let lr = config.schedule.lr_at_epoch(epoch - 1);
        order.shuffle(&mut rng);
        network.set_mode(Mode::Training);
        let mut loss_sum = 0.0;
        for chunk in batches(&order, config.batch_size) {
            let (x, t) = train.batch(chunk)?;
            let (out, cache) = network.forward(&x)?;
            let (l, grad) = loss_and_grad(loss, &out, &t)?;
            if !l.is_finite() {
                return Err(Error::Data(format!("non-finite training loss at epoch {epoch}")));
            }
            loss_sum += l * chunk.len() as f64;
            let grads = network.backward(&cache, &grad)?;
            adam_step(network.params_mut(), &grads.params, &mut adam, lr)?;
        }
        network.set_mode(Mode::Inference);
        let (val_loss, val_accuracy) = evaluate(&network, val, loss, config.batch_size)?;
        let val_metric = match config.patience_metric {
            PatienceMetric::ValidationLoss => val_loss,
            PatienceMetric::ValidationAccuracy => val_accuracy.unwrap_or(0.0),
        };
        let obs = stopper.observe(epoch, val_metric);
        if obs.improved {
            best = network.clone();
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_accuracy,
            val_metric,
            improved: obs.improved,
        };
        debug!("{record:?}");
        history.push(record);
        if obs.stop {
            stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    best.set_mode(Mode::Inference);
    Ok(FitOutcome {
        network: best,
        history,
        best_epoch: stopper.best_epoch(),
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_three_stops_at_epoch_four() {
        let mut es = EarlyStopping::new(3, PatienceMetric::ValidationLoss);
        let metrics = [1.0, 1.1, 1.2, 1.3, 1.4, 1.5];
        let mut stopped = None;
        for (i, &m) in metrics.iter().enumerate() {
            if es.observe(i + 1, m).stop {
                stopped = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(4));
        assert_eq!(es.best_epoch(), 1);
    }

    #[test]
    fn accuracy_metric_is_maximized() {
        let mut es = EarlyStopping::new(2, PatienceMetric::ValidationAccuracy);
        assert!(es.observe(1, 0.5).improved);
        assert!(es.observe(2, 0.7).improved);
        assert!(!es.observe(3, 0.7).improved);
        assert!(es.observe(4, 0.6).stop);
        assert_eq!(es.best(), Some(0.7));
    }

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.len(), 2);
        assert_eq!(b[1].len(), 5);
        assert_eq!(batches(&order, 3).len(), 3);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig {
            schedule: LrSchedule::step_decay(1e-2, 0.5, 15),
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            patience_metric: PatienceMetric::ValidationLoss,
            shuffle_seed: 0,
        };
        assert!(c.validate().is_ok());
        c.patience = 101;
        assert!(c.validate().is_err());
        c.patience = 10;
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.1f32, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.2f32, 0.2]), 0);
    }
}
