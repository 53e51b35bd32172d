//! Feed-forward network engine with manual backward passes.

mod layer;
mod loss;
mod network;
pub(crate) mod ops;
mod optim;
mod train;

pub use layer::{Activation, LayerSpec, BN_EPSILON, BN_MOMENTUM};
pub use loss::{cross_entropy_loss, mse_loss, PROB_FLOOR};
pub use network::{ForwardCache, Gradients, Mode, Network};
pub use optim::{adam_step, AdamState, DecayMode, LrSchedule};
pub use train::{
    argmax, evaluate, fit, Dataset, EarlyStopping, EpochRecord, FitOutcome, LossKind, Observation,
    PatienceMetric, Targets, TrainConfig,
};
