use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Adam moment estimates mirroring a network's parameter nesting.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar = f32> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<Tensor<T>>>,
    second: Vec<Vec<Tensor<T>>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Vec<Tensor<T>>]) -> Self {
        Self::with_hyperparams(params, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON)
    }

    pub fn with_hyperparams(params: &[Vec<Tensor<T>>], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        assert!((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2));
        let zeros = || -> Vec<Vec<Tensor<T>>> {
            params
                .iter()
                .map(|l| l.iter().map(|t| Tensor::zeros(t.shape())).collect())
                .collect()
        };
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite or mis-shaped.
pub fn adam_step<T: Scalar>(
    params: &mut [Vec<Tensor<T>>],
    grads: &[Vec<Tensor<T>>],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {lr}")));
    }
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Shape("parameter, gradient and state layer counts differ".into()));
    }
    for (layer, (ps, gs)) in params.iter().zip(grads).enumerate() {
        if ps.len() != gs.len() {
            return Err(Error::Shape(format!("layer {layer}: gradient count differs")));
        }
        for (param, (p, g)) in ps.iter().zip(gs).enumerate() {
            if p.shape() != g.shape() || state.first[layer][param].shape() != p.shape() {
                return Err(Error::Shape(format!(
                    "layer {layer} parameter {param}: shape {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite { layer, param });
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (b1t, b2t) = (T::from_f64_lossy(b1), T::from_f64_lossy(b2));
    let (ob1, ob2) = (T::from_f64_lossy(1.0 - b1), T::from_f64_lossy(1.0 - b2));
    let (inv_c1, inv_c2) = (T::from_f64_lossy(1.0 / c1), T::from_f64_lossy(1.0 / c2));
    let (lr_t, eps) = (T::from_f64_lossy(lr), T::from_f64_lossy(state.epsilon));

    for (layer, (ps, gs)) in params.iter_mut().zip(grads).enumerate() {
        for (param, (p, g)) in ps.iter_mut().zip(gs).enumerate() {
            let m = state.first[layer][param].data_mut();
            let v = state.second[layer][param].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = b1t * *mv + ob1 * gv;
                *vv = b2t * *vv + ob2 * gv * gv;
                let m_hat = *mv * inv_c1;
                let v_hat = *vv * inv_c2;
                *pv = *pv - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayMode {
    /// Multiply by the factor every `decay_period_epochs`.
    Repeated,
    /// Multiply once after the first period.
    OneShot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub decay_period_epochs: usize,
    pub mode: DecayMode,
}

impl LrSchedule {
    pub fn step_decay(initial_lr: f64, decay_factor: f64, decay_period_epochs: usize) -> Self {
        Self {
            initial_lr,
            decay_factor,
            decay_period_epochs,
            mode: DecayMode::Repeated,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0) {
            return Err(Error::InvalidArgument("initial_lr must be > 0".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::InvalidArgument("decay_factor must be in (0, 1]".into()));
        }
        if self.decay_period_epochs == 0 {
            return Err(Error::InvalidArgument("decay_period_epochs must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate for a 0-based epoch index.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let periods = epoch / self.decay_period_epochs;
        let exponent = match self.mode {
            DecayMode::Repeated => periods,
            DecayMode::OneShot => periods.min(1),
        };
        self.initial_lr * self.decay_factor.powi(exponent as i32)
    }
}
