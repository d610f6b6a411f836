//! Small float64 feed-forward network toolkit: MLPs with exact reverse-mode
//! gradients, AdamW, a warmup + cosine learning-rate schedule, and
//! finite-difference gradient checking.

mod mlp;
mod optim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mlp::{Linear, Mlp, MlpGrads, Tape};
pub use optim::{adam_step, AdamWConfig, OptimState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnetError {
    #[error("input has {got} values, network expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
}

/// Anything whose trainable values can be viewed as a list of flat tensors.
/// The order of the slices is stable and shared between a model and its
/// gradients.
pub trait Parameterized {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn tensor_sizes(&self) -> Vec<usize> {
        self.param_slices().iter().map(|s| s.len()).collect()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }
}

/// Linear warmup from 0 to `base_lr`, then cosine decay to 0 at `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, warmup_steps: u64, total_steps: u64) -> Result<Self, NnetError> {
        if !(base_lr > 0.0) {
            return Err(NnetError::Schedule("base_lr must be > 0".into()));
        }
        if total_steps <= warmup_steps {
            return Err(NnetError::Schedule(format!(
                "total_steps ({total_steps}) must exceed warmup_steps ({warmup_steps})"
            )));
        }
        Ok(Self {
            base_lr,
            warmup_steps,
            total_steps,
        })
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * step as f64 / self.warmup_steps as f64;
        }
        let span = (self.total_steps - self.warmup_steps) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Central finite differences of `loss` with respect to every parameter of
/// `model`, in [`Parameterized::param_slices`] order. The model is restored
/// exactly after each probe.
pub fn central_differences<M, F>(model: &mut M, h: f64, loss: F) -> Vec<f64>
where
    M: Parameterized,
    F: Fn(&M) -> f64,
{
    let sizes = model.tensor_sizes();
    let mut out = Vec::with_capacity(sizes.iter().sum());
    for (t, &n) in sizes.iter().enumerate() {
        for j in 0..n {
            let orig = model.param_slices()[t][j];
            model.param_slices_mut()[t][j] = orig + h;
            let up = loss(model);
            model.param_slices_mut()[t][j] = orig - h;
            let down = loss(model);
            model.param_slices_mut()[t][j] = orig;
            out.push((up - down) / (2.0 * h));
        }
    }
    out
}

/// Below this magnitude gradients are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, RELATIVE_ERROR_FLOOR)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_ERROR_FLOOR))
        .fold(0.0, f64::max)
}
