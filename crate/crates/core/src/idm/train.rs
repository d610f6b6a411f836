use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FramePairSample, IdmArch, IdmError, IdmModel, LossConfig};
use crate::nnet::{adam_step, AdamWConfig, LrSchedule, NnetError, OptimState, Parameterized};
use crate::world::{Bounds, ObservationLayout};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Fraction of all optimizer steps spent in linear warmup.
    pub warmup_fraction: f64,
    /// Learning-rate multiplier for the shared encoder.
    pub encoder_lr_mult: f64,
    pub optimizer: AdamWConfig,
    pub loss: LossConfig,
    pub arch: IdmArch,
    /// Record a curve point every this many steps.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            batch_size: 32,
            base_lr: 2e-3,
            warmup_fraction: 0.1,
            encoder_lr_mult: 1.0,
            optimizer: AdamWConfig::default(),
            loss: LossConfig::default(),
            arch: IdmArch::default(),
            log_every: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub loss: f64,
    pub action_loss: f64,
    pub gate_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub points: Vec<CurvePoint>,
}

impl TrainLog {
    /// Mean of `f` over the first (`first = true`) or last `frac` of points.
    pub fn window_mean(&self, frac: f64, first: bool, f: impl Fn(&CurvePoint) -> f64) -> f64 {
        let n = ((self.points.len() as f64 * frac).ceil() as usize).clamp(1, self.points.len().max(1));
        let window = if first {
            &self.points[..n.min(self.points.len())]
        } else {
            &self.points[self.points.len().saturating_sub(n)..]
        };
        window.iter().map(f).sum::<f64>() / window.len().max(1) as f64
    }
}

/// Mini-batch AdamW training with a warmup + cosine schedule. The seed fixes
/// the initialization and every epoch's shuffle.
pub fn train(
    dataset: &[FramePairSample],
    layout: ObservationLayout,
    workspace: Bounds,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(IdmModel, TrainLog), IdmError> {
    if dataset.is_empty() {
        return Err(IdmError::EmptyDataset);
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(IdmError::Config("batch_size and epochs must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.warmup_fraction) {
        return Err(IdmError::Config("warmup_fraction must be in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = IdmModel::new(layout, workspace, &cfg.arch, &mut rng)?;

    let per_epoch = dataset.len().div_ceil(cfg.batch_size);
    let total = (per_epoch * cfg.epochs) as u64;
    let warmup = (total as f64 * cfg.warmup_fraction).floor() as u64;
    let schedule = LrSchedule::new(cfg.base_lr, warmup, total.max(warmup + 1))?;
    let sizes = model.tensor_sizes();
    let encoder_tensors = model.encoder.param_slices().len();
    let mut opt = OptimState::new(cfg.optimizer, &sizes);

    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut step = 0u64;
    let mut acc = (0.0, 0.0, 0.0, 0usize);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = idx.iter().map(|&i| &dataset[i]).collect();
            let (loss, grads) = model.total_loss(&batch, &cfg.loss)?;
            if !loss.total.is_finite() {
                return Err(NnetError::Diverged(format!("loss is {} at step {step}", loss.total)).into());
            }
            let lr = schedule.lr_at(step);
            let rates: Vec<f64> = (0..sizes.len())
                .map(|t| if t < encoder_tensors { lr * cfg.encoder_lr_mult } else { lr })
                .collect();
            let g = grads.param_slices();
            adam_step(&mut model.param_slices_mut(), &g, &mut opt, &rates)?;

            acc.0 += loss.total;
            acc.1 += loss.action;
            acc.2 += loss.gate;
            acc.3 += 1;
            step += 1;
            if acc.3 == cfg.log_every.max(1) || step == total {
                let n = acc.3 as f64;
                log.points.push(CurvePoint {
                    step,
                    loss: acc.0 / n,
                    action_loss: acc.1 / n,
                    gate_loss: acc.2 / n,
                    lr,
                });
                acc = (0.0, 0.0, 0.0, 0);
            }
        }
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idm::tests::random_sample;

    fn tiny_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            base_lr: 1e-2,
            arch: IdmArch {
                encoder_hidden: vec![16],
                head_hidden: 16,
            },
            log_every: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn single_sample_is_memorized() {
        let layout = ObservationLayout::new(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = vec![random_sample(&layout, &mut rng)];
        let (model, log) = train(&data, layout, Bounds::default(), &tiny_cfg(600), 0).unwrap();
        let refs: Vec<_> = data.iter().collect();
        let (l, _) = model.total_loss(&refs, &LossConfig::default()).unwrap();
        assert!(l.action < 1e-4, "action loss {}", l.action);
        assert_eq!(log.points.len(), 600);
        assert_eq!(log.points[0].lr, 0.0);
    }

    #[test]
    fn same_seed_same_weights() {
        let layout = ObservationLayout::new(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<_> = (0..20).map(|_| random_sample(&layout, &mut rng)).collect();
        let a = train(&data, layout, Bounds::default(), &tiny_cfg(3), 9).unwrap();
        let b = train(&data, layout, Bounds::default(), &tiny_cfg(3), 9).unwrap();
        assert_eq!(a, b);
        let c = train(&data, layout, Bounds::default(), &tiny_cfg(3), 10).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let r = train(&[], ObservationLayout::new(1, 1), Bounds::default(), &tiny_cfg(1), 0);
        assert!(matches!(r, Err(IdmError::EmptyDataset)));
    }
}
