use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FramePairSample, IdmArch, IdmError, IdmModel, LossConfig};
use crate::nnet::{central_differences, max_relative_error, Parameterized};
use crate::world::{Action, Bounds, Observation, ObservationLayout, Vec3};

/// Finite-difference step used by [`gradient_check`].
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Worst relative error between analytic and central-difference gradients
/// of the total loss, per model.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub per_model: Vec<f64>,
    pub params_per_model: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_model.iter().copied().fold(0.0, f64::max)
    }
}

fn random_sample<R: Rng>(layout: &ObservationLayout, rng: &mut R) -> FramePairSample {
    let mut obs = || Observation((0..layout.width()).map(|_| rng.random_range(0.0..1.0)).collect());
    let prev_obs = obs();
    let next = obs();
    FramePairSample {
        state: layout.robot_state(prev_obs.as_slice()),
        prev_obs,
        obs: next,
        action: Action::new(
            Vec3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)),
            rng.random_range(0.0..1.0),
        ),
        gate_label: rng.random_bool(0.5),
    }
}

/// Builds `models` randomly initialized models of architecture `arch` over
/// `layout`, each with its own random batch of `batch` samples, and compares
/// gradients of `total_loss` under `loss`.
pub fn gradient_check(
    seed: u64,
    models: usize,
    batch: usize,
    layout: ObservationLayout,
    arch: &IdmArch,
    loss: &LossConfig,
) -> Result<GradCheckReport, IdmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_model = Vec::with_capacity(models);
    let mut params = 0;
    for _ in 0..models {
        let mut model = IdmModel::new(layout, Bounds::default(), arch, &mut rng)?;
        let samples: Vec<FramePairSample> = (0..batch).map(|_| random_sample(&layout, &mut rng)).collect();
        let refs: Vec<&FramePairSample> = samples.iter().collect();
        let (_, grads) = model.total_loss(&refs, loss)?;
        let numeric = central_differences(&mut model, GRADCHECK_STEP, |m| {
            m.total_loss(&refs, loss).map(|(l, _)| l.total).unwrap_or(f64::NAN)
        });
        let analytic = grads.flat_params();
        params = analytic.len();
        per_model.push(max_relative_error(&analytic, &numeric));
    }
    Ok(GradCheckReport {
        per_model,
        params_per_model: params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_models_pass() {
        let arch = IdmArch {
            encoder_hidden: vec![6],
            head_hidden: 5,
        };
        let r = gradient_check(1, 2, 4, ObservationLayout::new(1, 1), &arch, &LossConfig::default()).unwrap();
        assert_eq!(r.per_model.len(), 2);
        assert!(r.max_rel_error() <= 1e-4, "{r:?}");
    }
}
