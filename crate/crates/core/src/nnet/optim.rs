use serde::{Deserialize, Serialize};

use super::NnetError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 0.01,
            weight_decay: 0.01,
        }
    }
}

/// Moment accumulators for AdamW, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub config: AdamWConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimState {
    pub fn new(config: AdamWConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }
}

/// One AdamW update with decoupled weight decay:
///
/// ```text
/// m <- b1 m + (1 - b1) g          v <- b2 v + (1 - b2) g^2
/// theta <- theta - lr * wd * theta - lr * m_hat / (sqrt(v_hat) + eps)
/// ```
///
/// `lr[i]` is the learning rate for tensor `i`. Nothing is modified if any
/// gradient is non-finite.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    opt: &mut OptimState,
    lr: &[f64],
) -> Result<(), NnetError> {
    if params.len() != grads.len() || params.len() != opt.first.len() || lr.len() != params.len() {
        return Err(NnetError::Shape("parameter, gradient and state tensor counts differ".into()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != opt.first[i].len() {
            return Err(NnetError::Shape(format!("tensor {i} has mismatched length")));
        }
    }
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(NnetError::Diverged("non-finite gradient".into()));
    }

    opt.step += 1;
    let AdamWConfig {
        beta1,
        beta2,
        eps,
        weight_decay,
    } = opt.config;
    let t = opt.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let rate = lr[i];
        let m = &mut opt.first[i];
        let v = &mut opt.second[i];
        for j in 0..p.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= rate * weight_decay * p[j];
            p[j] -= rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = OptimState::new(cfg, &[3]);
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        adam_step(&mut [&mut p], &[&[0.0, 0.0, 0.0]], &mut opt, &[0.1]).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn first_step_matches_hand_rolled_scalar_adam() {
        // Independent scalar re-derivation of one bias-corrected step.
        let (b1, b2, eps, lr, g, theta0) = (0.9f64, 0.999f64, 0.01, 0.05, 0.3, 1.0);
        let m = (1.0 - b1) * g;
        let v = (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1);
        let v_hat = v / (1.0 - b2);
        let expected = theta0 - lr * m_hat / (v_hat.sqrt() + eps);
        // m_hat = g and v_hat = g^2 on the first step
        assert!((expected - (theta0 - lr * 0.3 / (0.3 + 0.01))).abs() < 1e-15);

        let cfg = AdamWConfig {
            beta1: b1,
            beta2: b2,
            eps,
            weight_decay: 0.0,
        };
        let mut opt = OptimState::new(cfg, &[1]);
        let mut p = vec![theta0];
        adam_step(&mut [&mut p], &[&[g]], &mut opt, &[lr]).unwrap();
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_shrinks_independent_of_gradient() {
        let cfg = AdamWConfig {
            weight_decay: 0.01,
            ..AdamWConfig::default()
        };
        let mut opt = OptimState::new(cfg, &[1]);
        let mut p = vec![2.0];
        adam_step(&mut [&mut p], &[&[0.0]], &mut opt, &[0.1]).unwrap();
        assert!((p[0] - (2.0 - 0.1 * 0.01 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_diverges_without_mutation() {
        let mut opt = OptimState::new(AdamWConfig::default(), &[2]);
        let mut p = vec![1.0, 1.0];
        let err = adam_step(&mut [&mut p], &[&[0.1, f64::NAN]], &mut opt, &[0.1]).unwrap_err();
        assert!(matches!(err, NnetError::Diverged(_)));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let run = || {
            let mut opt = OptimState::new(AdamWConfig::default(), &[3]);
            let mut p = vec![0.3, -0.1, 0.7];
            for k in 0..5 {
                let g = [0.1 * k as f64, -0.2, 0.05];
                adam_step(&mut [&mut p], &[&g], &mut opt, &[1e-3]).unwrap();
            }
            (p, opt)
        };
        assert_eq!(run(), run());
    }
}
