use serde::{Deserialize, Serialize};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_act: f64,
    pub lambda_gate: f64,
    pub huber_beta: f64,
    pub action_weights: Vec<f64>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_act: 1.0,
            lambda_gate: 1.0,
            huber_beta: 0.1,
            action_weights: vec![1.0; crate::world::Action::DIM],
        }
    }
}

/// Weighted smooth L1 (Huber) distance summed over dimensions:
///
/// ```text
/// d_i = 0.5 w_i e_i^2 / beta     if |e_i| < beta
///       w_i (|e_i| - 0.5 beta)   otherwise
/// ```
pub fn weighted_smooth_l1(x: &[f64], x_hat: &[f64], beta: f64, w: &[f64]) -> f64 {
    assert_eq!(x.len(), x_hat.len());
    assert_eq!(x.len(), w.len());
    assert!(beta > 0.0);
    x.iter()
        .zip(x_hat)
        .zip(w)
        .map(|((a, b), wi)| {
            let e = (a - b).abs();
            if e < beta {
                0.5 * wi * e * e / beta
            } else {
                wi * (e - 0.5 * beta)
            }
        })
        .sum()
}

/// Derivative of [`weighted_smooth_l1`] with respect to `x_hat`.
pub fn weighted_smooth_l1_grad(x: &[f64], x_hat: &[f64], beta: f64, w: &[f64], out: &mut [f64]) {
    for i in 0..x.len() {
        let e = x_hat[i] - x[i];
        out[i] = if e.abs() < beta {
            w[i] * e / beta
        } else {
            w[i] * e.signum()
        };
    }
}

/// Binary cross entropy of a predicted probability against a 0/1 label.
pub fn bce(p: f64, label: bool) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Derivative of `bce(sigmoid(z), label)` with respect to the logit `z`.
/// Zero where the clamp is active.
pub fn bce_logit_grad(z: f64, label: bool) -> f64 {
    let p = sigmoid(z);
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
        return 0.0;
    }
    p - if label { 1.0 } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_zero_at_equality() {
        assert_eq!(weighted_smooth_l1(&[0.3, -2.0], &[0.3, -2.0], 0.1, &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn huber_branches_meet_at_beta() {
        let quad = 0.5 * 0.1 * 0.1 / 0.1;
        let lin = 0.1 - 0.5 * 0.1;
        assert!((quad - 0.05f64).abs() < 1e-15);
        assert!((lin - 0.05f64).abs() < 1e-15);
        assert!((weighted_smooth_l1(&[0.1], &[0.0], 0.1, &[1.0]) - 0.05).abs() < 1e-15);
        let below = weighted_smooth_l1(&[0.1 - 1e-15], &[0.0], 0.1, &[1.0]);
        let above = weighted_smooth_l1(&[0.1 + 1e-15], &[0.0], 0.1, &[1.0]);
        assert!((below - above).abs() <= 1e-12);
    }

    #[test]
    fn huber_weighted_hand_example() {
        let d = weighted_smooth_l1(&[0.05, 0.3], &[0.0, 0.0], 0.1, &[2.0, 1.0]);
        assert!((d - 0.275).abs() < 1e-12);
    }

    #[test]
    fn huber_grad_matches_difference_quotient() {
        let x = [0.2, -0.4, 0.0];
        let w = [1.0, 2.0, 0.5];
        for xh in [[0.25, -0.1, 0.01], [0.0, -0.41, -0.3]] {
            let mut g = [0.0; 3];
            weighted_smooth_l1_grad(&x, &xh, 0.1, &w, &mut g);
            for i in 0..3 {
                let mut up = xh;
                let mut dn = xh;
                up[i] += 1e-7;
                dn[i] -= 1e-7;
                let num = (weighted_smooth_l1(&x, &up, 0.1, &w) - weighted_smooth_l1(&x, &dn, 0.1, &w)) / 2e-7;
                assert!((num - g[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bce_values() {
        assert!((bce(0.5, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce(0.5, false) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce(1.0, true) <= 1e-6);
        assert!((bce(0.9, false) - 2.302585092994046).abs() < 1e-12);
        assert!(bce(0.0, true).is_finite());
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
