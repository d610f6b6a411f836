//! Action-chunk post-processing: recursive-extrema keypoints, moving average
//! inside keypoint segments, keypoint hold extension and a minimum clamp.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothError {
    #[error("empty trajectory")]
    Empty,
    #[error("invalid smoother configuration: {0}")]
    Config(String),
    #[error("row {row} has {got} dimensions, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherConfig {
    pub rounds: usize,
    pub min_segment: usize,
    pub union_dims: Vec<usize>,
    pub window: usize,
    pub hold: usize,
    pub skip_prefix: usize,
    pub clamp_dim: usize,
    pub clamp_min: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            rounds: 2,
            min_segment: 5,
            union_dims: vec![0, 1, 2],
            window: 5,
            hold: 3,
            skip_prefix: 5,
            clamp_dim: 2,
            clamp_min: 0.13,
        }
    }
}

impl SmootherConfig {
    /// Leaves every trajectory unchanged.
    pub fn neutral() -> Self {
        Self {
            rounds: 0,
            window: 1,
            hold: 0,
            clamp_min: f64::NEG_INFINITY,
            ..Self::default()
        }
    }

    pub fn validate(&self, dims: usize) -> Result<(), SmoothError> {
        if self.window % 2 == 0 {
            return Err(SmoothError::Config(format!("window must be odd, got {}", self.window)));
        }
        if self.min_segment < 2 {
            return Err(SmoothError::Config("min_segment must be >= 2".into()));
        }
        if self.clamp_dim >= dims || self.union_dims.iter().any(|&d| d >= dims) {
            return Err(SmoothError::Config(format!("dimension index out of range for {dims}-dim actions")));
        }
        if self.clamp_min.is_nan() {
            return Err(SmoothError::Config("clamp_min is NaN".into()));
        }
        Ok(())
    }
}

/// Output of [`smooth`]: the processed rows, the input row each output row
/// came from, and the keypoints that were selected.
#[derive(Clone, Debug, PartialEq)]
pub struct Smoothed {
    pub rows: Vec<Vec<f64>>,
    pub source: Vec<usize>,
    pub keypoints: Vec<usize>,
}

fn check_rows(traj: &[Vec<f64>]) -> Result<usize, SmoothError> {
    let dims = traj.first().ok_or(SmoothError::Empty)?.len();
    for (row, r) in traj.iter().enumerate() {
        if r.len() != dims {
            return Err(SmoothError::Ragged {
                row,
                expected: dims,
                got: r.len(),
            });
        }
    }
    Ok(dims)
}

/// First index of the maximum and of the minimum of `dim` over `u..=v`.
fn extrema(traj: &[Vec<f64>], dim: usize, u: usize, v: usize) -> (usize, usize) {
    let (mut hi, mut lo) = (u, u);
    for t in u + 1..=v {
        if traj[t][dim] > traj[hi][dim] {
            hi = t;
        }
        if traj[t][dim] < traj[lo][dim] {
            lo = t;
        }
    }
    (hi, lo)
}

fn keypoints_for_dim(traj: &[Vec<f64>], dim: usize, rounds: usize, min_segment: usize) -> BTreeSet<usize> {
    let last = traj.len() - 1;
    let mut k: BTreeSet<usize> = [0, last].into();
    for _ in 0..rounds {
        let current: Vec<usize> = k.iter().copied().collect();
        let mut added = Vec::new();
        for pair in current.windows(2) {
            let (u, v) = (pair[0], pair[1]);
            if v - u + 1 < min_segment {
                continue;
            }
            let (hi, lo) = extrema(traj, dim, u, v);
            added.extend([hi, lo].into_iter().filter(|i| !k.contains(i)));
        }
        if added.is_empty() {
            break;
        }
        k.extend(added);
    }
    k
}

/// Recursive-extrema keypoints, unioned over `cfg.union_dims`.
///
/// Each round splits the trajectory at the current keypoints and, for every
/// segment of at least `min_segment` points, adds the first-occurring argmax
/// and argmin of the tracked dimension.
pub fn select_keypoints(traj: &[Vec<f64>], cfg: &SmootherConfig) -> Result<Vec<usize>, SmoothError> {
    let dims = check_rows(traj)?;
    cfg.validate(dims)?;
    let mut k: BTreeSet<usize> = [0, traj.len() - 1].into();
    for &d in &cfg.union_dims {
        k.extend(keypoints_for_dim(traj, d, cfg.rounds, cfg.min_segment));
    }
    Ok(k.into_iter().collect())
}

/// Centered moving average of width `window`, computed separately inside
/// each keypoint interval. Keypoints keep their exact values.
pub fn segment_moving_average(traj: &[Vec<f64>], keypoints: &[usize], window: usize) -> Vec<Vec<f64>> {
    let h = window / 2;
    let mut out = traj.to_vec();
    if h == 0 {
        return out;
    }
    for pair in keypoints.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for t in a + 1..b {
            let lo = a.max(t.saturating_sub(h));
            let hi = b.min(t + h);
            let n = (hi - lo + 1) as f64;
            for (d, slot) in out[t].iter_mut().enumerate() {
                *slot = traj[lo..=hi].iter().map(|r| r[d]).sum::<f64>() / n;
            }
        }
    }
    out
}

/// Repeats every keypoint `k >= skip_prefix` for `hold` extra steps.
/// Returns the rows and the source index of each output row.
pub fn hold_extend(traj: &[Vec<f64>], keypoints: &[usize], hold: usize, skip_prefix: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let held: BTreeSet<usize> = keypoints.iter().copied().filter(|&k| k >= skip_prefix).collect();
    let mut rows = Vec::with_capacity(traj.len() + hold * held.len());
    let mut source = Vec::with_capacity(rows.capacity());
    for (t, r) in traj.iter().enumerate() {
        let reps = if held.contains(&t) { 1 + hold } else { 1 };
        for _ in 0..reps {
            rows.push(r.clone());
            source.push(t);
        }
    }
    (rows, source)
}

/// `x[dim] = max(x[dim], min)` for every row.
pub fn clamp_dim(traj: &mut [Vec<f64>], dim: usize, min: f64) {
    for r in traj {
        r[dim] = r[dim].max(min);
    }
}

/// Keypoints, then segment moving average, then hold extension, then clamp.
pub fn smooth(traj: &[Vec<f64>], cfg: &SmootherConfig) -> Result<Smoothed, SmoothError> {
    let keypoints = select_keypoints(traj, cfg)?;
    let averaged = segment_moving_average(traj, &keypoints, cfg.window);
    let (mut rows, source) = hold_extend(&averaged, &keypoints, cfg.hold, cfg.skip_prefix);
    clamp_dim(&mut rows, cfg.clamp_dim, cfg.clamp_min);
    Ok(Smoothed {
        rows,
        source,
        keypoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    fn one_dim(rounds: usize, min_segment: usize) -> SmootherConfig {
        SmootherConfig {
            rounds,
            min_segment,
            union_dims: vec![0],
            clamp_dim: 0,
            ..SmootherConfig::neutral()
        }
    }

    #[test]
    fn no_rounds_keeps_endpoints_only() {
        let t = col(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0]);
        assert_eq!(select_keypoints(&t, &one_dim(0, 3)).unwrap(), vec![0, 6]);
    }

    #[test]
    fn monotone_has_no_interior_keypoints() {
        let t = col(&(0..15).map(f64::from).collect::<Vec<_>>());
        assert_eq!(select_keypoints(&t, &one_dim(4, 2)).unwrap(), vec![0, 14]);
    }

    #[test]
    fn single_peak_is_found() {
        let t = col(&[0.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0]);
        let k = select_keypoints(&t, &one_dim(1, 3)).unwrap();
        assert!(k.contains(&0) && k.contains(&3) && k.contains(&6));
    }

    #[test]
    fn moving_average_examples() {
        let t = col(&[0.0, 10.0, 0.0]);
        let out = segment_moving_average(&t, &[0, 2], 3);
        assert_eq!(out[0][0], 0.0);
        assert_eq!(out[2][0], 0.0);
        assert!((out[1][0] - 10.0 / 3.0).abs() < 1e-15);
        assert_eq!(segment_moving_average(&t, &[0, 2], 1), t);
        let c = col(&[2.5; 9]);
        assert_eq!(segment_moving_average(&c, &[0, 4, 8], 5), c);
    }

    #[test]
    fn hold_extension_length_and_order() {
        let t = col(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let (rows, src) = hold_extend(&t, &[0, 2, 4], 2, 1);
        assert_eq!(rows.len(), 9);
        assert_eq!(src, vec![0, 1, 2, 2, 2, 3, 4, 4, 4]);
        let mut dedup = rows.clone();
        dedup.dedup();
        assert_eq!(dedup, t);
        assert_eq!(hold_extend(&t, &[0, 2, 4], 0, 0).0, t);
    }

    #[test]
    fn clamp_examples() {
        let mut t = vec![vec![0.5, 0.5, 0.05, 1.0], vec![0.5, 0.5, 0.4, 1.0]];
        clamp_dim(&mut t, 2, 0.13);
        assert_eq!(t[0][2], 0.13);
        assert_eq!(t[1][2], 0.4);
        let once = t.clone();
        clamp_dim(&mut t, 2, 0.13);
        assert_eq!(t, once);
    }

    #[test]
    fn neutral_config_is_identity() {
        let t: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.1, (i as f64).sin(), -1.0, 0.5]).collect();
        let s = smooth(&t, &SmootherConfig::neutral()).unwrap();
        assert_eq!(s.rows, t);
        assert_eq!(s.source, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let t = vec![vec![0.0; 4]; 5];
        let even = SmootherConfig {
            window: 4,
            ..SmootherConfig::default()
        };
        assert!(smooth(&t, &even).is_err());
        assert_eq!(smooth(&[], &SmootherConfig::default()), Err(SmoothError::Empty));
        let ragged = vec![vec![0.0; 4], vec![0.0; 3]];
        assert!(matches!(smooth(&ragged, &SmootherConfig::default()), Err(SmoothError::Ragged { row: 1, .. })));
    }

    proptest! {
        #[test]
        fn default_smoothing_invariants(raw in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 2..60)) {
            let cfg = SmootherConfig::default();
            let s = smooth(&raw, &cfg).unwrap();
            let held = s.keypoints.iter().filter(|&&k| k >= cfg.skip_prefix).count();
            prop_assert_eq!(s.rows.len(), raw.len() + cfg.hold * held);
            prop_assert!(s.rows.iter().all(|r| r[cfg.clamp_dim] >= cfg.clamp_min));
            let pre = segment_moving_average(&raw, &s.keypoints, cfg.window);
            for &k in &s.keypoints {
                prop_assert_eq!(&pre[k], &raw[k]);
            }
        }
    }
}
