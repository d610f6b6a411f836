//! Self-supervised random play: random reaching interleaved with scripted
//! grasp and release, recorded as labelled frame pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::idm::{augment_observation, FramePairSample};
use crate::planner::{PlanError, Rollout};
use crate::world::{reset_and_sample_task, Action, Condition, Setting, Vec3, WorldConfig, WorldError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlayConfig {
    pub num_samples: usize,
    pub traj_len_range: (usize, usize),
    /// Chance that the next segment of a trajectory is a grasp routine
    /// rather than a random reach.
    pub grasp_episode_prob: f64,
    pub action_noise_sigma: f64,
    pub obs_noise_sigma: f64,
    pub seed: u64,
}

impl Default for PlayConfig {
    fn default() -> Self {
        Self {
            num_samples: 50_000,
            traj_len_range: (100, 200),
            grasp_episode_prob: 0.5,
            action_noise_sigma: 0.002,
            obs_noise_sigma: 0.002,
            seed: 0,
        }
    }
}

impl PlayConfig {
    pub fn validate(&self) -> Result<(), String> {
        let (lo, hi) = self.traj_len_range;
        if lo < 2 || lo > hi {
            return Err(format!("traj_len_range must satisfy 2 <= min <= max, got ({lo}, {hi})"));
        }
        if !(0.0..=1.0).contains(&self.grasp_episode_prob) {
            return Err("grasp_episode_prob must lie in [0, 1]".into());
        }
        for (name, s) in [("action_noise_sigma", self.action_noise_sigma), ("obs_noise_sigma", self.obs_noise_sigma)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(format!("{name} must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

fn random_point<R: Rng>(cfg: &WorldConfig, rng: &mut R) -> Vec3 {
    let b = cfg.bounds;
    let z_lo = cfg.rest_height(cfg.object_radius);
    let z_hi = (cfg.hover_height * 1.75).min(b.max.z);
    let m = 0.05;
    Vec3::new(
        rng.random_range(b.min.x + m..b.max.x - m),
        rng.random_range(b.min.y + m..b.max.y - m),
        rng.random_range(z_lo..z_hi.max(z_lo + 1e-6)),
    )
}

/// Noisy straight-line reach with the gripper open.
fn random_reach<R: Rng>(r: &mut Rollout, rng: &mut R, noise: &Option<Normal<f64>>) -> Result<(), PlanError> {
    let cfg = r.cfg;
    let goal = random_point(cfg, rng);
    let speed = cfg.max_step_displacement * rng.random_range(0.3..=1.0);
    let aperture = if rng.random_bool(0.8) { 1.0 } else { r.scene.aperture.max(0.7) };
    let max_steps = rng.random_range(5..40);
    for _ in 0..max_steps {
        if r.scene.ee.distance(goal) <= 1e-6 {
            break;
        }
        let mut pose = r.scene.ee + (goal - r.scene.ee).clamp_norm(speed);
        if let Some(n) = noise {
            pose = pose + Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
        }
        r.push(Action::new(cfg.bounds.clamp(pose), aperture), false)?;
    }
    Ok(())
}

/// Small corrective moves around `center` at a partial aperture, the way a
/// reactive grasp re-aligns before closing.
fn realign<R: Rng>(r: &mut Rollout, rng: &mut R, center: Vec3, aperture: f64) -> Result<(), PlanError> {
    let speed = r.cfg.max_step_displacement * rng.random_range(0.3..=1.0);
    let off = Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(0.0..0.02));
    r.travel(center + off, aperture, speed, true)?;
    r.travel(center, aperture, speed, true)
}

/// Approach a random object, close on it with one of several closing
/// styles, and if it was caught carry it somewhere and let go.
fn grasp_routine<R: Rng>(r: &mut Rollout, rng: &mut R) -> Result<(), PlanError> {
    let cfg = r.cfg;
    if r.scene.objects.is_empty() {
        return Ok(());
    }
    let hover = cfg.hover_height;
    let i = rng.random_range(0..r.scene.objects.len());
    let obj = r.scene.objects[i].center;
    let speed = cfg.max_step_displacement * rng.random_range(0.5..=1.0);
    let rate = rng.random_range(0.05..=cfg.max_aperture_rate);
    let miss = Vec3::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), 0.0);

    r.ramp_aperture(1.0, cfg.max_aperture_rate, false)?;
    r.travel(Vec3::new(obj.x, obj.y, hover.max(r.scene.ee.z.min(hover * 1.5))), 1.0, speed, false)?;
    let descend_to = obj + miss;
    // Some grasps start closing on the way down.
    if rng.random_bool(0.2) {
        r.travel(descend_to.with_z(obj.z + 0.03), 1.0, speed, false)?;
        r.travel(descend_to, 0.7, speed * 0.5, true)?;
    } else {
        r.travel(descend_to, 1.0, speed, false)?;
    }
    match rng.random_range(0..4) {
        0 | 1 => r.ramp_aperture(0.0, rate, true)?,
        2 => {
            r.ramp_aperture(0.5, rate.min(0.05 + rng.random::<f64>() * 0.1), true)?;
            realign(r, rng, obj, 0.5)?;
            r.ramp_aperture(0.0, cfg.max_aperture_rate, true)?;
        }
        _ => {
            // Close early, reopen part way, re-center and close again.
            r.ramp_aperture(rng.random_range(0.0..0.3), rate, true)?;
            let ap = 0.5;
            r.push(Action::new(r.scene.ee, ap), true)?;
            r.ramp_aperture(ap, cfg.max_aperture_rate, true)?;
            realign(r, rng, obj, ap)?;
            r.ramp_aperture(0.0, cfg.max_aperture_rate, true)?;
        }
    }
    r.dwell(rng.random_range(0..4), true)?;

    if r.scene.held.is_some() {
        let lift = r.scene.ee.with_z(rng.random_range(obj.z + 0.02..hover * 1.3));
        r.travel(lift, 0.0, speed, false)?;
        let mut drop = random_point(cfg, rng).with_z(lift.z);
        if rng.random_bool(0.5) {
            if let Some(c) = r.scene.containers.first() {
                drop = Vec3::new(c.center.x, c.center.y, hover);
            }
        }
        r.travel(drop, 0.0, speed, false)?;
        r.dwell(rng.random_range(0..3), false)?;
    }
    r.ramp_aperture(1.0, rng.random_range(0.05..=cfg.max_aperture_rate), false)?;
    let up = r.scene.ee.with_z((r.scene.ee.z + 0.05).min(cfg.bounds.max.z));
    r.travel(up, 1.0, speed, false)
}

fn one_trajectory<'a, R: Rng>(cfg: &'a WorldConfig, play: &PlayConfig, rng: &mut R) -> Result<Rollout<'a>, WorldError> {
    let setting = Setting::ALL[rng.random_range(0..Setting::ALL.len())];
    let condition = Condition::ALL[rng.random_range(0..Condition::ALL.len())];
    let (scene, _) = reset_and_sample_task(cfg, setting, condition, rng.random())?;
    let (lo, hi) = play.traj_len_range;
    let len = rng.random_range(lo..=hi);
    let noise = (play.action_noise_sigma > 0.0).then(|| Normal::new(0.0, play.action_noise_sigma).expect("validated sigma"));
    let mut r = Rollout::new(cfg, scene, len);
    while r.steps() < len {
        let before = r.steps();
        let res = if rng.random_bool(play.grasp_episode_prob) {
            grasp_routine(&mut r, rng)
        } else {
            random_reach(&mut r, rng, &noise)
        };
        // The only error is running out of budget, which ends the trajectory.
        match res {
            Err(_) => break,
            Ok(()) if r.steps() == before => {
                let holding = r.scene.held.is_some();
                if r.dwell(1, holding).is_err() {
                    break;
                }
            }
            Ok(()) => {}
        }
    }
    Ok(r)
}

/// Rolls seeded random-play trajectories until `num_samples` transitions are
/// collected. Each sample pairs consecutive frames (independently augmented
/// with `obs_noise_sigma`) with the proprioception at the first frame, the
/// commanded action and the interaction label.
pub fn collect_random_play(cfg: &WorldConfig, play: &PlayConfig) -> Result<Vec<FramePairSample>, WorldError> {
    cfg.validate()?;
    play.validate().map_err(WorldError::InvalidConfig)?;
    let layout = cfg.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(play.seed);
    let mut out = Vec::with_capacity(play.num_samples);
    while out.len() < play.num_samples {
        let r = one_trajectory(cfg, play, &mut rng)?;
        for t in 0..r.actions.len() {
            if out.len() == play.num_samples {
                break;
            }
            let prev = &r.frames[t];
            out.push(FramePairSample {
                prev_obs: augment_observation(prev, play.obs_noise_sigma, &layout, &mut rng),
                obs: augment_observation(&r.frames[t + 1], play.obs_noise_sigma, &layout, &mut rng),
                state: layout.robot_state(prev.as_slice()),
                action: r.actions[t],
                gate_label: r.gates[t],
            });
        }
    }
    Ok(out)
}

/// Fraction of samples labelled as interaction.
pub fn positive_fraction(samples: &[FramePairSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|s| s.gate_label).count() as f64 / samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(prob: f64, seed: u64) -> PlayConfig {
        PlayConfig {
            num_samples: 3000,
            grasp_episode_prob: prob,
            seed,
            ..PlayConfig::default()
        }
    }

    #[test]
    fn no_grasps_means_no_positive_labels() {
        let d = collect_random_play(&WorldConfig::default(), &small(0.0, 1)).unwrap();
        assert_eq!(d.len(), 3000);
        assert!(d.iter().all(|s| !s.gate_label));
    }

    #[test]
    fn label_balance_in_sanity_band() {
        let d = collect_random_play(&WorldConfig::default(), &PlayConfig {
            num_samples: 10_000,
            ..PlayConfig::default()
        })
        .unwrap();
        let f = positive_fraction(&d);
        assert!(f > 0.05 && f < 0.6, "positive fraction {f}");
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = WorldConfig::default();
        let a = collect_random_play(&cfg, &small(0.5, 9)).unwrap();
        let b = collect_random_play(&cfg, &small(0.5, 9)).unwrap();
        let c = collect_random_play(&cfg, &small(0.5, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn actions_stay_in_workspace() {
        let cfg = WorldConfig::default();
        let d = collect_random_play(&cfg, &small(0.7, 3)).unwrap();
        assert!(d.iter().all(|s| cfg.bounds.contains(s.action.pose) && (0.0..=1.0).contains(&s.action.aperture)));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = PlayConfig {
            traj_len_range: (50, 10),
            ..PlayConfig::default()
        };
        assert!(collect_random_play(&WorldConfig::default(), &bad).is_err());
    }
}
