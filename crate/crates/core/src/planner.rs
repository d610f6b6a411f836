//! Mock video planner: a scripted pick-and-place rollout rendered as a frame
//! trajectory, then corrupted the way generated videos go wrong.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{
    perception, step, Action, Observation, ObjectId, ObservationLayout, SceneState, TaskSpec, Vec3, WorldConfig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("plan infeasible: {0}")]
    Infeasible(String),
    #[error("initial observation does not match the scene")]
    Inconsistent,
    #[error("invalid planner configuration: {0}")]
    Config(String),
}

/// Planned future frames `I*_0 .. I*_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTrajectory {
    pub frames: Vec<Observation>,
}

impl FrameTrajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionModel {
    pub interaction_noise_sigma: f64,
    pub global_drift_sigma: f64,
    pub semantic_failure_prob: f64,
    pub truncation_prob: f64,
}

impl Default for CorruptionModel {
    fn default() -> Self {
        Self::NONE
    }
}

impl CorruptionModel {
    pub const NONE: CorruptionModel = CorruptionModel {
        interaction_noise_sigma: 0.0,
        global_drift_sigma: 0.0,
        semantic_failure_prob: 0.0,
        truncation_prob: 0.0,
    };

    /// Strong distortion during grasp and transport, clean elsewhere.
    pub const HIGH_INTERACTION: CorruptionModel = CorruptionModel {
        interaction_noise_sigma: 0.1,
        ..Self::NONE
    };

    pub fn validate(&self) -> Result<(), PlanError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.interaction_noise_sigma >= 0.0 && self.global_drift_sigma >= 0.0)
            || !self.interaction_noise_sigma.is_finite()
            || !self.global_drift_sigma.is_finite()
        {
            return Err(PlanError::Config("noise scales must be finite and >= 0".into()));
        }
        if !prob(self.semantic_failure_prob) || !prob(self.truncation_prob) {
            return Err(PlanError::Config("probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub corruption: CorruptionModel,
    /// Keep every n-th frame (the last frame is always kept).
    pub subsample_stride: usize,
    pub max_plan_steps: usize,
    /// Aperture change per step while the scripted gripper closes or opens.
    pub aperture_step: f64,
    /// Steps spent fully closed before lifting.
    pub close_dwell: usize,
    pub retreat_height: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            corruption: CorruptionModel::NONE,
            subsample_stride: 1,
            max_plan_steps: 600,
            aperture_step: 0.1,
            close_dwell: 2,
            retreat_height: 0.05,
        }
    }
}

/// Ground-truth rollout: frames are exact perceptions of reachable states.
#[derive(Clone, Debug, PartialEq)]
pub struct OraclePlan {
    pub frames: FrameTrajectory,
    pub actions: Vec<Action>,
    pub gates: Vec<bool>,
    pub scenes: Vec<SceneState>,
}

/// What the planner did, for failure attribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanMeta {
    pub planned_target: ObjectId,
    pub semantic_fired: bool,
    pub truncated_at: Option<usize>,
    pub oracle_frames: usize,
    /// Distance from the task target to the task container in the last
    /// emitted frame, before noise.
    pub final_target_to_container: f64,
}

/// Steps a scene forward while recording frames, actions and gate labels.
///
/// A transition is labelled as interaction while the gripper is closing on
/// an object, and afterwards for as long as something is held.
#[derive(Clone, Debug)]
pub struct Rollout<'a> {
    pub cfg: &'a WorldConfig,
    pub layout: ObservationLayout,
    pub scene: SceneState,
    pub scenes: Vec<SceneState>,
    pub frames: Vec<Observation>,
    pub actions: Vec<Action>,
    pub gates: Vec<bool>,
    budget: usize,
}

impl<'a> Rollout<'a> {
    pub fn new(cfg: &'a WorldConfig, scene: SceneState, budget: usize) -> Self {
        let layout = cfg.layout();
        let frame = perception(&scene, &layout).0;
        Self {
            cfg,
            layout,
            scenes: vec![scene.clone()],
            scene,
            frames: vec![frame],
            actions: Vec::new(),
            gates: Vec::new(),
            budget,
        }
    }

    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn push(&mut self, action: Action, closing: bool) -> Result<(), PlanError> {
        if self.actions.len() >= self.budget {
            return Err(PlanError::Infeasible(format!("step budget {} exhausted", self.budget)));
        }
        let next = step(self.cfg, &self.scene, &action);
        self.gates.push(closing || next.held.is_some());
        self.actions.push(action);
        self.frames.push(perception(&next, &self.layout).0);
        self.scenes.push(next.clone());
        self.scene = next;
        Ok(())
    }

    /// Straight-line motion to `goal` at `speed` per step, holding `aperture`.
    pub fn travel(&mut self, goal: Vec3, aperture: f64, speed: f64, closing: bool) -> Result<(), PlanError> {
        let goal = self.cfg.bounds.clamp(goal);
        let speed = speed.min(self.cfg.max_step_displacement);
        while self.scene.ee.distance(goal) > 1e-9 {
            let next = self.scene.ee + (goal - self.scene.ee).clamp_norm(speed);
            let before = self.scene.ee;
            self.push(Action::new(next, aperture), closing)?;
            if self.scene.ee == before {
                return Err(PlanError::Infeasible("gripper cannot make progress".into()));
            }
        }
        Ok(())
    }

    /// Moves the aperture to `to` in increments of at most `rate`, pose fixed.
    pub fn ramp_aperture(&mut self, to: f64, rate: f64, closing: bool) -> Result<(), PlanError> {
        let rate = rate.min(self.cfg.max_aperture_rate);
        while (self.scene.aperture - to).abs() > 1e-9 {
            let a = self.scene.aperture;
            let cmd = if to < a { (a - rate).max(to) } else { (a + rate).min(to) };
            self.push(Action::new(self.scene.ee, cmd), closing)?;
        }
        Ok(())
    }

    pub fn dwell(&mut self, steps: usize, closing: bool) -> Result<(), PlanError> {
        for _ in 0..steps {
            self.push(Action::new(self.scene.ee, self.scene.aperture), closing)?;
        }
        Ok(())
    }
}

/// Scripted approach, descend, close, lift, transport, open and retreat,
/// rolled through the world so every frame is reachable.
pub fn oracle_plan(scene: &SceneState, task: &TaskSpec, cfg: &WorldConfig, pcfg: &PlannerConfig) -> Result<OraclePlan, PlanError> {
    let target = scene
        .object(task.target_id)
        .ok_or_else(|| PlanError::Infeasible(format!("no object {:?}", task.target_id)))?
        .center;
    let container = scene
        .container(task.container_id)
        .ok_or_else(|| PlanError::Infeasible(format!("no container {:?}", task.container_id)))?
        .center;
    if !(pcfg.aperture_step > 0.0) {
        return Err(PlanError::Config("aperture_step must be > 0".into()));
    }
    let speed = cfg.max_step_displacement;
    let hover = cfg.hover_height;
    let mut r = Rollout::new(cfg, scene.clone(), pcfg.max_plan_steps);

    r.travel(Vec3::new(target.x, target.y, hover.max(r.scene.ee.z)), 1.0, speed, false)?;
    r.travel(Vec3::new(target.x, target.y, hover), 1.0, speed, false)?;
    r.travel(target, 1.0, speed, false)?;
    r.ramp_aperture(0.0, pcfg.aperture_step, true)?;
    r.dwell(pcfg.close_dwell, true)?;
    let grasp = match r.scene.held {
        Some(g) if g.object == task.target_id => g,
        _ => return Err(PlanError::Infeasible("scripted grasp did not bind the target".into())),
    };
    r.travel(r.scene.ee.with_z(hover), 0.0, speed, false)?;
    let drop = Vec3::new(container.x - grasp.offset.x, container.y - grasp.offset.y, hover);
    r.travel(drop, 0.0, speed, false)?;
    r.ramp_aperture(1.0, pcfg.aperture_step, false)?;
    let up = r.scene.ee + Vec3::new(0.0, 0.0, pcfg.retreat_height);
    r.travel(up, 1.0, speed, false)?;

    Ok(OraclePlan {
        frames: FrameTrajectory { frames: r.frames },
        actions: r.actions,
        gates: r.gates,
        scenes: r.scenes,
    })
}

/// The mock video model. Plans with the oracle (on a wrong object with
/// probability `semantic_failure_prob`), then perturbs pose entries of the
/// frames and possibly truncates the trajectory. Frame 0 is the real initial
/// observation and is never perturbed.
pub fn generate(
    initial_obs: &Observation,
    scene: &SceneState,
    task: &TaskSpec,
    pcfg: &PlannerConfig,
    cfg: &WorldConfig,
    seed: u64,
) -> Result<(FrameTrajectory, PlanMeta), PlanError> {
    pcfg.corruption.validate()?;
    if pcfg.subsample_stride == 0 {
        return Err(PlanError::Config("subsample_stride must be >= 1".into()));
    }
    let layout = cfg.layout();
    if perception(scene, &layout).0 != *initial_obs {
        return Err(PlanError::Inconsistent);
    }
    let c = &pcfg.corruption;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let others: Vec<ObjectId> = scene.objects.iter().map(|o| o.id).filter(|&id| id != task.target_id).collect();
    let fire = rng.random_bool(c.semantic_failure_prob) && !others.is_empty();
    let planned_target = if fire {
        others[rng.random_range(0..others.len())]
    } else {
        task.target_id
    };
    let planned_task = TaskSpec {
        target_id: planned_target,
        ..*task
    };
    let plan = oracle_plan(scene, &planned_task, cfg, pcfg)?;

    let n = plan.frames.len();
    let mut frames = plan.frames.frames;
    let drift = Normal::new(0.0, c.global_drift_sigma).map_err(|e| PlanError::Config(e.to_string()))?;
    let bump = Normal::new(0.0, c.interaction_noise_sigma).map_err(|e| PlanError::Config(e.to_string()))?;
    for i in 1..n {
        let interaction = plan.gates[i - 1];
        let mask = layout.present_pose_mask(frames[i].as_slice());
        for (x, m) in frames[i].0.iter_mut().zip(mask) {
            if !m {
                continue;
            }
            if c.global_drift_sigma > 0.0 {
                *x += drift.sample(&mut rng);
            }
            if interaction && c.interaction_noise_sigma > 0.0 {
                *x += bump.sample(&mut rng);
            }
        }
    }

    let mut last = n - 1;
    let mut truncated_at = None;
    if rng.random_bool(c.truncation_prob) {
        if let Some(first) = plan.gates.iter().position(|&g| g).map(|i| i + 1) {
            if first < n - 1 {
                let cut = rng.random_range(first..n - 1);
                truncated_at = Some(cut);
                last = cut;
            }
        }
    }
    frames.truncate(last + 1);

    let kept: Vec<Observation> = if pcfg.subsample_stride > 1 {
        let mut idx: Vec<usize> = (0..=last).step_by(pcfg.subsample_stride).collect();
        if *idx.last().unwrap() != last {
            idx.push(last);
        }
        idx.into_iter().map(|i| frames[i].clone()).collect()
    } else {
        frames
    };

    let end = &plan.scenes[last];
    let final_target_to_container = match (end.object(task.target_id), end.container(task.container_id)) {
        (Some(o), Some(ctr)) => o.center.distance(ctr.center),
        _ => f64::INFINITY,
    };
    Ok((
        FrameTrajectory { frames: kept },
        PlanMeta {
            planned_target,
            semantic_fired: fire,
            truncated_at,
            oracle_frames: n,
            final_target_to_container,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{reset_and_sample_task, Condition, Setting};

    fn scene(setting: Setting, seed: u64) -> (WorldConfig, SceneState, TaskSpec) {
        let cfg = WorldConfig::default();
        let (s, t) = reset_and_sample_task(&cfg, setting, Condition::Experimental, seed).unwrap();
        (cfg, s, t)
    }

    #[test]
    fn oracle_places_target_in_container() {
        for seed in 0..20 {
            for setting in Setting::ALL {
                let (cfg, s, t) = scene(setting, seed);
                let plan = oracle_plan(&s, &t, &cfg, &PlannerConfig::default()).unwrap();
                let end = plan.scenes.last().unwrap();
                let d = end.object(t.target_id).unwrap().center.distance(end.container(t.container_id).unwrap().center);
                assert!(d <= 0.06, "seed {seed} {setting}: {d}");
                assert_eq!(plan.actions.len(), plan.frames.len() - 1);
                assert_eq!(plan.gates.len(), plan.actions.len());
            }
        }
    }

    #[test]
    fn oracle_gates_form_one_block() {
        let (cfg, s, t) = scene(Setting::RicherSemantics, 3);
        let plan = oracle_plan(&s, &t, &cfg, &PlannerConfig::default()).unwrap();
        let rises = plan.gates.windows(2).filter(|w| !w[0] && w[1]).count();
        let falls = plan.gates.windows(2).filter(|w| w[0] && !w[1]).count();
        assert_eq!((rises, falls), (1, 1));
        assert!(!plan.gates[0] && !plan.gates.last().unwrap());
    }

    #[test]
    fn oracle_actions_replay_to_frames() {
        let (cfg, s, t) = scene(Setting::PassBy, 4);
        let plan = oracle_plan(&s, &t, &cfg, &PlannerConfig::default()).unwrap();
        let layout = cfg.layout();
        let mut cur = s.clone();
        for (i, a) in plan.actions.iter().enumerate() {
            cur = step(&cfg, &cur, a);
            assert_eq!(perception(&cur, &layout).0, plan.frames.frames[i + 1]);
        }
    }

    #[test]
    fn zero_corruption_is_identity() {
        let (cfg, s, t) = scene(Setting::SimilarDistractors, 5);
        let obs = perception(&s, &cfg.layout()).0;
        let pcfg = PlannerConfig::default();
        let (traj, meta) = generate(&obs, &s, &t, &pcfg, &cfg, 77).unwrap();
        let plan = oracle_plan(&s, &t, &cfg, &pcfg).unwrap();
        assert_eq!(traj, plan.frames);
        assert!(!meta.semantic_fired);
        assert_eq!(meta.truncated_at, None);
    }

    #[test]
    fn semantic_failure_plans_another_object() {
        let (cfg, s, t) = scene(Setting::RicherSemantics, 6);
        let obs = perception(&s, &cfg.layout()).0;
        let pcfg = PlannerConfig {
            corruption: CorruptionModel {
                semantic_failure_prob: 1.0,
                ..CorruptionModel::NONE
            },
            ..PlannerConfig::default()
        };
        let (_, meta) = generate(&obs, &s, &t, &pcfg, &cfg, 1).unwrap();
        assert!(meta.semantic_fired);
        assert_ne!(meta.planned_target, t.target_id);
        assert!(meta.final_target_to_container > 0.06);
    }

    #[test]
    fn interaction_noise_leaves_other_frames_alone() {
        let (cfg, s, t) = scene(Setting::WristInvisible, 8);
        let obs = perception(&s, &cfg.layout()).0;
        let base = PlannerConfig::default();
        let noisy = PlannerConfig {
            corruption: CorruptionModel {
                interaction_noise_sigma: 0.05,
                ..CorruptionModel::NONE
            },
            ..base.clone()
        };
        let plan = oracle_plan(&s, &t, &cfg, &base).unwrap();
        let (traj, _) = generate(&obs, &s, &t, &noisy, &cfg, 3).unwrap();
        assert_eq!(traj.len(), plan.frames.len());
        for i in 1..traj.len() {
            let same = traj.frames[i] == plan.frames.frames[i];
            assert_eq!(same, !plan.gates[i - 1], "frame {i}");
        }
        assert_eq!(traj.frames[0], obs);
    }

    #[test]
    fn truncation_cuts_after_interaction_starts() {
        let (cfg, s, t) = scene(Setting::PassBy, 9);
        let obs = perception(&s, &cfg.layout()).0;
        let pcfg = PlannerConfig {
            corruption: CorruptionModel {
                truncation_prob: 1.0,
                ..CorruptionModel::NONE
            },
            ..PlannerConfig::default()
        };
        let plan = oracle_plan(&s, &t, &cfg, &pcfg).unwrap();
        let first = plan.gates.iter().position(|&g| g).unwrap() + 1;
        for seed in 0..10 {
            let (traj, meta) = generate(&obs, &s, &t, &pcfg, &cfg, seed).unwrap();
            let cut = meta.truncated_at.unwrap();
            assert!(cut >= first && cut < plan.frames.len() - 1);
            assert_eq!(traj.len(), cut + 1);
            assert_eq!(traj.frames[..], plan.frames.frames[..=cut]);
        }
    }

    #[test]
    fn same_seed_same_trajectory_and_stride() {
        let (cfg, s, t) = scene(Setting::SimilarDistractors, 10);
        let obs = perception(&s, &cfg.layout()).0;
        let pcfg = PlannerConfig {
            corruption: CorruptionModel {
                interaction_noise_sigma: 0.1,
                global_drift_sigma: 0.01,
                semantic_failure_prob: 0.5,
                truncation_prob: 0.5,
            },
            ..PlannerConfig::default()
        };
        assert_eq!(generate(&obs, &s, &t, &pcfg, &cfg, 5), generate(&obs, &s, &t, &pcfg, &cfg, 5));
        let strided = PlannerConfig {
            subsample_stride: 4,
            ..PlannerConfig::default()
        };
        let full = oracle_plan(&s, &t, &cfg, &strided).unwrap().frames;
        let (traj, _) = generate(&obs, &s, &t, &strided, &cfg, 0).unwrap();
        assert_eq!(traj.len(), (full.len() - 1).div_ceil(4) + 1);
        assert_eq!(traj.frames.last(), full.frames.last());
    }

    #[test]
    fn mismatched_observation_is_rejected() {
        let (cfg, s, t) = scene(Setting::PassBy, 11);
        let mut obs = perception(&s, &cfg.layout()).0;
        obs.0[0] += 0.1;
        assert_eq!(
            generate(&obs, &s, &t, &PlannerConfig::default(), &cfg, 0),
            Err(PlanError::Inconsistent)
        );
    }
}
