use thiserror::Error;

use super::{EpisodeLog, ExecutorConfig, GateEvent, GateMonitor, Method, Mode, ObjectTrack, StepRecord, Termination};
use crate::idm::{IdmError, IdmModel, PlannedChunk};
use crate::lowlevel::{hand_component, react, LowLevelConfig, PolicyContext, PolicyState};
use crate::metrics::{MetricsConfig, SuccessTracker};
use crate::planner::{generate, PlanError, PlannerConfig};
use crate::smoother::{smooth, SmoothError, SmootherConfig};
use crate::world::{
    perception, point_to_surface_distance, reset_and_sample_task, step, Action, Condition, SceneState, Setting, TaskSpec,
    WorldConfig, WorldError,
};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Idm(#[from] IdmError),
    #[error(transparent)]
    Smooth(#[from] SmoothError),
    #[error("method {0} needs a trained inverse dynamics model")]
    MissingModel(Method),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Everything an episode reads; shared immutably across episodes.
#[derive(Clone, Copy, Debug)]
pub struct Components<'a> {
    pub world: &'a WorldConfig,
    pub planner: &'a PlannerConfig,
    pub model: Option<&'a IdmModel>,
    pub smoother: &'a SmootherConfig,
    pub lowlevel: &'a LowLevelConfig,
    pub metrics: &'a MetricsConfig,
    pub exec: &'a ExecutorConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub setting: Setting,
    pub condition: Condition,
    pub scene_seed: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Planner and policy seeds of an episode. Both depend only on the scene
/// seed, so every method sees the same plan for the same scene.
pub fn episode_seeds(scene_seed: u64) -> (u64, u64) {
    (splitmix(scene_seed ^ 0x706c_616e), splitmix(scene_seed ^ 0x706f_6c69))
}

/// Pose from the plan, aperture from the hand policy.
pub fn compose(pose: &Action, aperture: f64) -> Action {
    Action::new(pose.pose, aperture)
}

struct Episode<'a> {
    c: &'a Components<'a>,
    task: TaskSpec,
    scene: SceneState,
    tracker: SuccessTracker,
    log: EpisodeLog,
}

impl<'a> Episode<'a> {
    fn start(c: &'a Components<'a>, method: Method, spec: &EpisodeSpec) -> Result<Self, ExecError> {
        c.exec.validate().map_err(ExecError::Config)?;
        c.lowlevel.validate().map_err(ExecError::Config)?;
        c.metrics.validate().map_err(ExecError::Config)?;
        let (scene, task) = reset_and_sample_task(c.world, spec.setting, spec.condition, spec.scene_seed)?;
        let target_radius = scene.object(task.target_id).map_or(0.0, |o| o.radius);
        Ok(Self {
            c,
            task,
            scene,
            tracker: SuccessTracker::new(*c.metrics),
            log: EpisodeLog {
                method,
                task,
                scene_seed: spec.scene_seed,
                target_radius,
                chunk: None,
                plan_meta: None,
                switches: Vec::new(),
                returns: Vec::new(),
                termination: Termination::StepBudget,
                error: None,
                steps: Vec::new(),
            },
        })
    }

    fn step_index(&self) -> u64 {
        self.log.steps.len() as u64
    }

    /// Executes `action` and logs the outcome. Returns true on task success.
    fn execute(&mut self, action: Action, mode: Mode, hand_source: Option<Mode>, queue_index: Option<usize>, gate: Option<f64>) -> bool {
        let next = step(self.c.world, &self.scene, &action);
        let target = next.object(self.task.target_id).expect("target exists");
        let container = next.container(self.task.container_id).expect("container exists");
        let rec = StepRecord {
            step: self.step_index(),
            mode,
            hand_source,
            queue_index,
            action,
            gate,
            ee: next.ee,
            aperture: next.aperture,
            held: next.held_id(),
            target_distance: point_to_surface_distance(next.ee, target),
            target_center: target.center,
            target_velocity: target.velocity,
            container_center: container.center,
            objects: next
                .objects
                .iter()
                .map(|o| ObjectTrack {
                    id: o.id,
                    center: o.center,
                    velocity: o.velocity,
                })
                .collect(),
        };
        self.tracker.update(&rec);
        self.log.steps.push(rec);
        self.scene = next;
        if self.tracker.overall() {
            self.log.termination = Termination::Success;
            return true;
        }
        false
    }
}

/// Generates, decodes and smooths the plan. `None` means planning failed and
/// the log already says why.
fn plan_chunk(ep: &mut Episode, model: &IdmModel, planner_seed: u64) -> Result<Option<PlannedChunk>, ExecError> {
    let layout = ep.c.world.layout();
    let (obs0, state0) = perception(&ep.scene, &layout);
    let (traj, meta) = match generate(&obs0, &ep.scene, &ep.task, ep.c.planner, ep.c.world, planner_seed) {
        Ok(v) => v,
        Err(e @ PlanError::Infeasible(_)) => {
            ep.log.termination = Termination::PlanInfeasible;
            ep.log.error = Some(e.to_string());
            return Ok(None);
        }
        Err(e) => return Err(ExecError::Config(e.to_string())),
    };
    ep.log.plan_meta = Some(meta);
    let raw = model.predict_chunk(&traj, &state0)?;
    let rows: Vec<Vec<f64>> = raw.actions.iter().map(|a| a.to_array().to_vec()).collect();
    let sm = smooth(&rows, ep.c.smoother)?;
    let chunk = PlannedChunk {
        actions: sm.rows.iter().map(|r| Action::from_slice(r)).collect(),
        predicted_gates: sm.source.iter().map(|&i| raw.predicted_gates[i]).collect(),
    };
    ep.log.chunk = Some(chunk.clone());
    Ok(Some(chunk))
}

fn run_planned(c: &Components, spec: &EpisodeSpec, method: Method) -> Result<EpisodeLog, ExecError> {
    let model = c.model.ok_or(ExecError::MissingModel(method))?;
    let layout = c.world.layout();
    if model.layout != layout {
        return Err(ExecError::Config("model was trained for a different observation layout".into()));
    }
    let mut ep = Episode::start(c, method, spec)?;
    let task = ep.task;
    let (planner_seed, policy_seed) = episode_seeds(spec.scene_seed);
    let Some(chunk) = plan_chunk(&mut ep, model, planner_seed)? else {
        return Ok(ep.log);
    };
    let ctx = PolicyContext {
        world: c.world,
        layout: &layout,
        task: &task,
        cfg: c.lowlevel,
    };

    let switching = method == Method::Hierarchical;
    let simultaneous = method == Method::Simultaneous;
    let mut monitor = GateMonitor::new(c.exec);
    let mut policy = PolicyState::new(policy_seed);
    let mut fallback_used = false;
    let (mut prev_obs, mut prev_state) = perception(&ep.scene, &layout);
    let mut k = 0usize;

    for _ in 0..c.exec.step_budget {
        let (obs, state) = perception(&ep.scene, &layout);
        let step = ep.step_index();

        if simultaneous {
            if k >= chunk.len() {
                ep.log.termination = Termination::PlanExhausted;
                return Ok(ep.log);
            }
            let (aperture, next) = hand_component(&obs.0, &state, &policy, &ctx);
            policy = next;
            let action = compose(&chunk.actions[k], aperture);
            k += 1;
            if ep.execute(action, Mode::Plan, Some(Mode::Lowlevel), Some(k - 1), None) {
                return Ok(ep.log);
            }
            continue;
        }

        let gate = model.predict(prev_obs.as_slice(), obs.as_slice(), &prev_state)?.1;
        if switching {
            match monitor.observe(gate) {
                GateEvent::Engage => {
                    ep.log.switches.push(step);
                    policy = PolicyState::new(policy_seed.wrapping_add(monitor.switches as u64));
                }
                GateEvent::Release => {
                    ep.log.returns.push(step);
                    k = super::truncate_to_next_low(k, &chunk.predicted_gates, c.exec.tau);
                }
                GateEvent::None => {}
            }
        }
        if !monitor.enabled && k >= chunk.len() {
            if switching && c.exec.final_fallback && !fallback_used {
                fallback_used = true;
                monitor.enabled = true;
                ep.log.switches.push(step);
                policy = PolicyState::new(policy_seed.wrapping_add(u64::from(u32::MAX)));
            } else {
                ep.log.termination = Termination::PlanExhausted;
                return Ok(ep.log);
            }
        }

        let done = if monitor.enabled {
            let (action, next) = react(&obs.0, &state, &policy, &ctx);
            policy = next;
            ep.execute(action, Mode::Lowlevel, None, None, Some(gate))
        } else {
            k += 1;
            ep.execute(chunk.actions[k - 1], Mode::Plan, None, Some(k - 1), Some(gate))
        };
        if done {
            return Ok(ep.log);
        }
        if monitor.enabled && policy.is_done() {
            ep.log.termination = Termination::PolicyDone;
            return Ok(ep.log);
        }
        prev_obs = obs;
        prev_state = state;
    }
    ep.log.termination = Termination::StepBudget;
    Ok(ep.log)
}

/// Executes the smoothed chunk open-loop until it runs out.
pub fn run_pure_idm(c: &Components, spec: &EpisodeSpec) -> Result<EpisodeLog, ExecError> {
    run_planned(c, spec, Method::PureIdm)
}

/// Executes the chunk, handing control to the low-level policy when the
/// realtime gate stays high and taking it back, past the chunk's own
/// interaction segment, when it stays low.
pub fn run_hierarchical(c: &Components, spec: &EpisodeSpec) -> Result<EpisodeLog, ExecError> {
    run_planned(c, spec, Method::Hierarchical)
}

/// Arm pose from the chunk, gripper from the low-level policy, every step.
pub fn run_simultaneous(c: &Components, spec: &EpisodeSpec) -> Result<EpisodeLog, ExecError> {
    run_planned(c, spec, Method::Simultaneous)
}

/// The low-level policy alone, from the first step.
pub fn run_lowlevel_only(c: &Components, spec: &EpisodeSpec) -> Result<EpisodeLog, ExecError> {
    let layout = c.world.layout();
    let mut ep = Episode::start(c, Method::LowlevelOnly, spec)?;
    let task = ep.task;
    let ctx = PolicyContext {
        world: c.world,
        layout: &layout,
        task: &task,
        cfg: c.lowlevel,
    };
    let (_, policy_seed) = episode_seeds(spec.scene_seed);
    let mut policy = PolicyState::new(policy_seed);
    for _ in 0..c.exec.step_budget {
        let (obs, state) = perception(&ep.scene, &layout);
        let (action, next) = react(&obs.0, &state, &policy, &ctx);
        policy = next;
        if ep.execute(action, Mode::Lowlevel, None, None, None) {
            return Ok(ep.log);
        }
        if policy.is_done() {
            ep.log.termination = Termination::PolicyDone;
            return Ok(ep.log);
        }
    }
    ep.log.termination = Termination::StepBudget;
    Ok(ep.log)
}

pub fn run_episode(method: Method, c: &Components, spec: &EpisodeSpec) -> Result<EpisodeLog, ExecError> {
    match method {
        Method::LowlevelOnly => run_lowlevel_only(c, spec),
        Method::PureIdm => run_pure_idm(c, spec),
        Method::Hierarchical => run_hierarchical(c, spec),
        Method::Simultaneous => run_simultaneous(c, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idm::IdmArch;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Owned {
        world: WorldConfig,
        planner: PlannerConfig,
        smoother: SmootherConfig,
        lowlevel: LowLevelConfig,
        metrics: MetricsConfig,
        exec: ExecutorConfig,
    }

    impl Owned {
        fn new() -> Self {
            Self {
                world: WorldConfig::default(),
                planner: PlannerConfig::default(),
                smoother: SmootherConfig::default(),
                lowlevel: LowLevelConfig::confound_free(),
                metrics: MetricsConfig::default(),
                exec: ExecutorConfig::default(),
            }
        }

        fn components<'a>(&'a self, model: Option<&'a IdmModel>) -> Components<'a> {
            Components {
                world: &self.world,
                planner: &self.planner,
                model,
                smoother: &self.smoother,
                lowlevel: &self.lowlevel,
                metrics: &self.metrics,
                exec: &self.exec,
            }
        }
    }

    fn spec(seed: u64) -> EpisodeSpec {
        EpisodeSpec {
            setting: Setting::PassBy,
            condition: Condition::Control,
            scene_seed: seed,
        }
    }

    fn tiny_model(world: &WorldConfig) -> IdmModel {
        let arch = IdmArch {
            encoder_hidden: vec![8],
            head_hidden: 4,
        };
        IdmModel::new(world.layout(), world.bounds, &arch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn confound_free_policy_solves_control_scenes() {
        let o = Owned::new();
        for seed in 0..5 {
            let log = run_lowlevel_only(&o.components(None), &spec(seed)).unwrap();
            assert_eq!(log.termination, Termination::Success, "seed {seed}");
            assert!(log.steps.iter().all(|s| s.mode == Mode::Lowlevel && s.gate.is_none()));
        }
    }

    #[test]
    fn planned_methods_require_a_model() {
        let o = Owned::new();
        for m in [Method::PureIdm, Method::Hierarchical, Method::Simultaneous] {
            assert!(matches!(run_episode(m, &o.components(None), &spec(0)), Err(ExecError::MissingModel(_))));
        }
    }

    #[test]
    fn untrained_model_runs_to_a_clean_termination() {
        let o = Owned::new();
        let model = tiny_model(&o.world);
        for m in [Method::PureIdm, Method::Hierarchical, Method::Simultaneous] {
            let log = run_episode(m, &o.components(Some(&model)), &spec(3)).unwrap();
            let chunk = log.chunk.as_ref().unwrap();
            assert!(log.steps.len() <= o.exec.step_budget);
            assert!(log.steps.iter().filter_map(|s| s.queue_index).all(|k| k < chunk.len()));
            assert!(log.steps.iter().enumerate().all(|(i, s)| s.step == i as u64));
        }
    }

    #[test]
    fn seeds_and_compose() {
        assert_eq!(episode_seeds(5), episode_seeds(5));
        let (p, q) = episode_seeds(5);
        assert_ne!(p, q);
        assert_ne!(episode_seeds(6).0, p);
        let a = compose(&Action::new(crate::world::Vec3::new(0.1, 0.2, 0.3), 0.0), 0.7);
        assert_eq!(a.aperture, 0.7);
        assert_eq!(a.pose, crate::world::Vec3::new(0.1, 0.2, 0.3));
    }
}
