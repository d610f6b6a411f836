//! Scripted reactive pick-and-place policy with tunable confound
//! sensitivities: wrist-camera reliance, confusion between similar objects,
//! and capture by objects passed on the way.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::world::{Action, ObjectId, ObservationLayout, RobotState, SlotView, TaskSpec, Vec3, WorldConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowLevelConfig {
    /// Only wrist-visible objects can be selected; an invisible target loses
    /// to any visible object.
    pub wrist_reliance: bool,
    pub similar_confusion_prob: f64,
    pub passby_capture_prob: f64,
    /// Fraction of the world's step limit used per step.
    pub approach_gain: f64,
    pub confusion_radius: f64,
    /// Closer than this to the target, similar objects no longer confuse.
    pub commit_radius: f64,
    /// Gripper-to-center distance required before closing.
    pub align_tol: f64,
    /// Horizontal distance at which seeking turns into descending.
    pub seek_tol: f64,
    /// When handed control near the target with a partly closed gripper,
    /// continue the grasp instead of starting over.
    pub engage_radius: f64,
    /// Aperture held while re-aligning during a grasp.
    pub align_aperture: f64,
}

impl Default for LowLevelConfig {
    fn default() -> Self {
        Self {
            wrist_reliance: true,
            similar_confusion_prob: 0.6,
            passby_capture_prob: 0.9,
            ..Self::confound_free()
        }
    }
}

impl LowLevelConfig {
    pub fn confound_free() -> Self {
        Self {
            wrist_reliance: false,
            similar_confusion_prob: 0.0,
            passby_capture_prob: 0.0,
            approach_gain: 1.0,
            confusion_radius: 0.15,
            commit_radius: 0.05,
            align_tol: 0.01,
            seek_tol: 0.02,
            engage_radius: 0.12,
            align_aperture: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("similar_confusion_prob", self.similar_confusion_prob),
            ("passby_capture_prob", self.passby_capture_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.approach_gain > 0.0 && self.approach_gain <= 1.0) {
            return Err("approach_gain must lie in (0, 1]".into());
        }
        if !(self.align_tol > 0.0 && self.seek_tol > 0.0) {
            return Err("tolerances must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Seek,
    Descend,
    Close,
    Lift,
    Transport,
    Open,
    Done,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyState {
    pub locked_target: Option<ObjectId>,
    pub phase: Phase,
    pub started: bool,
    capture_armed: bool,
    captured: bool,
    rng: ChaCha8Rng,
}

impl PolicyState {
    pub fn new(seed: u64) -> Self {
        Self {
            locked_target: None,
            phase: Phase::Seek,
            started: false,
            capture_armed: false,
            captured: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }
}

/// Read-only context shared by every call.
#[derive(Clone, Copy, Debug)]
pub struct PolicyContext<'a> {
    pub world: &'a WorldConfig,
    pub layout: &'a ObservationLayout,
    pub task: &'a TaskSpec,
    pub cfg: &'a LowLevelConfig,
}

// Slots are filled in ascending id order and scene ids are dense.
fn slot_of(id: ObjectId) -> usize {
    id.0 as usize
}

fn find(objects: &[SlotView], id: ObjectId) -> Option<&SlotView> {
    objects.iter().find(|o| o.slot == slot_of(id))
}

fn select_target(ctx: &PolicyContext, objects: &[SlotView], state: &RobotState, ps: &mut PolicyState) -> Option<ObjectId> {
    let fov = ctx.world.wrist_fov_radius;
    let visible = |o: &SlotView| state.ee.distance(o.center) <= fov;
    // Always draw both numbers so the stream does not depend on the scene.
    let confuse_draw: f64 = ps.rng.random();
    let pick_draw: f64 = ps.rng.random();
    ps.capture_armed = ps.rng.random_bool(ctx.cfg.passby_capture_prob);

    let target = find(objects, ctx.task.target_id)?;
    if ctx.cfg.wrist_reliance && !visible(target) {
        let nearest = objects
            .iter()
            .filter(|o| o.slot != target.slot && visible(o))
            .min_by(|a, b| state.ee.distance(a.center).total_cmp(&state.ee.distance(b.center)));
        if let Some(o) = nearest {
            return Some(ObjectId(o.slot as u32));
        }
    }
    let similar: Vec<&SlotView> = objects
        .iter()
        .filter(|o| o.slot != target.slot && o.kind == target.kind && o.center.distance(target.center) <= ctx.cfg.confusion_radius)
        .collect();
    let committed = state.ee.distance(target.center) <= ctx.cfg.commit_radius;
    if !similar.is_empty() && !committed && confuse_draw < ctx.cfg.similar_confusion_prob {
        let i = ((pick_draw * similar.len() as f64) as usize).min(similar.len() - 1);
        return Some(ObjectId(similar[i].slot as u32));
    }
    Some(ctx.task.target_id)
}

fn toward(ctx: &PolicyContext, ee: Vec3, goal: Vec3) -> Vec3 {
    let speed = ctx.cfg.approach_gain * ctx.world.max_step_displacement;
    ctx.world.bounds.clamp(ee + (goal - ee).clamp_norm(speed))
}

fn start(ctx: &PolicyContext, objects: &[SlotView], state: &RobotState, ps: &mut PolicyState) {
    ps.started = true;
    ps.locked_target = select_target(ctx, objects, state, ps);
    let Some(lock) = ps.locked_target.and_then(|id| find(objects, id)) else {
        return;
    };
    ps.phase = if state.held {
        Phase::Lift
    } else if state.aperture < 1.0 - 1e-9 && state.ee.distance(lock.center) <= ctx.cfg.engage_radius {
        Phase::Close
    } else {
        Phase::Seek
    };
}

/// One policy step. The first call locks a target according to the
/// confound rules; later calls follow the phase machine toward it and then
/// to the task container. With no objects in view the action holds pose.
pub fn react(obs: &[f64], state: &RobotState, ps: &PolicyState, ctx: &PolicyContext) -> (Action, PolicyState) {
    let mut ps = ps.clone();
    let objects = ctx.layout.objects(obs);
    let hold = Action::new(state.ee, state.aperture);
    if !ps.started {
        start(ctx, &objects, state, &mut ps);
    }
    let fov = ctx.world.wrist_fov_radius;
    let hover = ctx.world.hover_height;

    if ps.phase == Phase::Seek && ps.capture_armed && !ps.captured {
        if let Some(lock) = ps.locked_target.and_then(|id| find(&objects, id)) {
            if state.ee.distance(lock.center) > fov {
                let passing = objects
                    .iter()
                    .filter(|o| o.slot != lock.slot && state.ee.distance(o.center) <= fov)
                    .min_by(|a, b| state.ee.distance(a.center).total_cmp(&state.ee.distance(b.center)));
                if let Some(o) = passing {
                    ps.locked_target = Some(ObjectId(o.slot as u32));
                    ps.captured = true;
                }
            }
        }
    }

    let Some(lock) = ps.locked_target.and_then(|id| find(&objects, id)).map(|o| o.center) else {
        return (hold, ps);
    };
    let container = ctx.layout.container(obs, slot_of(ctx.task.container_id));

    for _ in 0..8 {
        match ps.phase {
            Phase::Seek => {
                if state.ee.distance_xy(lock) <= ctx.cfg.seek_tol {
                    ps.phase = Phase::Descend;
                    continue;
                }
                let goal = Vec3::new(lock.x, lock.y, hover.max(lock.z));
                return (Action::new(toward(ctx, state.ee, goal), 1.0), ps);
            }
            Phase::Descend => {
                if state.ee.distance(lock) <= ctx.cfg.align_tol {
                    ps.phase = Phase::Close;
                    continue;
                }
                return (Action::new(toward(ctx, state.ee, lock), 1.0), ps);
            }
            Phase::Close => {
                if state.held {
                    ps.phase = Phase::Lift;
                    continue;
                }
                if state.aperture < ctx.world.grasp_close_threshold {
                    return (Action::new(toward(ctx, state.ee, lock), ctx.cfg.align_aperture), ps);
                }
                if state.ee.distance(lock) > ctx.cfg.align_tol {
                    let ap = if state.aperture > ctx.cfg.align_aperture {
                        (state.aperture - 0.05).max(ctx.cfg.align_aperture)
                    } else {
                        state.aperture
                    };
                    return (Action::new(toward(ctx, state.ee, lock), ap), ps);
                }
                return (Action::new(toward(ctx, state.ee, lock), 0.0), ps);
            }
            Phase::Lift => {
                if !state.held {
                    ps.phase = Phase::Seek;
                    continue;
                }
                if state.ee.z >= hover - 1e-9 {
                    ps.phase = Phase::Transport;
                    continue;
                }
                return (Action::new(toward(ctx, state.ee, state.ee.with_z(hover)), 0.0), ps);
            }
            Phase::Transport => {
                if !state.held {
                    ps.phase = Phase::Seek;
                    continue;
                }
                let Some(c) = container else {
                    return (Action::new(state.ee, 0.0), ps);
                };
                let held_center = objects
                    .iter()
                    .filter(|o| o.center.distance(state.ee) <= ctx.world.grasp_radius + 1e-9)
                    .min_by(|a, b| a.center.distance(state.ee).total_cmp(&b.center.distance(state.ee)))
                    .map_or(state.ee, |o| o.center);
                let offset = held_center - state.ee;
                let goal = Vec3::new(c.x - offset.x, c.y - offset.y, hover);
                if state.ee.distance(goal) <= 1e-6 {
                    ps.phase = Phase::Open;
                    continue;
                }
                return (Action::new(toward(ctx, state.ee, goal), 0.0), ps);
            }
            Phase::Open => {
                if !state.held {
                    ps.phase = Phase::Done;
                    continue;
                }
                return (Action::new(state.ee, 1.0), ps);
            }
            Phase::Done => return (Action::new(state.ee, 1.0), ps),
        }
    }
    (hold, ps)
}

/// Gripper command for factorized control, where the arm pose comes from
/// elsewhere: open while seeking, closed once within grasp range of the
/// locked object, open again when the held object is over the container.
pub fn hand_component(obs: &[f64], state: &RobotState, ps: &PolicyState, ctx: &PolicyContext) -> (f64, PolicyState) {
    let mut ps = ps.clone();
    let objects = ctx.layout.objects(obs);
    if !ps.started {
        ps.started = true;
        ps.locked_target = select_target(ctx, &objects, state, &mut ps);
    }
    let lock = ps.locked_target.and_then(|id| find(&objects, id)).map(|o| o.center);
    let container = ctx.layout.container(obs, slot_of(ctx.task.container_id));
    ps.phase = match ps.phase {
        Phase::Done => Phase::Done,
        _ if state.held => match container {
            Some(c) if state.ee.distance_xy(c) <= ctx.world.container_radius => Phase::Open,
            _ => Phase::Transport,
        },
        Phase::Open | Phase::Transport => Phase::Done,
        _ => match lock {
            Some(l) if state.ee.distance(l) <= 0.75 * ctx.world.grasp_radius => Phase::Close,
            _ => Phase::Seek,
        },
    };
    let command = match ps.phase {
        Phase::Close | Phase::Lift | Phase::Transport => 0.0,
        _ => 1.0,
    };
    (command, ps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{perception, step, ObjectKind, SceneObject, SceneState};

    fn ctx_parts() -> (WorldConfig, ObservationLayout) {
        let w = WorldConfig::default();
        let l = w.layout();
        (w, l)
    }

    fn scene(w: &WorldConfig, ee: Vec3, objs: &[(ObjectKind, Vec3)]) -> (SceneState, TaskSpec) {
        let rz = w.rest_height(w.object_radius);
        let objects = objs
            .iter()
            .enumerate()
            .map(|(i, &(k, p))| SceneObject::resting(ObjectId(i as u32), k, p.with_z(rz), w.object_radius))
            .collect();
        let containers = vec![SceneObject::resting(
            ObjectId(0),
            ObjectKind::Container,
            Vec3::new(0.8, 0.8, rz),
            w.container_radius,
        )];
        let s = SceneState::new(w, ee, objects, containers).unwrap();
        let t = TaskSpec {
            target_id: ObjectId(0),
            container_id: ObjectId(0),
            setting: crate::world::Setting::WristInvisible,
            condition: crate::world::Condition::Experimental,
        };
        (s, t)
    }

    fn run(w: &WorldConfig, s: &SceneState, ctx: &PolicyContext, steps: usize) -> (SceneState, PolicyState) {
        let mut s = s.clone();
        let mut ps = PolicyState::new(0);
        for _ in 0..steps {
            let (obs, st) = perception(&s, ctx.layout);
            let (a, next) = react(&obs.0, &st, &ps, ctx);
            ps = next;
            s = step(w, &s, &a);
            if ps.is_done() {
                break;
            }
        }
        (s, ps)
    }

    #[test]
    fn unconfounded_single_object_is_placed() {
        let (w, l) = ctx_parts();
        let (s, t) = scene(&w, Vec3::new(0.3, 0.3, 0.2), &[(ObjectKind::Can, Vec3::new(0.5, 0.4, 0.0))]);
        let cfg = LowLevelConfig::confound_free();
        let ctx = PolicyContext { world: &w, layout: &l, task: &t, cfg: &cfg };
        let (end, ps) = run(&w, &s, &ctx, 300);
        assert_eq!(ps.locked_target, Some(ObjectId(0)));
        assert!(ps.is_done());
        let d = end.objects[0].center.distance(end.containers[0].center);
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn wrist_reliance_locks_visible_distractor() {
        let (w, l) = ctx_parts();
        let ee = Vec3::new(0.3, 0.3, 0.2);
        let (s, t) = scene(
            &w,
            ee,
            &[(ObjectKind::Can, Vec3::new(0.7, 0.3, 0.0)), (ObjectKind::Ball, Vec3::new(0.32, 0.3, 0.0))],
        );
        let cfg = LowLevelConfig {
            wrist_reliance: true,
            ..LowLevelConfig::confound_free()
        };
        let ctx = PolicyContext { world: &w, layout: &l, task: &t, cfg: &cfg };
        let (obs, st) = perception(&s, &l);
        let (_, ps) = react(&obs.0, &st, &PolicyState::new(1), &ctx);
        assert_eq!(ps.locked_target, Some(ObjectId(1)));
    }

    #[test]
    fn forced_confusion_picks_similar_object() {
        let (w, l) = ctx_parts();
        let (s, t) = scene(
            &w,
            Vec3::new(0.2, 0.2, 0.2),
            &[(ObjectKind::Fruit, Vec3::new(0.5, 0.5, 0.0)), (ObjectKind::Fruit, Vec3::new(0.58, 0.5, 0.0))],
        );
        let cfg = LowLevelConfig {
            similar_confusion_prob: 1.0,
            ..LowLevelConfig::confound_free()
        };
        let ctx = PolicyContext { world: &w, layout: &l, task: &t, cfg: &cfg };
        let (obs, st) = perception(&s, &l);
        for seed in 0..10 {
            let (_, ps) = react(&obs.0, &st, &PolicyState::new(seed), &ctx);
            assert_ne!(ps.locked_target, Some(t.target_id));
        }
    }

    #[test]
    fn pass_by_capture_retargets_once() {
        let (w, l) = ctx_parts();
        let (s, t) = scene(
            &w,
            Vec3::new(0.2, 0.5, 0.2),
            &[(ObjectKind::Can, Vec3::new(0.8, 0.5, 0.0)), (ObjectKind::Ball, Vec3::new(0.5, 0.5, 0.0))],
        );
        let cfg = LowLevelConfig {
            passby_capture_prob: 1.0,
            ..LowLevelConfig::confound_free()
        };
        let ctx = PolicyContext { world: &w, layout: &l, task: &t, cfg: &cfg };
        let (_, ps) = run(&w, &s, &ctx, 400);
        assert_eq!(ps.locked_target, Some(ObjectId(1)));
    }

    #[test]
    fn no_objects_means_hold() {
        let (w, l) = ctx_parts();
        let (s, t) = scene(&w, Vec3::new(0.4, 0.4, 0.2), &[]);
        let cfg = LowLevelConfig::default();
        let ctx = PolicyContext { world: &w, layout: &l, task: &t, cfg: &cfg };
        let (obs, st) = perception(&s, &l);
        let (a, _) = react(&obs.0, &st, &PolicyState::new(0), &ctx);
        assert_eq!(a, Action::new(s.ee, s.aperture));
    }

    #[test]
    fn hand_component_contract() {
        let (w, l) = ctx_parts();
        let cfg = LowLevelConfig::confound_free();
        let (far, t) = scene(&w, Vec3::new(0.2, 0.2, 0.2), &[(ObjectKind::Can, Vec3::new(0.6, 0.6, 0.0))]);
        let ctx = PolicyContext { world: &w, layout: &l, task: &t, cfg: &cfg };
        let (obs, st) = perception(&far, &l);
        let (cmd, ps) = hand_component(&obs.0, &st, &PolicyState::new(0), &ctx);
        assert_eq!((cmd, ps.phase), (1.0, Phase::Seek));

        let at = Vec3::new(0.6, 0.6, w.rest_height(w.object_radius));
        let (near, _) = scene(&w, at, &[(ObjectKind::Can, Vec3::new(0.6, 0.6, 0.0))]);
        let (obs, st) = perception(&near, &l);
        let (cmd, ps) = hand_component(&obs.0, &st, &ps, &ctx);
        assert_eq!(ps.phase, Phase::Close);
        assert!(cmd < w.grasp_close_threshold);
        assert!((0.0..=1.0).contains(&cmd));
    }

    #[test]
    fn lock_is_stable_after_close_begins() {
        let (w, l) = ctx_parts();
        let (s, t) = scene(
            &w,
            Vec3::new(0.2, 0.5, 0.2),
            &[(ObjectKind::Can, Vec3::new(0.6, 0.5, 0.0)), (ObjectKind::Can, Vec3::new(0.66, 0.55, 0.0))],
        );
        let cfg = LowLevelConfig::default();
        let ctx = PolicyContext { world: &w, layout: &l, task: &t, cfg: &cfg };
        let mut s = s;
        let mut ps = PolicyState::new(3);
        let mut locked_at_close = None;
        for _ in 0..300 {
            let (obs, st) = perception(&s, &l);
            let (a, next) = react(&obs.0, &st, &ps, &ctx);
            if next.phase == Phase::Close && locked_at_close.is_none() {
                locked_at_close = next.locked_target;
            }
            if locked_at_close.is_some() {
                assert_eq!(next.locked_target, locked_at_close);
            }
            ps = next;
            s = step(&w, &s, &a);
        }
        assert!(locked_at_close.is_some());
    }
}
