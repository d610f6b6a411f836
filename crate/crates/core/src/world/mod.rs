//! Kinematic pick-and-place world.
//!
//! Everything here is value-typed: [`step`] maps a [`SceneState`] and an
//! [`Action`] to the next state without touching shared data, so episodes can
//! run side by side. Objects and containers are spheres, the gripper is a point
//! with a scalar aperture, and grasping is decided by two aperture thresholds
//! (close below one, release above the other).

mod geometry;
mod perception;
mod sampling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::{point_segment_distance, Bounds, Vec3};
pub use perception::{perception, Observation, ObservationLayout, RobotState, SlotView};
pub use sampling::reset_and_sample_task;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("could not place {what} after {attempts} attempts")]
    PlacementInfeasible { what: &'static str, attempts: usize },
    #[error("scene holds {count} {what} but the layout has {capacity} slots")]
    Capacity {
        what: &'static str,
        count: usize,
        capacity: usize,
    },
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Semantic class of a graspable object. Two objects with the same kind are
/// "similar" in the sense used by the distractor settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Block,
    Ball,
    Can,
    Fruit,
    Container,
}

impl ObjectKind {
    pub const GRASPABLE: [ObjectKind; 4] = [
        ObjectKind::Block,
        ObjectKind::Ball,
        ObjectKind::Can,
        ObjectKind::Fruit,
    ];

    /// Numeric code written into observation vectors.
    pub fn code(self) -> f64 {
        match self {
            ObjectKind::Block => 1.0,
            ObjectKind::Ball => 2.0,
            ObjectKind::Can => 3.0,
            ObjectKind::Fruit => 4.0,
            ObjectKind::Container => 5.0,
        }
    }

    pub fn from_code(code: f64) -> Option<ObjectKind> {
        match code.round() as i64 {
            1 => Some(ObjectKind::Block),
            2 => Some(ObjectKind::Ball),
            3 => Some(ObjectKind::Can),
            4 => Some(ObjectKind::Fruit),
            5 => Some(ObjectKind::Container),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub kind: ObjectKind,
    pub center: Vec3,
    pub radius: f64,
    /// Displacement over the most recent step.
    pub velocity: Vec3,
}

impl SceneObject {
    pub fn resting(id: ObjectId, kind: ObjectKind, center: Vec3, radius: f64) -> Self {
        Self {
            id,
            kind,
            center,
            radius,
            velocity: Vec3::ZERO,
        }
    }
}

/// An active grasp: the held object keeps `offset` relative to the gripper.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grasp {
    pub object: ObjectId,
    pub offset: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub ee: Vec3,
    /// 0 = closed, 1 = open.
    pub aperture: f64,
    pub held: Option<Grasp>,
    pub objects: Vec<SceneObject>,
    pub containers: Vec<SceneObject>,
    pub step_index: u64,
}

impl SceneState {
    /// Builds a scene, checking it fits the observation layout of `cfg`.
    pub fn new(
        cfg: &WorldConfig,
        ee: Vec3,
        objects: Vec<SceneObject>,
        containers: Vec<SceneObject>,
    ) -> Result<Self, WorldError> {
        if objects.len() > cfg.max_objects {
            return Err(WorldError::Capacity {
                what: "objects",
                count: objects.len(),
                capacity: cfg.max_objects,
            });
        }
        if containers.len() > cfg.max_containers {
            return Err(WorldError::Capacity {
                what: "containers",
                count: containers.len(),
                capacity: cfg.max_containers,
            });
        }
        Ok(Self {
            ee,
            aperture: 1.0,
            held: None,
            objects,
            containers,
            step_index: 0,
        })
    }

    pub fn object(&self, id: ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn container(&self, id: ObjectId) -> Option<&SceneObject> {
        self.containers.iter().find(|o| o.id == id)
    }

    pub fn held_id(&self) -> Option<ObjectId> {
        self.held.map(|g| g.object)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    WristInvisible,
    SimilarDistractors,
    PassBy,
    RicherSemantics,
}

impl Setting {
    pub const ALL: [Setting; 4] = [
        Setting::WristInvisible,
        Setting::SimilarDistractors,
        Setting::PassBy,
        Setting::RicherSemantics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::WristInvisible => "wrist_invisible",
            Setting::SimilarDistractors => "similar_distractors",
            Setting::PassBy => "pass_by",
            Setting::RicherSemantics => "richer_semantics",
        }
    }

    pub fn code(self) -> u64 {
        match self {
            Setting::WristInvisible => 0,
            Setting::SimilarDistractors => 1,
            Setting::PassBy => 2,
            Setting::RicherSemantics => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Control,
    Experimental,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::Control, Condition::Experimental];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Control => "control",
            Condition::Experimental => "experimental",
        }
    }

    pub fn code(self) -> u64 {
        match self {
            Condition::Control => 0,
            Condition::Experimental => 1,
        }
    }
}

macro_rules! label_enum_text {
    ($ty:ty, $what:literal) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.pad(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| format!("unknown {} `{}`", $what, s))
            }
        }
    };
}

label_enum_text!(Setting, "setting");
label_enum_text!(Condition, "condition");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub target_id: ObjectId,
    pub container_id: ObjectId,
    pub setting: Setting,
    pub condition: Condition,
}

/// Absolute end-effector target plus gripper aperture command.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub pose: Vec3,
    pub aperture: f64,
}

impl Action {
    pub const DIM: usize = 4;

    pub fn new(pose: Vec3, aperture: f64) -> Self {
        Self { pose, aperture }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.pose.x, self.pose.y, self.pose.z, self.aperture]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(Vec3::new(s[0], s[1], s[2]), s[3])
    }

    pub fn is_finite(&self) -> bool {
        self.pose.is_finite() && self.aperture.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub bounds: Bounds,
    pub grasp_radius: f64,
    /// Height of the table surface; resting objects sit with their center
    /// one radius above it.
    pub table_height: f64,
    pub max_step_displacement: f64,
    /// Largest aperture change per step.
    pub max_aperture_rate: f64,
    pub wrist_fov_radius: f64,
    pub grasp_close_threshold: f64,
    pub grasp_open_threshold: f64,
    pub max_objects: usize,
    pub max_containers: usize,
    pub object_radius: f64,
    pub container_radius: f64,
    /// Initial gripper height and cruise height for scripted motions.
    pub hover_height: f64,
    pub corridor_radius: f64,
    pub similar_proximity: f64,
    pub min_separation: f64,
    pub placement_attempts: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            bounds: Bounds::default(),
            grasp_radius: 0.04,
            table_height: 0.1,
            max_step_displacement: 0.02,
            max_aperture_rate: 0.15,
            wrist_fov_radius: 0.15,
            grasp_close_threshold: 0.35,
            grasp_open_threshold: 0.65,
            max_objects: 4,
            max_containers: 2,
            object_radius: 0.025,
            container_radius: 0.06,
            hover_height: 0.2,
            corridor_radius: 0.06,
            similar_proximity: 0.12,
            min_separation: 0.075,
            placement_attempts: 1000,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidConfig(m.to_string()));
        if !(self.grasp_radius > 0.0) {
            return bad("grasp_radius must be > 0");
        }
        if !(self.wrist_fov_radius > 0.0) {
            return bad("wrist_fov_radius must be > 0");
        }
        if !(self.max_step_displacement > 0.0) || !(self.max_aperture_rate > 0.0) {
            return bad("rate limits must be > 0");
        }
        if !(self.grasp_close_threshold < self.grasp_open_threshold) {
            return bad("grasp_close_threshold must be below grasp_open_threshold");
        }
        if !(self.object_radius > 0.0) || !(self.container_radius > 0.0) {
            return bad("radii must be > 0");
        }
        if self.max_objects == 0 || self.max_containers == 0 {
            return bad("layout needs at least one object and one container slot");
        }
        Ok(())
    }

    /// Height of a resting object's center.
    pub fn rest_height(&self, radius: f64) -> f64 {
        self.table_height + radius
    }

    pub fn layout(&self) -> ObservationLayout {
        ObservationLayout::new(self.max_objects, self.max_containers)
    }
}

/// `max(0, |p - c| - r)`: distance from a point to a sphere's surface,
/// zero inside the sphere.
pub fn point_to_surface_distance(p: Vec3, obj: &SceneObject) -> f64 {
    (p.distance(obj.center) - obj.radius).max(0.0)
}

/// The wrist camera is modeled as a closed ball around the gripper.
pub fn wrist_visible(scene: &SceneState, obj: &SceneObject, cfg: &WorldConfig) -> bool {
    scene.ee.distance(obj.center) <= cfg.wrist_fov_radius
}

/// One kinematic transition.
///
/// The gripper moves toward the commanded pose by at most
/// `max_step_displacement`, the aperture by at most `max_aperture_rate`.
/// A grasp binds the nearest free object within `grasp_radius` when the
/// aperture crosses below the close threshold; it releases when the aperture
/// crosses above the open threshold, and the released object drops onto the
/// table.
pub fn step(cfg: &WorldConfig, scene: &SceneState, action: &Action) -> SceneState {
    let mut next = scene.clone();
    next.step_index += 1;

    let commanded = if action.pose.is_finite() {
        action.pose
    } else {
        scene.ee
    };
    let delta = (commanded - scene.ee).clamp_norm(cfg.max_step_displacement);
    next.ee = cfg.bounds.clamp(scene.ee + delta);

    let target_aperture = if action.aperture.is_finite() {
        action.aperture.clamp(0.0, 1.0)
    } else {
        scene.aperture
    };
    let da = (target_aperture - scene.aperture).clamp(-cfg.max_aperture_rate, cfg.max_aperture_rate);
    next.aperture = (scene.aperture + da).clamp(0.0, 1.0);

    let closed_through = scene.aperture >= cfg.grasp_close_threshold
        && next.aperture < cfg.grasp_close_threshold;
    let opened_through =
        scene.aperture <= cfg.grasp_open_threshold && next.aperture > cfg.grasp_open_threshold;

    match next.held {
        Some(grasp) => {
            if opened_through {
                next.held = None;
                if let Some(obj) = next.objects.iter_mut().find(|o| o.id == grasp.object) {
                    obj.center = next.ee + grasp.offset;
                    obj.center.z = cfg.rest_height(obj.radius);
                }
            } else if let Some(obj) = next.objects.iter_mut().find(|o| o.id == grasp.object) {
                obj.center = next.ee + grasp.offset;
            }
        }
        None => {
            if closed_through {
                let ee = next.ee;
                let nearest = next
                    .objects
                    .iter()
                    .map(|o| (o.id, ee.distance(o.center), o.center))
                    .filter(|(_, d, _)| *d <= cfg.grasp_radius)
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                if let Some((id, _, center)) = nearest {
                    next.held = Some(Grasp {
                        object: id,
                        offset: center - ee,
                    });
                }
            }
        }
    }

    for (obj, prev) in next.objects.iter_mut().zip(&scene.objects) {
        obj.velocity = obj.center - prev.center;
    }
    for c in &mut next.containers {
        c.velocity = Vec3::ZERO;
    }
    next
}
