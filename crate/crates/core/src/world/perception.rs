use serde::{Deserialize, Serialize};

use super::{ObjectKind, SceneState, Vec3};

/// Flat global-view observation vector. See [`ObservationLayout`] for the
/// meaning of each entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Proprioceptive state: the part of an observation describing the robot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub ee: Vec3,
    pub aperture: f64,
    pub held: bool,
}

impl RobotState {
    pub const DIM: usize = 5;

    pub fn to_array(self) -> [f64; 5] {
        [
            self.ee.x,
            self.ee.y,
            self.ee.z,
            self.aperture,
            if self.held { 1.0 } else { 0.0 },
        ]
    }
}

/// Decoded object slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotView {
    pub slot: usize,
    pub kind: Option<ObjectKind>,
    pub center: Vec3,
}

/// Fixed observation layout:
///
/// ```text
/// [ee.x ee.y ee.z aperture held]
/// [kind x y z present] * max_objects      (ascending object id)
/// [x y z present]      * max_containers   (ascending container id)
/// ```
///
/// Absent slots are all zeros. Slots are filled in ascending id order, and
/// scenes built by [`reset_and_sample_task`](super::reset_and_sample_task)
/// use dense ids starting at 0, so slot `i` holds object `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationLayout {
    pub max_objects: usize,
    pub max_containers: usize,
}

const ROBOT_WIDTH: usize = 5;
const OBJECT_WIDTH: usize = 5;
const CONTAINER_WIDTH: usize = 4;

impl ObservationLayout {
    pub fn new(max_objects: usize, max_containers: usize) -> Self {
        Self {
            max_objects,
            max_containers,
        }
    }

    pub fn width(&self) -> usize {
        ROBOT_WIDTH + OBJECT_WIDTH * self.max_objects + CONTAINER_WIDTH * self.max_containers
    }

    pub fn object_offset(&self, slot: usize) -> usize {
        ROBOT_WIDTH + OBJECT_WIDTH * slot
    }

    pub fn container_offset(&self, slot: usize) -> usize {
        ROBOT_WIDTH + OBJECT_WIDTH * self.max_objects + CONTAINER_WIDTH * slot
    }

    /// Entries that carry positions: gripper, object and container xyz.
    pub fn pose_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.width()];
        mask[..3].fill(true);
        for i in 0..self.max_objects {
            let o = self.object_offset(i);
            mask[o + 1..o + 4].fill(true);
        }
        for j in 0..self.max_containers {
            let o = self.container_offset(j);
            mask[o..o + 3].fill(true);
        }
        mask
    }

    /// Real-valued entries (positions and aperture). Flags and kind codes
    /// are excluded.
    pub fn continuous_mask(&self) -> Vec<bool> {
        let mut mask = self.pose_mask();
        mask[3] = true;
        mask
    }

    /// Pose entries restricted to present slots.
    pub fn present_pose_mask(&self, obs: &[f64]) -> Vec<bool> {
        let mut mask = self.pose_mask();
        for i in 0..self.max_objects {
            let o = self.object_offset(i);
            if obs[o + 4] == 0.0 {
                mask[o + 1..o + 4].fill(false);
            }
        }
        for j in 0..self.max_containers {
            let o = self.container_offset(j);
            if obs[o + 3] == 0.0 {
                mask[o..o + 3].fill(false);
            }
        }
        mask
    }

    pub fn robot_state(&self, obs: &[f64]) -> RobotState {
        RobotState {
            ee: Vec3::from_slice(&obs[0..3]),
            aperture: obs[3],
            held: obs[4] > 0.5,
        }
    }

    pub fn object(&self, obs: &[f64], slot: usize) -> Option<SlotView> {
        if slot >= self.max_objects {
            return None;
        }
        let o = self.object_offset(slot);
        (obs[o + 4] > 0.5).then(|| SlotView {
            slot,
            kind: ObjectKind::from_code(obs[o]),
            center: Vec3::from_slice(&obs[o + 1..o + 4]),
        })
    }

    pub fn objects(&self, obs: &[f64]) -> Vec<SlotView> {
        (0..self.max_objects).filter_map(|i| self.object(obs, i)).collect()
    }

    pub fn container(&self, obs: &[f64], slot: usize) -> Option<Vec3> {
        if slot >= self.max_containers {
            return None;
        }
        let o = self.container_offset(slot);
        (obs[o + 3] > 0.5).then(|| Vec3::from_slice(&obs[o..o + 3]))
    }
}

/// Global-view observation and proprioceptive state of `scene`.
pub fn perception(scene: &SceneState, layout: &ObservationLayout) -> (Observation, RobotState) {
    let mut v = vec![0.0; layout.width()];
    v[0..3].copy_from_slice(&scene.ee.to_array());
    v[3] = scene.aperture;
    v[4] = if scene.held.is_some() { 1.0 } else { 0.0 };

    let mut objects: Vec<_> = scene.objects.iter().collect();
    objects.sort_by_key(|o| o.id);
    for (slot, obj) in objects.iter().take(layout.max_objects).enumerate() {
        let o = layout.object_offset(slot);
        v[o] = obj.kind.code();
        v[o + 1..o + 4].copy_from_slice(&obj.center.to_array());
        v[o + 4] = 1.0;
    }

    let mut containers: Vec<_> = scene.containers.iter().collect();
    containers.sort_by_key(|c| c.id);
    for (slot, c) in containers.iter().take(layout.max_containers).enumerate() {
        let o = layout.container_offset(slot);
        v[o..o + 3].copy_from_slice(&c.center.to_array());
        v[o + 3] = 1.0;
    }

    let state = RobotState {
        ee: scene.ee,
        aperture: scene.aperture,
        held: scene.held.is_some(),
    };
    (Observation(v), state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ObjectId, SceneObject, WorldConfig};

    #[test]
    fn width_matches_documented_layout() {
        let layout = ObservationLayout::new(4, 2);
        assert_eq!(layout.width(), 5 + 5 * 4 + 4 * 2);
        assert_eq!(ObservationLayout::new(7, 3).width(), 5 + 35 + 12);
    }

    #[test]
    fn robot_only_scene_has_empty_slots() {
        let cfg = WorldConfig::default();
        let scene = SceneState::new(&cfg, Vec3::new(0.5, 0.5, 0.2), vec![], vec![]).unwrap();
        let layout = cfg.layout();
        let (obs, state) = perception(&scene, &layout);
        assert_eq!(obs.len(), layout.width());
        assert!(obs.0[5..].iter().all(|&x| x == 0.0));
        assert_eq!(state.ee, scene.ee);
        assert_eq!(layout.robot_state(&obs.0), state);
        assert!(layout.objects(&obs.0).is_empty());
    }

    #[test]
    fn slots_follow_id_order_and_decode() {
        let cfg = WorldConfig::default();
        let objs = vec![
            SceneObject::resting(ObjectId(1), ObjectKind::Can, Vec3::new(0.1, 0.2, 0.3), 0.02),
            SceneObject::resting(ObjectId(0), ObjectKind::Ball, Vec3::new(0.4, 0.5, 0.6), 0.02),
        ];
        let scene = SceneState::new(&cfg, Vec3::ZERO, objs, vec![]).unwrap();
        let layout = cfg.layout();
        let (obs, _) = perception(&scene, &layout);
        let views = layout.objects(&obs.0);
        assert_eq!(views.len(), 2);
        assert_eq!(views[0].kind, Some(ObjectKind::Ball));
        assert_eq!(views[1].center, Vec3::new(0.1, 0.2, 0.3));
        assert_eq!(perception(&scene, &layout), (obs, layout.robot_state(&perception(&scene, &layout).0 .0)));
    }

    #[test]
    fn masks_skip_flags_and_codes() {
        let layout = ObservationLayout::new(2, 1);
        let pose = layout.pose_mask();
        let cont = layout.continuous_mask();
        assert!(!pose[3] && cont[3]);
        assert!(!pose[4] && !cont[4]);
        let o = layout.object_offset(1);
        assert!(!pose[o] && pose[o + 1] && !pose[o + 4]);
        let c = layout.container_offset(0);
        assert!(pose[c + 2] && !pose[c + 3]);
        assert_eq!(pose.iter().filter(|&&b| b).count(), 3 + 3 * 2 + 3);
    }
}
