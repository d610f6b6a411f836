use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    point_segment_distance, Condition, ObjectId, ObjectKind, SceneObject, SceneState, Setting,
    TaskSpec, Vec3, WorldConfig, WorldError,
};

const TABLE_MARGIN: f64 = 0.1;
const CONTAINER_CLEARANCE: f64 = 0.25;

struct Draft {
    ee: Vec3,
    target: (ObjectKind, Vec3),
    confounders: Vec<(ObjectKind, Vec3)>,
    containers: Vec<Vec3>,
    task_container: usize,
}

/// Samples a scene realizing `setting`'s confound, plus the pick-and-place
/// task on it.
///
/// The experimental geometry is always drawn; the control condition then
/// drops the confounding objects, so both conditions of one seed share the
/// target, container and start pose.
pub fn reset_and_sample_task(
    cfg: &WorldConfig,
    setting: Setting,
    condition: Condition,
    seed: u64,
) -> Result<(SceneState, TaskSpec), WorldError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draft = (0..cfg.placement_attempts)
        .find_map(|_| try_draft(cfg, setting, &mut rng))
        .ok_or(WorldError::PlacementInfeasible {
            what: "scene",
            attempts: cfg.placement_attempts,
        })?;

    let mut specs = vec![draft.target];
    if condition == Condition::Experimental {
        specs.extend(draft.confounders.iter().copied());
    }
    let mut ids: Vec<u32> = (0..specs.len() as u32).collect();
    ids.shuffle(&mut rng);

    let rest_z = cfg.rest_height(cfg.object_radius);
    let mut objects: Vec<SceneObject> = specs
        .iter()
        .zip(&ids)
        .map(|(&(kind, p), &id)| SceneObject::resting(ObjectId(id), kind, p.with_z(rest_z), cfg.object_radius))
        .collect();
    let target_id = objects[0].id;
    objects.sort_by_key(|o| o.id);

    let containers = draft
        .containers
        .iter()
        .enumerate()
        .map(|(i, p)| {
            SceneObject::resting(ObjectId(i as u32), ObjectKind::Container, p.with_z(rest_z), cfg.container_radius)
        })
        .collect();

    let scene = SceneState::new(cfg, draft.ee, objects, containers)?;
    let task = TaskSpec {
        target_id,
        container_id: ObjectId(draft.task_container as u32),
        setting,
        condition,
    };
    Ok((scene, task))
}

fn table_point(cfg: &WorldConfig, rng: &mut ChaCha8Rng) -> Vec3 {
    let b = &cfg.bounds;
    Vec3::new(
        rng.random_range(b.min.x + TABLE_MARGIN..b.max.x - TABLE_MARGIN),
        rng.random_range(b.min.y + TABLE_MARGIN..b.max.y - TABLE_MARGIN),
        cfg.rest_height(cfg.object_radius),
    )
}

fn on_table(cfg: &WorldConfig, p: Vec3) -> bool {
    let b = &cfg.bounds;
    (b.min.x + TABLE_MARGIN..=b.max.x - TABLE_MARGIN).contains(&p.x)
        && (b.min.y + TABLE_MARGIN..=b.max.y - TABLE_MARGIN).contains(&p.y)
}

fn point_near(center: Vec3, r_min: f64, r_max: f64, rng: &mut ChaCha8Rng) -> Vec3 {
    let r = rng.random_range(r_min..=r_max);
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    Vec3::new(center.x + r * theta.cos(), center.y + r * theta.sin(), center.z)
}

fn other_kind(kind: ObjectKind, rng: &mut ChaCha8Rng) -> ObjectKind {
    let others: Vec<_> = ObjectKind::GRASPABLE.into_iter().filter(|&k| k != kind).collect();
    others[rng.random_range(0..others.len())]
}

fn separated(cfg: &WorldConfig, p: Vec3, placed: &[Vec3]) -> bool {
    placed.iter().all(|q| p.distance_xy(*q) >= cfg.min_separation)
}

fn try_draft(cfg: &WorldConfig, setting: Setting, rng: &mut ChaCha8Rng) -> Option<Draft> {
    let b = &cfg.bounds;
    let ee = Vec3::new(
        b.min.x + (b.max.x - b.min.x) * rng.random_range(0.25..0.75),
        b.min.y + (b.max.y - b.min.y) * rng.random_range(0.25..0.75),
        cfg.hover_height,
    );
    let target_kind = ObjectKind::GRASPABLE[rng.random_range(0..ObjectKind::GRASPABLE.len())];
    let target = table_point(cfg, rng);
    let reach = ee.distance_xy(target);
    let visible = |p: Vec3| ee.distance(p) <= cfg.wrist_fov_radius;

    let mut confounders = Vec::new();
    match setting {
        Setting::WristInvisible => {
            if reach < 2.0 * cfg.wrist_fov_radius {
                return None;
            }
            let p = point_near(ee.with_z(target.z), 0.0, cfg.wrist_fov_radius, rng);
            if !visible(p) || !on_table(cfg, p) {
                return None;
            }
            confounders.push((other_kind(target_kind, rng), p));
        }
        Setting::SimilarDistractors => {
            if !(0.2..=0.5).contains(&reach) {
                return None;
            }
            let p = point_near(target, cfg.min_separation, cfg.similar_proximity, rng);
            if !on_table(cfg, p) {
                return None;
            }
            confounders.push((target_kind, p));
        }
        Setting::PassBy => {
            if reach < 3.0 * cfg.wrist_fov_radius {
                return None;
            }
            let f = rng.random_range(0.35..0.65);
            let lateral = rng.random_range(-0.02..0.02);
            let along = target - ee.with_z(target.z);
            let normal = Vec3::new(-along.y, along.x, 0.0) * (1.0 / along.norm());
            let p = ee.with_z(target.z).lerp(target, f) + normal * lateral;
            if point_segment_distance(p, ee, target) > cfg.corridor_radius
                || visible(p)
                || !on_table(cfg, p)
            {
                return None;
            }
            confounders.push((other_kind(target_kind, rng), p));
        }
        Setting::RicherSemantics => {
            if !(0.2..=0.6).contains(&reach) {
                return None;
            }
            let extra = cfg.max_objects.saturating_sub(1).min(3);
            if extra >= 1 {
                let p = point_near(target, cfg.min_separation, cfg.similar_proximity, rng);
                if !on_table(cfg, p) {
                    return None;
                }
                confounders.push((target_kind, p));
            }
            for _ in 1..extra {
                confounders.push((other_kind(target_kind, rng), table_point(cfg, rng)));
            }
        }
    }

    let mut placed = vec![target];
    for &(_, p) in &confounders {
        if !separated(cfg, p, &placed) {
            return None;
        }
        placed.push(p);
    }

    let n_containers = if setting == Setting::RicherSemantics {
        cfg.max_containers.min(2)
    } else {
        1
    };
    let mut containers: Vec<Vec3> = Vec::new();
    for _ in 0..n_containers {
        let c = table_point(cfg, rng);
        if placed.iter().any(|p| p.distance_xy(c) < CONTAINER_CLEARANCE)
            || containers.iter().any(|q| q.distance_xy(c) < CONTAINER_CLEARANCE)
        {
            return None;
        }
        containers.push(c);
    }
    let task_container = rng.random_range(0..containers.len());

    Some(Draft {
        ee,
        target: (target_kind, target),
        confounders,
        containers,
        task_container,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::wrist_visible;

    #[test]
    fn same_inputs_same_scene() {
        let cfg = WorldConfig::default();
        for setting in Setting::ALL {
            let a = reset_and_sample_task(&cfg, setting, Condition::Experimental, 42).unwrap();
            let b = reset_and_sample_task(&cfg, setting, Condition::Experimental, 42).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn pass_by_distractor_lies_in_the_corridor() {
        let cfg = WorldConfig::default();
        let (scene, task) = reset_and_sample_task(&cfg, Setting::PassBy, Condition::Experimental, 7).unwrap();
        let target = scene.object(task.target_id).unwrap();
        let hit = scene
            .objects
            .iter()
            .filter(|o| o.id != task.target_id)
            .any(|o| point_segment_distance(o.center, scene.ee, target.center) <= cfg.corridor_radius);
        assert!(hit);
    }

    #[test]
    fn control_keeps_only_the_target() {
        let cfg = WorldConfig::default();
        let (scene, task) =
            reset_and_sample_task(&cfg, Setting::SimilarDistractors, Condition::Control, 1).unwrap();
        let kind = scene.object(task.target_id).unwrap().kind;
        assert_eq!(scene.objects.iter().filter(|o| o.kind == kind).count(), 1);
        assert_eq!(scene.objects.len(), 1);
        assert_eq!(task.target_id, ObjectId(0));
    }

    #[test]
    fn settings_realize_their_confounds() {
        let cfg = WorldConfig::default();
        for seed in 0..50 {
            let (s, t) = reset_and_sample_task(&cfg, Setting::WristInvisible, Condition::Experimental, seed).unwrap();
            let target = s.object(t.target_id).unwrap();
            assert!(!wrist_visible(&s, target, &cfg));
            assert!(s.objects.iter().any(|o| o.id != t.target_id && wrist_visible(&s, o, &cfg)));

            let (s, t) = reset_and_sample_task(&cfg, Setting::SimilarDistractors, Condition::Experimental, seed).unwrap();
            let target = s.object(t.target_id).unwrap();
            let twin = s.objects.iter().find(|o| o.id != t.target_id).unwrap();
            assert_eq!(twin.kind, target.kind);
            assert!(twin.center.distance(target.center) <= cfg.similar_proximity + 1e-12);

            let (s, t) = reset_and_sample_task(&cfg, Setting::RicherSemantics, Condition::Experimental, seed).unwrap();
            assert_eq!(s.objects.len(), 4);
            assert_eq!(s.containers.len(), 2);
            assert!(s.container(t.container_id).is_some());
            let mut ids: Vec<_> = s.objects.iter().map(|o| o.id.0).collect();
            ids.sort();
            assert_eq!(ids, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn cramped_workspace_is_infeasible() {
        let cfg = WorldConfig {
            bounds: crate::world::Bounds {
                min: Vec3::ZERO,
                max: Vec3::new(0.3, 0.3, 1.0),
            },
            placement_attempts: 50,
            ..WorldConfig::default()
        };
        let err = reset_and_sample_task(&cfg, Setting::PassBy, Condition::Experimental, 0).unwrap_err();
        assert!(matches!(err, WorldError::PlacementInfeasible { .. }));
    }
}
