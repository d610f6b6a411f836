//! Samples a scene, scripts a grasp by hand and prints the state as it goes.

use gated_idm::world::{perception, reset_and_sample_task, step, Action, Condition, Setting, Vec3, WorldConfig};

fn main() {
    let cfg = WorldConfig::default();
    let (mut scene, task) = reset_and_sample_task(&cfg, Setting::PassBy, Condition::Control, 7).expect("scene");
    let target = scene.object(task.target_id).expect("target").center;
    println!("target {:?} at {:?}, container {:?}", task.target_id, target, task.container_id);

    let hover = Vec3::new(target.x, target.y, cfg.hover_height);
    let mut script = vec![Action::new(hover, 1.0); 40];
    script.extend(std::iter::repeat_n(Action::new(target, 1.0), 20));
    script.extend(std::iter::repeat_n(Action::new(target, 0.0), 10));
    script.extend(std::iter::repeat_n(Action::new(hover, 0.0), 10));

    for (i, a) in script.iter().enumerate() {
        scene = step(&cfg, &scene, a);
        if i % 10 == 9 {
            println!(
                "step {:>3}: ee=({:.3}, {:.3}, {:.3}) aperture={:.2} held={:?}",
                scene.step_index, scene.ee.x, scene.ee.y, scene.ee.z, scene.aperture, scene.held_id()
            );
        }
    }
    let (obs, state) = perception(&scene, &cfg.layout());
    println!("observation width {}, robot state {:?}", obs.len(), state);
}
