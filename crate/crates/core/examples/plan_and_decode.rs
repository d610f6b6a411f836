//! Generates a corrupted frame plan, decodes it into actions with a freshly
//! trained model and compares against the oracle actions.
//!
//! Usage: `plan_and_decode [quick]`

use gated_idm::harness::{collect_random_play, PlayConfig};
use gated_idm::idm::{train, TrainConfig};
use gated_idm::planner::{generate, oracle_plan, CorruptionModel, PlannerConfig};
use gated_idm::world::{perception, reset_and_sample_task, Condition, Setting, WorldConfig};

fn main() {
    let quick = std::env::args().any(|a| a == "quick");
    let world = WorldConfig::default();
    let play = PlayConfig {
        num_samples: if quick { 15_000 } else { 50_000 },
        ..PlayConfig::default()
    };
    let mut tcfg = TrainConfig::default();
    if quick {
        tcfg.epochs = 4;
    }
    let data = collect_random_play(&world, &play).expect("collect");
    let model = train(&data, world.layout(), world.bounds, &tcfg, 0).expect("train").0;

    let (scene, task) = reset_and_sample_task(&world, Setting::SimilarDistractors, Condition::Control, 3).expect("scene");
    let (obs, state) = perception(&scene, &world.layout());
    let clean = PlannerConfig::default();
    let oracle = oracle_plan(&scene, &task, &world, &clean).expect("oracle");

    for (name, corruption) in [("clean", CorruptionModel::NONE), ("high interaction", CorruptionModel::HIGH_INTERACTION)] {
        let pcfg = PlannerConfig {
            corruption,
            ..PlannerConfig::default()
        };
        let (traj, meta) = generate(&obs, &scene, &task, &pcfg, &world, 11).expect("plan");
        let chunk = model.predict_chunk(&traj, &state).expect("decode");
        let err: f64 = chunk
            .actions
            .iter()
            .zip(&oracle.actions)
            .map(|(a, b)| (a.pose - b.pose).norm())
            .sum::<f64>()
            / chunk.len() as f64;
        let high = chunk.predicted_gates.iter().filter(|&&g| g >= 0.5).count();
        let labelled = oracle.gates.iter().filter(|&&g| g).count();
        println!(
            "{name:>16}: {} frames, mean pose error vs oracle {err:.4}, gate high on {high} steps (oracle {labelled}), truncated {:?}",
            traj.len(),
            meta.truncated_at
        );
    }
}
