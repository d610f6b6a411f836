//! Compares open-loop decoding, gated hand-over and the simultaneous mix on
//! plans with heavy distortion around the interaction.
//!
//! Usage: `hierarchical_vs_pure [quick]`

use gated_idm::executor::{run_episode, Components, EpisodeSpec, ExecutorConfig, Method};
use gated_idm::harness::{collect_random_play, scene_seed, PlayConfig};
use gated_idm::idm::{train, TrainConfig};
use gated_idm::lowlevel::LowLevelConfig;
use gated_idm::metrics::{instruction_follow_success, overall_success, MetricsConfig};
use gated_idm::planner::{CorruptionModel, PlannerConfig};
use gated_idm::smoother::SmootherConfig;
use gated_idm::world::{Condition, Setting, WorldConfig};

fn main() {
    let quick = std::env::args().any(|a| a == "quick");
    let world = WorldConfig::default();
    let mut tcfg = TrainConfig::default();
    if quick {
        tcfg.epochs = 4;
    }
    let data = collect_random_play(&world, &PlayConfig {
        num_samples: if quick { 15_000 } else { 50_000 },
        ..PlayConfig::default()
    })
    .expect("collect");
    let model = train(&data, world.layout(), world.bounds, &tcfg, 0).expect("train").0;

    let planner = PlannerConfig {
        corruption: CorruptionModel::HIGH_INTERACTION,
        ..PlannerConfig::default()
    };
    let smoother = SmootherConfig::default();
    let lowlevel = LowLevelConfig::confound_free();
    let metrics = MetricsConfig::default();
    let exec = ExecutorConfig::default();
    let c = Components {
        world: &world,
        planner: &planner,
        model: Some(&model),
        smoother: &smoother,
        lowlevel: &lowlevel,
        metrics: &metrics,
        exec: &exec,
    };
    let trials = if quick { 8 } else { 30 };
    for method in [Method::PureIdm, Method::Hierarchical, Method::Simultaneous] {
        let (mut instr, mut overall, mut switches) = (0, 0, 0);
        for t in 0..trials {
            let setting = Setting::ALL[t as usize % 4];
            let spec = EpisodeSpec {
                setting,
                condition: Condition::Control,
                scene_seed: scene_seed(5, setting, Condition::Control, t),
            };
            let log = run_episode(method, &c, &spec).expect("episode");
            instr += usize::from(instruction_follow_success(&log, &metrics));
            overall += usize::from(overall_success(&log, &metrics));
            switches += log.switches.len();
        }
        println!("{method:<14} instruction {instr:>2}/{trials}  overall {overall:>2}/{trials}  hand-overs {switches}");
    }
}
