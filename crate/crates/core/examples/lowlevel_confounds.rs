//! Success of the reactive low-level policy with and without its
//! confounds, per setting and condition.
//!
//! Usage: `lowlevel_confounds [trials]`

use gated_idm::executor::{run_episode, Components, EpisodeSpec, ExecutorConfig, Method};
use gated_idm::harness::scene_seed;
use gated_idm::lowlevel::LowLevelConfig;
use gated_idm::metrics::{overall_success, MetricsConfig};
use gated_idm::planner::PlannerConfig;
use gated_idm::smoother::SmootherConfig;
use gated_idm::world::{Condition, Setting, WorldConfig};

fn main() {
    let trials: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let world = WorldConfig::default();
    let planner = PlannerConfig::default();
    let smoother = SmootherConfig::default();
    let metrics = MetricsConfig::default();
    let exec = ExecutorConfig::default();

    println!("{:<20} {:<13} {:>9} {:>13}", "setting", "condition", "confounds", "confound-free");
    for setting in Setting::ALL {
        for condition in Condition::ALL {
            let mut wins = [0; 2];
            for (i, lowlevel) in [LowLevelConfig::default(), LowLevelConfig::confound_free()].iter().enumerate() {
                let c = Components {
                    world: &world,
                    planner: &planner,
                    model: None,
                    smoother: &smoother,
                    lowlevel,
                    metrics: &metrics,
                    exec: &exec,
                };
                for t in 0..trials {
                    let spec = EpisodeSpec {
                        setting,
                        condition,
                        scene_seed: scene_seed(1, setting, condition, t),
                    };
                    let log = run_episode(Method::LowlevelOnly, &c, &spec).expect("episode");
                    wins[i] += usize::from(overall_success(&log, &metrics));
                }
            }
            println!("{setting:<20} {condition:<13} {:>6}/{trials} {:>10}/{trials}", wins[0], wins[1]);
        }
    }
}
