//! Runs a couple of low-level episodes, saves them and prints a trace read
//! back from disk.

use gated_idm::cli::render_trace;
use gated_idm::executor::{run_episode, Components, EpisodeSpec, ExecutorConfig, Method};
use gated_idm::harness::{load_logs, save_logs};
use gated_idm::lowlevel::LowLevelConfig;
use gated_idm::metrics::MetricsConfig;
use gated_idm::planner::PlannerConfig;
use gated_idm::smoother::SmootherConfig;
use gated_idm::world::{Condition, Setting, WorldConfig};

fn main() {
    let world = WorldConfig::default();
    let (planner, smoother, lowlevel, metrics, exec) = (
        PlannerConfig::default(),
        SmootherConfig::default(),
        LowLevelConfig::default(),
        MetricsConfig::default(),
        ExecutorConfig::default(),
    );
    let c = Components {
        world: &world,
        planner: &planner,
        model: None,
        smoother: &smoother,
        lowlevel: &lowlevel,
        metrics: &metrics,
        exec: &exec,
    };
    let logs: Vec<_> = [Setting::PassBy, Setting::WristInvisible]
        .into_iter()
        .map(|setting| {
            let spec = EpisodeSpec {
                setting,
                condition: Condition::Experimental,
                scene_seed: 42,
            };
            run_episode(Method::LowlevelOnly, &c, &spec).expect("episode")
        })
        .collect();

    let dir = tempfile_dir();
    let path = dir.join("episodes.jsonl");
    save_logs(&path, world.layout().width(), &logs).expect("save");
    let back = load_logs(&path).expect("load");
    assert_eq!(back, logs);
    for (i, log) in back.iter().enumerate() {
        let trace = render_trace(i, log);
        let mut lines = trace.lines();
        println!("{}", lines.next().unwrap_or_default());
        for l in lines.step_by(25) {
            println!("{l}");
        }
    }
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join("gated-idm-replay");
    std::fs::create_dir_all(&d).expect("temp dir");
    d
}
