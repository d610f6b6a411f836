//! Runs a small grid with every corruption switched on and tabulates what
//! went wrong.
//!
//! Usage: `failure_taxonomy [quick]`

use gated_idm::executor::Method;
use gated_idm::harness::{prepare_model, run_experiment, ExperimentConfig};
use gated_idm::metrics::render_table;
use gated_idm::planner::CorruptionModel;

fn main() {
    let quick = std::env::args().any(|a| a == "quick");
    let mut cfg = ExperimentConfig {
        trials: if quick { 4 } else { 20 },
        methods: vec![Method::PureIdm, Method::Hierarchical],
        ..ExperimentConfig::default()
    };
    cfg.planner.corruption = CorruptionModel {
        interaction_noise_sigma: 0.05,
        global_drift_sigma: 0.005,
        semantic_failure_prob: 0.2,
        truncation_prob: 0.2,
    };
    if quick {
        cfg.play.num_samples = 15_000;
        cfg.train.epochs = 4;
    }
    let (model, _) = prepare_model(&cfg).expect("model").expect("methods need a model");
    let out = run_experiment(&cfg, Some(&model)).expect("experiment");
    print!("{}", render_table(&out.results));
    println!();
    println!("{:<14} {:<20} {:<13} {:>8} {:>6} {:>9} {:>12}", "method", "setting", "condition", "failures", "video", "guidance", "interaction");
    for r in &out.failures {
        println!(
            "{:<14} {:<20} {:<13} {:>8} {:>6} {:>9} {:>12}",
            r.method, r.setting, r.condition, r.failures, r.video_generation, r.guidance, r.interaction
        );
    }
}
