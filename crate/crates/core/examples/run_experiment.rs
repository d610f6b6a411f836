//! Loads an experiment configuration, runs it and writes the result files.
//!
//! Usage: `run_experiment [config.toml] [out-dir]`

use gated_idm::executor::Method;
use gated_idm::harness::{prepare_model, run_experiment, write_outputs, ExperimentConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(p) => ExperimentConfig::load(p.as_ref()).expect("config"),
        None => ExperimentConfig {
            trials: 5,
            methods: vec![Method::LowlevelOnly],
            ..ExperimentConfig::default()
        },
    };
    let dir = args
        .next()
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gated-idm-experiment"));

    let model = prepare_model(&cfg).expect("model");
    let out = run_experiment(&cfg, model.as_ref().map(|(m, _)| m)).expect("experiment");
    for p in write_outputs(&dir, &cfg, &out).expect("write") {
        println!("wrote {}", p.display());
    }
    print!("{}", gated_idm::metrics::render_table(&out.results));
}
