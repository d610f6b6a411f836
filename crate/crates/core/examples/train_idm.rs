//! Trains the inverse dynamics model on random play, reports held-out
//! metrics and saves a checkpoint.
//!
//! Usage: `train_idm [quick] [checkpoint]`

use gated_idm::harness::{collect_random_play, load_checkpoint, save_checkpoint, PlayConfig};
use gated_idm::idm::{gate_accuracy, mean_action_loss, train, IdmArch, TrainConfig};
use gated_idm::world::WorldConfig;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let quick = args.iter().any(|a| a == "quick");
    let path = args
        .iter()
        .find(|a| *a != "quick")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gated-idm.ckpt"));

    let world = WorldConfig::default();
    let (n, held_out) = if quick { (6000, 1000) } else { (50_000, 5000) };
    let data = collect_random_play(&world, &PlayConfig {
        num_samples: n + held_out,
        ..PlayConfig::default()
    })
    .expect("collect");
    let (train_set, test_set) = data.split_at(n);

    let mut cfg = TrainConfig::default();
    if quick {
        cfg.epochs = 2;
        cfg.arch = IdmArch {
            encoder_hidden: vec![64, 64],
            head_hidden: 32,
        };
    }
    let t0 = std::time::Instant::now();
    let (model, log) = train(train_set, world.layout(), world.bounds, &cfg, 0).expect("train");
    let first = log.window_mean(0.05, true, |p| p.action_loss);
    let last = log.window_mean(0.05, false, |p| p.action_loss);
    println!("trained {} steps in {:.1?}: action loss {first:.5} -> {last:.5}", log.points.last().map_or(0, |p| p.step), t0.elapsed());
    println!(
        "held out: action loss {:.5}, gate accuracy {:.3}",
        mean_action_loss(&model, test_set, &cfg.loss).expect("eval"),
        gate_accuracy(&model, test_set, 0.5).expect("eval")
    );

    save_checkpoint(&path, &model, &cfg.loss).expect("save");
    let (back, meta) = load_checkpoint(&path).expect("load");
    assert_eq!(back, model);
    println!("checkpoint {} (input width {}, act dim {})", path.display(), back.input_dim(), meta.act_dim);
}
