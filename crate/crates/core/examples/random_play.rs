//! Collects random-play transitions and writes them to a dataset file.
//!
//! Usage: `random_play [samples] [out.jsonl]`

use gated_idm::harness::{collect_random_play, load_dataset, positive_fraction, save_dataset, PlayConfig};
use gated_idm::world::WorldConfig;

fn main() {
    let mut args = std::env::args().skip(1);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(5000);
    let path = args
        .next()
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gated-idm-play.jsonl"));

    let world = WorldConfig::default();
    let play = PlayConfig {
        num_samples: n,
        ..PlayConfig::default()
    };
    let data = collect_random_play(&world, &play).expect("collect");
    println!("{} samples, {:.1}% labelled as interaction", data.len(), 100.0 * positive_fraction(&data));

    save_dataset(&path, world.layout().width(), &data).expect("save");
    let (header, back) = load_dataset(&path).expect("load");
    assert_eq!(back, data);
    println!("wrote {} (layout width {})", path.display(), header.layout_width);
}
