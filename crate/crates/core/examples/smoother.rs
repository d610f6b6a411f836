//! Smooths a jittery action chunk and shows which rows survive.

use gated_idm::smoother::{select_keypoints, smooth, SmootherConfig};

fn main() {
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let t = i as f64 / 39.0;
            let jitter = if i % 2 == 0 { 0.004 } else { -0.004 };
            let z = if t < 0.5 { 0.3 - 0.4 * t } else { 0.1 + 0.4 * (t - 0.5) };
            vec![0.2 + 0.5 * t + jitter, 0.5 - jitter, z, if (15..30).contains(&i) { 0.0 } else { 1.0 }]
        })
        .collect();

    let cfg = SmootherConfig::default();
    println!("keypoints: {:?}", select_keypoints(&rows, &cfg).expect("keypoints"));
    let out = smooth(&rows, &cfg).expect("smooth");
    println!("{} rows in, {} rows out", rows.len(), out.rows.len());
    for (r, src) in out.rows.iter().zip(&out.source).step_by(5) {
        println!("  from row {src:>2}: [{:.3}, {:.3}, {:.3}, {:.2}]", r[0], r[1], r[2], r[3]);
    }
    let min_z = out.rows.iter().map(|r| r[2]).fold(f64::INFINITY, f64::min);
    println!("lowest z after clamping: {min_z:.3} (floor {})", cfg.clamp_min);

    let same = smooth(&rows, &SmootherConfig::neutral()).expect("smooth");
    assert_eq!(same.rows, rows);
    println!("neutral configuration leaves the chunk unchanged");
}
