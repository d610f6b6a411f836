use std::path::Path;
use std::process::{Command, Output};

use gated_idm::harness::{load_chunk, save_chunk, ChunkRecord};

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gated-idm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(bin(&["eval", "--trials", "many"], dir.path()).status.code(), Some(1));
    assert_eq!(bin(&["eval", "--method", "teleport"], dir.path()).status.code(), Some(1));
    assert_eq!(bin(&[], dir.path()).status.code(), Some(1));
    assert_eq!(bin(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["replay", "--log", "missing.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.jsonl"));
    std::fs::write(dir.path().join("bad.toml"), "trails = 3\n").unwrap();
    let o = bin(&["eval", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["gradcheck", "--models", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("max relative error"));
}

#[test]
fn neutral_smoothing_reproduces_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<Vec<f64>> = (0..12)
        .map(|i| {
            let t = i as f64 / 11.0;
            vec![0.2 + 0.5 * t, 0.3, 0.4 - 0.1 * t * t, if i < 6 { 1.0 } else { 0.0 }]
        })
        .collect();
    let gates: Vec<f64> = (0..12).map(|i| if (4..8).contains(&i) { 0.9 } else { 0.1 }).collect();
    let chunk = ChunkRecord {
        rows: rows.clone(),
        gates: Some(gates.clone()),
    };
    save_chunk(&dir.path().join("in.jsonl"), 33, &chunk).unwrap();
    let o = bin(&["smooth", "--neutral", "--input", "in.jsonl", "--output", "out.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let back = load_chunk(&dir.path().join("out.jsonl")).unwrap();
    assert_eq!(back.rows, rows);
    assert_eq!(back.gates, Some(gates));
}

#[test]
fn lowlevel_eval_writes_outputs_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(
        &["eval", "--trials", "2", "--method", "lowlevel_only", "--setting", "pass_by", "--out-dir", "res"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/results.csv")).unwrap();
    assert!(csv.lines().count() >= 3, "{csv}");
    assert!(dir.path().join("res/failures.csv").exists());

    let o = bin(&["replay", "--log", "res/episodes.jsonl", "--episode", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("episode 1: lowlevel_only pass_by"), "{text}");
    let o = bin(&["replay", "--log", "res/episodes.jsonl", "--episode", "9"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn in_process_entry_point_matches_exit_codes() {
    let mut buf = Vec::new();
    assert_eq!(gated_idm::cli::run(["gated-idm", "gradcheck", "--models", "1"], &mut buf), 0);
    assert!(String::from_utf8(buf).unwrap().contains("relative error"));
    assert_eq!(gated_idm::cli::run(["gated-idm", "nope"], &mut Vec::new()), 1);
}
