use std::process::Command;

fn run_example(name: &str, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO"))
        .args(["run", "-q", "--example", name, "--"])
        .args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .expect("cargo runs");
    assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn fast_examples_run() {
    assert!(run_example("world_step", &[]).contains("held=Some"));
    assert!(run_example("smoother", &[]).contains("unchanged"));
    assert!(run_example("gate_monitor", &[]).contains("switch budget exhausted: true"));
    assert!(run_example("gradcheck", &[]).contains("worst"));
    assert!(run_example("replay_log", &[]).starts_with("episode 0"));
    assert!(run_example("lowlevel_confounds", &["2"]).contains("pass_by"));
}

#[test]
fn quick_training_example_runs() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let text = run_example("train_idm", &["quick", ckpt.to_str().unwrap()]);
    assert!(text.contains("gate accuracy"), "{text}");
    assert!(ckpt.exists());
}
