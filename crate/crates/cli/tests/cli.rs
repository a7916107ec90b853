use std::path::Path;
use std::process::{Command, Output};

fn uavxai(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavxai"))
        .args(args)
        .env("UAVXAI_OUT", out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_echoes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, "{}").unwrap();
    let o = uavxai(dir.path(), &["validate", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echoed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(echoed["lidar"]["width"], 64);
    assert!(echoed["train"]["episodes"].as_u64().unwrap() > 0);
}

#[test]
fn invalid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"atack": {}}"#).unwrap();
    let o = uavxai(dir.path(), &["validate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("atack: unknown key"), "{}", stderr(&o));

    let o = uavxai(dir.path(), &["attack", "sweep", "--eps", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("attack.eps"), "{}", stderr(&o));

    let o = uavxai(dir.path(), &["--config", "/nonexistent/c.json", "train", "--apf", "on"]);
    assert_eq!(o.status.code(), Some(1));

    let o = uavxai(dir.path(), &["reproduce", "everything"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_prerequisite_exits_2_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let o = uavxai(dir.path(), &["--preset", "compact", "attack", "probe"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train --apf on"), "{}", stderr(&o));

    let o = uavxai(dir.path(), &["--preset", "compact", "detect", "train", "--kind", "cnn"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("detect build"), "{}", stderr(&o));
}

#[test]
fn zero_jobs_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = uavxai(dir.path(), &["--jobs", "0", "--preset", "compact", "attack", "probe"]);
    assert_eq!(o.status.code(), Some(3));
}
