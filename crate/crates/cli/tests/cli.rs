use std::path::Path;
use std::process::{Command, Output};

fn epicast(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_epicast"));
    cmd.args(args).env_remove("EPICAST_SEED");
    if let Some(s) = seed_env {
        cmd.env("EPICAST_SEED", s);
    }
    cmd.output().unwrap()
}

fn demo(dir: &Path, sources: &str) -> String {
    let data = dir.join("data");
    let out = epicast(&["synth", "--study", sources, "--out", data.to_str().unwrap()], None);
    assert!(out.status.success());
    data.join("study.toml").to_str().unwrap().to_string()
}

#[test]
fn failures_emit_error_json() {
    let out = epicast(&["experiment", "--config", "/does/not/exist.toml"], None);
    assert!(!out.status.success());
    let body: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(body["error"], "Io");
    assert!(body["message"].as_str().unwrap().contains("exist.toml"));

    let out = epicast(&["ensemble"], None);
    let body: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(body["error"], "InvalidConfig");
}

#[test]
fn seed_env_matches_flag() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo(dir.path(), "1");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(epicast(&["experiment", "--config", &config, "--seed", "9", "--out", a.to_str().unwrap()], None)
        .status
        .success());
    assert!(epicast(&["experiment", "--config", &config, "--out", b.to_str().unwrap()], Some("9"))
        .status
        .success());
    let read = |d: &Path| std::fs::read(d.join("results_table.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn synth_study_writes_series_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo(dir.path(), "2");
    let text = std::fs::read_to_string(&config).unwrap();
    assert!(text.contains("target = \"Target\""));
    for name in ["Alpha", "Beta", "Target"] {
        let csv = std::fs::read_to_string(dir.path().join("data").join(format!("{name}.csv"))).unwrap();
        assert!(csv.starts_with("date,new_cases,new_deaths,active_cases\n"));
        assert_eq!(csv.lines().count(), 477);
    }
}
