use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn asu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asu")).args(args).output().unwrap()
}

fn summary(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_1() {
    let out = asu(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(asu(&["simulate", "--scorer", "/no/such/model.json"]).status.code(), Some(1));
    assert_eq!(asu(&["eval-corpus", "--corpus", "/no/such.jsonl", "--scorer", "oracle"]).status.code(), Some(1));
    assert!(asu(&["--help"]).status.success());
}

#[test]
fn oracle_simulation_summary() {
    let s = summary(&asu(&["simulate", "--scorer", "oracle", "--dialogues", "200", "--seed", "1"]));
    assert_eq!(s["metrics"]["accuracy_all"], 1.0);
    assert_eq!(s["metrics"]["n_dialogues"], 200);
}

fn pipeline(dir: &Path) {
    let corpus = dir.join("corpus.jsonl");
    let ds = dir.join("ds");
    let model = dir.join("baseline.model.json");
    summary(&asu(&["datagen", "corpus", "--dialogues", "60", "--seed", "5", "--out", p(&corpus)]));
    summary(&asu(&["datagen", "baseline", "--corpus", p(&corpus), "--out-dir", p(&ds)]));
    summary(&asu(&["train", "--data-dir", p(&ds), "--dataset", "baseline", "--out", p(&model), "--epochs", "3"]));
    let s = summary(&asu(&[
        "datagen", "ext-a", "--corpus", p(&corpus), "--baseline-dir", p(&ds), "--model", p(&model), "--out-dir", p(&ds),
        "--dialogues", "10", "--t1", "0.99", "--t2", "0.5", "--m", "2",
    ]));
    assert_eq!(s["audit_passes"], true);
    summary(&asu(&["simulate", "--scorer", p(&model), "--dialogues", "20", "--records", p(&dir.join("sim.jsonl"))]));
}

#[test]
fn identical_runs_give_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    for file in [
        "corpus.jsonl",
        "ds/baseline.train.jsonl",
        "ds/baseline.dev.jsonl",
        "ds/baseline.stats.json",
        "baseline.model.json",
        "ds/ext_a.train.jsonl",
        "ds/ext_a.stats.json",
        "sim.jsonl",
    ] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        assert!(!x.is_empty(), "{file}");
        assert_eq!(x, std::fs::read(b.path().join(file)).unwrap(), "{file} differs");
    }
}

#[test]
fn failures_leave_no_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    // Single-class training data is a runtime error.
    let line = r#"{"sys":"welcomemsg","usr":"cheap","item":"","act":"the user wants the cheap price range","label":1,"source":"baseline","dialogue_id":"d","turn_idx":0}"#;
    std::fs::write(dir.path().join("one.train.jsonl"), format!("{line}\n")).unwrap();
    std::fs::write(dir.path().join("one.dev.jsonl"), "").unwrap();
    let model = dir.path().join("model.json");
    let out = asu(&["train", "--data-dir", p(dir.path()), "--dataset", "one", "--out", p(&model)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!model.exists());
    let stray: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(stray.len(), 2, "{stray:?}");

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{not json\n").unwrap();
    assert_eq!(asu(&["eval-corpus", "--corpus", p(&bad), "--scorer", "oracle"]).status.code(), Some(2));
}

#[test]
fn serve_uses_env_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let model = dir.path().join("m.json");
    summary(&asu(&["datagen", "corpus", "--dialogues", "40", "--out", p(&corpus)]));
    summary(&asu(&["datagen", "baseline", "--corpus", p(&corpus), "--out-dir", p(dir.path())]));
    summary(&asu(&["train", "--data-dir", p(dir.path()), "--dataset", "baseline", "--out", p(&model), "--epochs", "2"]));
    let data = dir.path().join("served");
    let mut child = Command::new(env!("CARGO_BIN_EXE_asu"))
        .args(["serve", "--model", &format!("base={}", p(&model)), "--port", "0"])
        .env("ASU_DATA_DIR", &data)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let started: Value = serde_json::from_str(&line).unwrap();
    let base = started["address"].as_str().unwrap().to_string();
    let health: Value = tokio::runtime::Runtime::new().unwrap().block_on(async {
        reqwest::get(format!("{base}/health")).await.unwrap().json().await.unwrap()
    });
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(health["models"], serde_json::json!(["base", "default"]));
    assert!(data.join("sessions").is_dir());
}
