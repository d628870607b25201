//! End-to-end tests of the `resilsim` binary: exit codes, file outputs and
//! replay comparison.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn resilsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resilsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn check_valid_contract_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cell.contract");
    fs::write(
        &path,
        "contract step_timing {\n  input pulse: real;\n  output count: real;\n  guarantee timing period 150 ms deadline 10 ms;\n}\n",
    )
    .unwrap();
    let out = resilsim(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok: contract step_timing"));
}

#[test]
fn check_invalid_contract_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.contract");
    fs::write(
        &path,
        "contract bad {\n  output v: real;\n  guarantee timing period 0 ms deadline 10 ms;\n}\n",
    )
    .unwrap();
    let out = resilsim(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn check_missing_file_exits_2() {
    let out = resilsim(&["check", "/nonexistent/x.contract"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn check_scenario_json() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("s.json");
    fs::write(&good, r#"{"until_ms": 500.0}"#).unwrap();
    assert_eq!(code(&resilsim(&["check", good.to_str().unwrap()])), 0);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"until_ms": -1}"#).unwrap();
    assert_eq!(code(&resilsim(&["check", bad.to_str().unwrap()])), 1);
}

#[test]
fn run_sorting_preset_writes_traces_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    let metrics = dir.path().join("metrics.json");
    let out = resilsim(&[
        "run",
        "--preset",
        "sorting",
        "--seed",
        "11",
        "--trace-dir",
        traces.to_str().unwrap(),
        "--metrics",
        metrics.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "dispatch.log",
        "activations.log",
        "deliveries.log",
        "observers.log",
        "availability_N1.trace",
        "availability_N2.trace",
        "availability_N3.trace",
    ] {
        assert!(traces.join(f).exists(), "missing {f}");
    }
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(doc["seed"], 11);
    let hits = doc["ejections"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["hit"] == true)
        .count();
    assert_eq!(hits, 3, "one hit per piece");
    assert!(doc["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .all(|v| v["verdict"] == "ok"));
}

#[test]
fn run_recovery_preset_passes_its_assertions() {
    let out = resilsim(&["run", "--preset", "recovery"]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("episode C1"), "stdout: {stdout}");
    assert!(stdout.contains("switched to [beh2]"));
    assert!(stdout.contains("preset assertions hold"));
}

#[test]
fn run_unknown_preset_name_exits_2() {
    let out = resilsim(&["run", "--preset", "nope"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn replay_matches_and_detects_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    run_ok(&["run", "--preset", "recovery", "--seed", "5", "--trace-dir", traces.to_str().unwrap()], 0);

    let out = resilsim(&[
        "replay",
        "--preset",
        "recovery",
        "--seed",
        "5",
        "--trace-dir",
        traces.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // Tamper with the recorded log: the replay must notice.
    tamper(&traces.join("dispatch.log"));
    let out = resilsim(&[
        "replay",
        "--preset",
        "recovery",
        "--seed",
        "5",
        "--trace-dir",
        traces.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn run_from_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    fs::write(
        &path,
        r#"{"seed": 9, "until_ms": 9000.0, "pieces": [{"at_ms": 1810.0, "colour": "blue"}]}"#,
    )
    .unwrap();
    let metrics = dir.path().join("m.json");
    let out = resilsim(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--metrics",
        metrics.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    let hits: Vec<&serde_json::Value> = doc["ejections"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["hit"] == true)
        .collect();
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0]["lane"], 1, "blue pieces leave in the middle lane");
}

fn run_ok(args: &[&str], expected: i32) {
    let out = resilsim(args);
    assert_eq!(
        code(&out),
        expected,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tamper(path: &Path) {
    let mut text = fs::read_to_string(path).unwrap();
    let mid = text.len() / 2;
    let pos = text[..mid].rfind('\n').map(|i| i + 1).unwrap_or(0);
    text.insert_str(pos, "0,ghost,injected,line\n");
    fs::write(path, text).unwrap();
}
