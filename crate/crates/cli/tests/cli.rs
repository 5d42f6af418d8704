//! End-to-end checks of the `sauc` binary.

use std::path::Path;
use std::process::Command;

fn sauc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sauc"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_SYNTH: &str = r#"{
    "dataset": {"synthetic": {
        "nodes": 8, "steps": 400, "mu": 0.3, "alpha": 1.5,
        "zero_inflation": 0.5, "seasonal_amplitude": 0.95, "seasonal_period": 24
    }},
    "forecaster": {"oracle": {"b_mu": 1.0, "b_alpha": 4.0}},
    "seed": 9
}"#;

#[test]
fn generate_writes_panel_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_SYNTH);
    let out = dir.path().join("out");
    let status = sauc().args(["generate", "--config"]).arg(&config).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    assert!(out.join("panel.csv").exists());
    assert!(out.join("truth.csv").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn generate_rejects_invalid_spec_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL_SYNTH.replace("\"mu\": 0.3", "\"mu\": -1.0");
    let config = write_config(dir.path(), &bad);
    let out = dir.path().join("out");
    let output = sauc().args(["generate", "--config"]).arg(&config).arg("--out").arg(&out).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("mu"), "stderr: {stderr}");
}

#[test]
fn pipeline_emits_reports_and_respects_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_SYNTH);
    let out = dir.path().join("out");
    let output = sauc()
        .args(["pipeline", "--config"])
        .arg(&config)
        .args(["--calibrator", "identity", "--bins", "5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    for f in [
        "model.json",
        "intervals_pre.csv",
        "intervals_post.csv",
        "report_pre_all.json",
        "report_post_zero.json",
        "reliability_post_all.csv",
        "risk_by_node.csv",
        "run_manifest.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["calibrator_id"], "identity");
    // identity: pre and post reports agree
    assert_eq!(summary["pre_all"]["ence"], summary["post_all"]["ence"]);
}

#[test]
fn ingest_round_trips_wide_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("input.csv");
    std::fs::write(&input, "timestep,a,b\n0,0,1\n1,2,0\n2,0,0\n").unwrap();
    let out = dir.path().join("out");
    let output = sauc()
        .args(["ingest", "--input"])
        .arg(&input)
        .args(["--layout", "wide", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&output.stdout)).unwrap();
    assert_eq!(summary["nodes"], 2);
    assert_eq!(summary["steps"], 3);
}

#[test]
fn sweep_bins_writes_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_SYNTH);
    let out = dir.path().join("out");
    let output = sauc()
        .args(["sweep-bins", "--config"])
        .arg(&config)
        .args(["--bins", "1,5,10", "--jobs", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n_bins,ence_all,ence_zero,wall_ms");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,"));
    assert!(lines[3].starts_with("10,"));
}

#[test]
fn evaluate_prints_selected_filter_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_SYNTH);
    let out = dir.path().join("out");
    let output = sauc()
        .args(["evaluate", "--config"])
        .arg(&config)
        .args(["--filter", "zero", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&output.stdout)).unwrap();
    assert_eq!(report["filter"], "zero_only");
}

#[test]
fn missing_config_fails_cleanly() {
    let output = sauc().args(["pipeline", "--config", "/nonexistent.json", "--out", "/tmp/x"]).output().unwrap();
    assert!(!output.status.success());
}
