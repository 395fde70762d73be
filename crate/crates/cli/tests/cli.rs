use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn uavflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavflow"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run uavflow")
}

fn ok(out: &Output) -> &Output {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&ok(out).stdout).expect("stdout is JSON")
}

/// Writes preset B with the given overrides into `dir`.
fn scenario(dir: &Path, name: &str, n_uavs: u64, duration_s: f64) -> PathBuf {
    let mut doc = json(&uavflow(&["preset", "B"], dir));
    doc["n_uavs"] = n_uavs.into();
    doc["duration_s"] = duration_s.into();
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}

#[test]
fn preset_b_forecast_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "b.json", 1000, 60.0);
    let doc = json(&uavflow(&["--json", "forecast", s.to_str().unwrap()], dir.path()));
    assert_eq!(doc["y_scale"], "log");
    let get = |i: usize, k: &str| doc["services"][i][k].as_f64().unwrap();
    assert!(get(0, "packets") > get(1, "packets"));
    assert!(get(1, "packets") > get(2, "packets"));
    assert!(get(2, "bytes") > get(1, "bytes"));
    assert!(get(1, "bytes") > get(0, "bytes"));
    assert!(get(2, "bytes") > 0.5 * doc["total_bytes"].as_f64().unwrap());
    assert_eq!(doc["rates"][0][0], 100.0);
}

#[test]
fn forecast_writes_plot_data_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "b.json", 1000, 60.0);
    ok(&uavflow(&["--out", "report", "forecast", s.to_str().unwrap()], dir.path()));
    let out = dir.path().join("report");
    let csv = fs::read_to_string(out.join("forecast.csv")).unwrap();
    assert!(csv.starts_with("metric,service,subgroup,value\n"));
    assert!(csv.contains("packets,telemetry,,"));
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
    assert_eq!(m["scenario_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn zero_duration_forecast_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "z.json", 1000, 0.0);
    let doc = json(&uavflow(&["--json", "forecast", s.to_str().unwrap()], dir.path()));
    for i in 0..3 {
        assert_eq!(doc["services"][i]["packets"], 0.0);
        assert_eq!(doc["services"][i]["bytes"], 0.0);
    }
    assert_eq!(doc["total_bytes"], 0.0);
}

#[test]
fn invalid_scenario_exits_2_with_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), "bad.json", 10, -1.0);
    let mut doc: Value = serde_json::from_str(&fs::read_to_string(&s).unwrap()).unwrap();
    doc["model"]["alpha"][1] = 0.9.into();
    fs::write(&s, doc.to_string()).unwrap();
    let out = uavflow(&["forecast", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("duration"), "{err}");
    assert!(err.contains("alpha"), "{err}");
}

#[test]
fn missing_scenario_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = uavflow(&["forecast", "nope.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn empty_swarm_gives_header_only_trace() {
    let dir = tempfile::tempdir().unwrap();
    scenario(dir.path(), "n0.json", 0, 10.0);
    ok(&uavflow(&["simulate", "n0.json", "t.csv"], dir.path()));
    let trace = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(trace, "timestamp_s,uav_id,subgroup,service,seq,size_bytes\n");
}

#[test]
fn simulate_is_reproducible_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    scenario(dir.path(), "s.json", 40, 3.0);
    ok(&uavflow(&["--threads", "1", "simulate", "s.json", "a.csv"], dir.path()));
    ok(&uavflow(&["--threads", "8", "simulate", "s.json", "b.csv"], dir.path()));
    ok(&uavflow(&["simulate", "s.json", "c.csv"], dir.path()));
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert!(a.len() > 1000);
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(a, fs::read(dir.path().join("c.csv")).unwrap());

    ok(&uavflow(&["--seed", "77", "simulate", "s.json", "d.csv"], dir.path()));
    assert_ne!(a, fs::read(dir.path().join("d.csv")).unwrap());
}

#[test]
fn compare_consumes_simulate_output() {
    let dir = tempfile::tempdir().unwrap();
    scenario(dir.path(), "s.json", 100, 5.0);
    ok(&uavflow(&["--out", "run", "simulate", "s.json", "run/t.csv.gz"], dir.path()));
    let doc = json(&uavflow(
        &["--json", "--out", "cmp", "compare", "s.json", "run/summary.json"],
        dir.path(),
    ));
    assert_eq!(doc["y_scale"], "log");
    assert_eq!(doc["segments"].as_array().unwrap().len(), 9);
    assert!(dir.path().join("cmp/comparison.csv").exists());
    assert!(dir.path().join("cmp/manifest.json").exists());
    let telemetry = &doc["services"][0];
    assert!(telemetry["packets_rel_err"].as_f64().unwrap().abs() < 0.05);
}

#[test]
fn compare_rejects_a_drifted_scenario() {
    let dir = tempfile::tempdir().unwrap();
    scenario(dir.path(), "s.json", 10, 1.0);
    ok(&uavflow(&["simulate", "s.json", "t.csv"], dir.path()));
    scenario(dir.path(), "s.json", 11, 1.0);
    let out = uavflow(&["compare", "s.json", "summary.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest mismatch"));
}

#[test]
fn sink_with_no_traffic_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let report = json(&uavflow(
        &["sink", "--bind", "127.0.0.1:0", "--duration", "0.2"],
        dir.path(),
    ));
    assert_eq!(report["received_total"], 0);
    assert_eq!(report["malformed"], 0);
}

#[test]
fn replay_of_empty_trace_sends_nothing() {
    let dir = tempfile::tempdir().unwrap();
    scenario(dir.path(), "n0.json", 0, 1.0);
    ok(&uavflow(&["simulate", "n0.json", "t.csv"], dir.path()));
    let stats = json(&uavflow(
        &["replay", "t.csv", "--target", "127.0.0.1:9", "--speedup", "1"],
        dir.path(),
    ));
    assert_eq!(stats["sent_total"], 0);
}

#[test]
fn preset_with_out_writes_file_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&uavflow(&["--out", "p", "--seed", "9", "preset", "A"], dir.path()));
    let text = fs::read_to_string(dir.path().join("p/preset-A.json")).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["seed"], 9);
    assert!(dir.path().join("p/manifest.json").exists());
}
