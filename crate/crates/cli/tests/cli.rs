use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_donaldson"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--output")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn check<'a>(section: &'a Value, name: &str) -> &'a Value {
    section["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))
}

const STATIONARY: &str = r#"{
  "schema": "donaldson-run/1",
  "grid": {"n": 2, "N": 8},
  "geometry": {"kind": "stationary", "seed": 5},
  "flow": {"t_max": 0.5, "theta_stop": 0.0}
}"#;

#[test]
fn stationary_datum_passes_with_zero_theta() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "run.json", STATIONARY);
    let out = dir.path().join("out");
    let o = run(&["flow"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["status"], "pass");
    assert_eq!(s["seeds"]["geometry"], 5);
    assert!(s["flow"]["theta_max"].as_f64().unwrap() <= 1e-12);
    assert_eq!(s["flow"]["residual_final"].as_f64().unwrap(), 0.0);
    assert_eq!(s["flow"]["t_final"].as_f64().unwrap(), 0.5);
    assert!(out.join("diagnostics.csv").exists());
    assert!(out.join("snapshots/phi_00000.snap").exists());
    assert!(out.join("snapshots/phi_final.snap").exists());
}

const GENERIC: &str = r#"{
  "schema": "donaldson-run/1",
  "grid": {"n": 2, "N": 8},
  "geometry": {"kind": "generated", "seed": 3},
  "flow": {"t_max": 2.0},
  "heat": {"s1": 0.5, "s2": 1.0, "coefficients": "interpolated", "t_end": 1.0, "sample_every": 0.1}
}"#;

#[test]
fn generic_run_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "run.json", GENERIC);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["flow", "--threads", "1"], &cfg, &a).status.code(), Some(0));
    assert_eq!(run(&["flow", "--threads", "3"], &cfg, &b).status.code(), Some(0));
    for file in ["diagnostics.csv", "summary.json", "snapshots/phi_final.snap"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file} differs");
    }
    let s = summary(&a);
    for name in ["maximum_principle", "trace_identity", "positivity", "unit_time_decay"] {
        assert_eq!(check(&s["flow"], name)["passed"], true, "{name}");
    }
    assert_eq!(s["flow"]["decay"]["outcome"], "fitted");
    assert!(s["flow"]["decay"]["C2_hat"].as_f64().unwrap() > 0.0);
}

#[test]
fn heat_reads_flow_snapshots() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "run.json", GENERIC);
    let out = dir.path().join("out");
    let missing = run(&["heat"], &cfg, &out);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(summary(&out)["status"], "config_error");

    assert_eq!(run(&["flow"], &cfg, &out).status.code(), Some(0));
    let o = run(&["heat"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("heat.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,sup_u,inf_u,sup_G_over_t,R"));
    assert_eq!(lines.count(), 11);
    let s = summary(&out);
    assert_eq!(s["seeds"]["heat_u0"], 0);
    assert!(s["heat"]["harnack_ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn constant_heat_data_give_exponential_ratio() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "run.json",
        r#"{
  "schema": "donaldson-run/1",
  "grid": {"n": 2, "N": 8},
  "geometry": {"kind": "constant", "c": 1.0, "f0": 0.0},
  "heat": {"u0": {"kind": "constant", "value": 2.0}, "s1": 0.25, "s2": 0.75, "coefficients": "identity"}
}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["heat"], &cfg, &out).status.code(), Some(0));
    let r = summary(&out)["heat"]["harnack_ratio"].as_f64().unwrap();
    assert!((r - (-0.5f64).exp()).abs() < 1e-14);
    for line in fs::read_to_string(out.join("heat.csv")).unwrap().lines().skip(1) {
        let v: Vec<&str> = line.split(',').collect();
        assert_eq!(v[1], v[2]);
    }
}

#[test]
fn cone_violation_names_worst_point() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "run.json",
        r#"{
  "schema": "donaldson-run/1",
  "grid": {"n": 2, "N": 8},
  "geometry": {"kind": "constant", "c": 0.4, "f0": 0.0},
  "flow": {}
}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["flow"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("cone condition violated") && stderr.contains("grid point 0"), "{stderr}");
    let s = summary(&out);
    assert_eq!(s["status"], "config_error");
    assert!(s["message"].as_str().unwrap().contains("grid point 0 [0, 0, 0, 0]"));
}

#[test]
fn schema_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    for (i, body) in [
        r#"{"schema": "donaldson-run/0", "oracle": {}}"#,
        r#"{"schema": "donaldson-run/1", "oracle": {}, "extra": true}"#,
        r#"{"schema": "donaldson-run/1", "oracle": {"seeds": 1}}"#,
        r#"{"schema": "donaldson-run/1", "grid": {"n": 2, "N": 8}}"#,
        r#"{"schema": "donaldson-run/1", "geometry": {"kind": "file", "path": "missing.json"}}"#,
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(&dir, &format!("bad{i}.json"), body);
        let mode = if i == 3 { "flow" } else { "oracle" };
        assert_eq!(run(&[mode], &cfg, &out).status.code(), Some(2), "{body}");
        assert_eq!(summary(&out)["status"], "config_error");
    }
}

#[test]
fn geometry_file_and_seed_override() {
    let dir = TempDir::new().unwrap();
    write_config(&dir, "geom.json", r#"{"kind": "stationary", "seed": 1}"#);
    let cfg = write_config(
        &dir,
        "run.json",
        r#"{
  "schema": "donaldson-run/1",
  "grid": {"n": 2, "N": 8},
  "geometry": {"kind": "file", "path": "geom.json"},
  "flow": {"t_max": 0.25, "theta_stop": 0.0}
}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["flow", "--seed", "42"], &cfg, &out).status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["seeds"]["geometry"], 42);
    assert_eq!(s["flow"]["geometry"]["kind"], "stationary");
}

#[test]
fn oracle_report_written() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "run.json",
        r#"{"schema": "donaldson-run/1", "oracle": {"eigenvalue_cases": 50, "identity_cases": 50, "identity_dims": [2, 3], "hessian_sizes": [8, 16]}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["oracle"], &cfg, &out).status.code(), Some(0));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("oracle_report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["identity"]["passed"], 50);
    assert!(report["hessian_min_order"].as_f64().unwrap() >= 2.0);
    assert_eq!(summary(&out)["seeds"]["oracle"], 2024);
}
