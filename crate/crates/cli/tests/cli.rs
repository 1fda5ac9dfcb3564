use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn config(p1: f64, kappa: f64, extra: &str) -> String {
    format!(
        r#"{{
  "maps": [
    {{"kind": "lsv", "alpha": 0.5}},
    {{"kind": "attracting", "alpha": 0.5, "kappa": {kappa}}}
  ],
  "probs": [{p1}, {p2}]{extra}
}}"#,
        p2 = 1.0 - p1
    )
}

fn run(dir: &Path, text: &str, args: &[&str]) -> Output {
    let path = dir.join("run.json");
    std::fs::write(&path, text).unwrap();
    Command::new(env!("CARGO_BIN_EXE_intermap")).args(args).arg("--config").arg(&path).output().unwrap()
}

fn result(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    v["result"].clone()
}

/// Data rows of a CSV written by the tool, split into fields.
fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

#[test]
fn classify_phases() {
    let dir = tempfile::tempdir().unwrap();
    let r = result(&run(dir.path(), &config(0.6, 0.2, ""), &["classify"]));
    assert_eq!(r["phase"], "FiniteACS");
    assert!((r["eta"].as_f64().unwrap() - 0.894427190999916).abs() < 1e-12);
    let r = result(&run(dir.path(), &config(0.4, 0.2, ""), &["classify"]));
    assert_eq!(r["phase"], "NoFiniteACS");
    // 0.5 * 0.25^(-1/2) = 1.
    let r = result(&run(dir.path(), &config(0.5, 0.25, ""), &["classify"]));
    assert_eq!(r["phase"], "Critical");
}

#[test]
fn config_errors_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = config(0.6, 0.2, ",\n  \"grid\": {\"nodes\": 64}");
    let out = run(dir.path(), &text, &["classify"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run.json:7:"), "{err}");

    let out = run(dir.path(), &config(0.6, 1.5, ""), &["classify"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.json:2:"));

    let out = run(dir.path(), "{ not json", &["classify"]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_intermap")).arg("classify").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn command_preconditions_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // Cones need the finite-measure phase.
    let out = run(dir.path(), &config(0.4, 0.2, ""), &["cones"]);
    assert_eq!(out.status.code(), Some(2));
    // Moving mass towards the attracting map leaves it at delta = 0.1.
    let extra = ",\n  \"continuity\": {\"direction\": [-1, 1], \"deltas\": [0.1]}";
    let out = run(dir.path(), &config(0.6, 0.2, extra), &["continuity"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run.json:7:"), "{err}");
    let out = run(dir.path(), &config(0.6, 0.2, ""), &["sweep"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn density_without_iterations_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let text = config(0.6, 0.2, ",\n  \"grid\": {\"nodes_per_half\": 64},\n  \"density\": {\"iterations\": 0}");
    let out_dir = dir.path().join("out");
    let r = result(&run(dir.path(), &text, &["density", "--out", out_dir.to_str().unwrap()]));
    assert_eq!(r["iterations"], 0);
    let (header, rows) = csv_rows(&out_dir.join("density.csv"));
    assert_eq!(header, ["half", "t", "x", "density"]);
    assert_eq!(rows.len(), 128);
    assert!(rows.iter().all(|r| r[3] == "1.0"));
}

#[test]
fn density_csv_is_decreasing_on_the_left() {
    let dir = tempfile::tempdir().unwrap();
    let text = config(0.6, 0.2, ",\n  \"grid\": {\"nodes_per_half\": 512}");
    let out_dir = dir.path().join("out");
    let r = result(&run(dir.path(), &text, &["density", "--out", out_dir.to_str().unwrap()]));
    assert_eq!(r["c0"], true);
    assert!(r["envelope"]["fitted_a1"].as_f64().unwrap().is_finite());
    let (_, rows) = csv_rows(&out_dir.join("density.csv"));
    let left: Vec<f64> = rows.iter().filter(|r| r[0] == "left").map(|r| r[3].parse().unwrap()).collect();
    assert!(left.windows(2).all(|w| w[1] <= w[0]));
    let text = std::fs::read_to_string(out_dir.join("density.csv")).unwrap();
    assert!(text.starts_with("# intermap "));
    assert!(text.lines().nth(2).unwrap().starts_with("# config: {\"maps\""));
}

#[test]
fn sweep_over_kappa_has_decreasing_eta() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<String> = (1..=9).map(|k| format!("0.{k}")).collect();
    let extra =
        format!(",\n  \"sweep\": {{\"parameter\": \"kappa\", \"symbol\": 2, \"values\": [{}]}}", values.join(", "));
    let out_dir = dir.path().join("out");
    let r = result(&run(dir.path(), &config(0.6, 0.2, &extra), &["sweep", "--out", out_dir.to_str().unwrap()]));
    let etas: Vec<f64> = r.as_array().unwrap().iter().map(|row| row["report"]["eta"].as_f64().unwrap()).collect();
    assert_eq!(etas.len(), 9);
    assert!(etas.windows(2).all(|w| w[1] < w[0]));
    let (header, rows) = csv_rows(&out_dir.join("sweep.csv"));
    assert_eq!(header[1], "eta");
    assert_eq!(rows.len(), 9);

    // A bad point is reported in its row and the sweep carries on.
    let extra = ",\n  \"sweep\": {\"parameter\": \"kappa\", \"symbol\": 2, \"values\": [0.5, 1.5, 0.7]}";
    let r = result(&run(dir.path(), &config(0.6, 0.2, extra), &["sweep"]));
    let rows = r.as_array().unwrap();
    assert!(rows[1]["error"].is_string() && rows[2]["report"].is_object());
}

#[test]
fn cones_pass_on_converged_density() {
    let dir = tempfile::tempdir().unwrap();
    let extra = ",\n  \"grid\": {\"nodes_per_half\": 256},\n  \"cones\": {\"members\": 10, \"auxiliary\": 4}";
    let r = result(&run(dir.path(), &config(0.6, 0.2, extra), &["cones"]));
    assert_eq!(r["c0"]["pass"], true);
    assert_eq!(r["c1"]["pass"], true);
    assert_eq!(r["c2_sufficient"], true);
    assert_eq!(r["pass"], true, "{r}");
}

#[test]
fn kac_and_orbit_outputs_use_one_based_symbols() {
    let dir = tempfile::tempdir().unwrap();
    let extra = ",\n  \"kac\": {\"samples\": 1000, \"cap\": 100000, \"start\": \"uniform\", \"sizes\": [1000]},\n  \
                 \"orbit\": {\"steps\": 50}";
    let out_dir = dir.path().join("out");
    let text = config(0.6, 0.8, extra);
    let r = result(&run(dir.path(), &text, &["kac", "--out", out_dir.to_str().unwrap()]));
    assert_eq!(r["start_law"], "uniform");
    assert_eq!(r["fibres"][0]["symbol"], 1);
    let (header, rows) = csv_rows(&out_dir.join("returns.csv"));
    assert_eq!(header, ["sample", "symbol", "x", "time", "censored"]);
    assert!(rows.iter().all(|r| r[1] == "1" || r[1] == "2"));

    result(&run(dir.path(), &text, &["orbit", "--out", out_dir.to_str().unwrap()]));
    let (_, rows) = csv_rows(&out_dir.join("orbit.csv"));
    assert_eq!(rows.len(), 51);
    assert_eq!(rows[0][1], "");
    assert!(rows[1..].iter().all(|r| r[1] == "1" || r[1] == "2"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let text = config(0.6, 0.2, ",\n  \"seed\": 5,\n  \"orbit\": {\"steps\": 20}");
    let a = run(dir.path(), &text, &["orbit", "--seed", "9"]);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["config"]["seed"], 9);
    assert_eq!(v["result"]["seed"], 9);
    let b = run(dir.path(), &text, &["orbit"]);
    assert_ne!(a.stdout, b.stdout);
}
