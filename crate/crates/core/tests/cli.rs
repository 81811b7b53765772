use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_switchembed"))
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn check_csv(p: &Path, header: &str, rows: Option<usize>) {
    let text = std::fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), header, "{}", p.display());
    let cols = header.split(',').count();
    let body: Vec<&str> = lines.collect();
    for line in &body {
        assert_eq!(line.split(',').count(), cols, "{line}");
    }
    if let Some(n) = rows {
        assert_eq!(body.len(), n);
    }
}

#[test]
fn three_tank_both_methods_writes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tank");
    let status = bin()
        .args([
            "run",
            "--problem",
            "three-tank",
            "--method",
            "both",
            "--nodes",
            "60",
            "--dt",
            "0.02",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let header = "t,x0,x1,x2,v0,v1,q,running_cost";
    check_csv(&out.join("trajectory.csv"), header, Some(61));
    check_csv(&out.join("mig_trajectory.csv"), header, None);
    check_csv(&out.join("schedule.csv"), "tau_start,tau_end,q", None);
    check_csv(&out.join("mig_schedule.csv"), "tau_start,tau_end,q", None);

    let s = read_json(&out.join("summary.json"));
    for key in [
        "objective",
        "penalty_residual",
        "bang_bang_fraction",
        "resimulated_cost",
        "status",
        "wall_time",
    ] {
        assert!(s.get(key).is_some(), "missing {key}");
    }
    assert_eq!(s["config"]["nodes"], 60);
    let cmp = read_json(&out.join("comparison.json"));
    assert!(cmp["meocp"]["cost"].as_f64().unwrap() > 0.0);
    assert!(cmp["mig"]["cost"].as_f64().unwrap() > 0.0);
}

#[test]
fn rendezvous_uses_only_valid_modes() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["run", "--problem", "rendezvous", "--method", "meocp", "--nodes", "100"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let s = read_json(&dir.path().join("summary.json"));
    let q: Vec<u64> = s["q_values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert!(!q.is_empty() && q.iter().all(|&k| k <= 4), "{q:?}");
    check_csv(&dir.path().join("trajectory_inertial.csv"), "t,x_km,y_km", Some(101));
}

#[test]
fn misspelled_key_fails_with_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"problem": "three-tank", "alhpa": 0.2}"#).unwrap();
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("alhpa"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"problem": "three-tank", "nodes": 500, "tf": 4.0, "seed": 9}"#).unwrap();
    let status = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .args(["--nodes", "40", "--x0", "1.5,2,2.5", "--scheme", "hermite-simpson"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let s = read_json(&dir.path().join("summary.json"));
    assert_eq!(s["config"]["nodes"], 40);
    assert_eq!(s["config"]["tf"], 4.0);
    assert_eq!(s["config"]["seed"], 9);
    assert_eq!(s["config"]["scheme"], "hermite-simpson");
    check_csv(
        &dir.path().join("trajectory.csv"),
        "t,x0,x1,x2,v0,v1,q,running_cost",
        Some(41),
    );
    let first = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let row: Vec<f64> = first
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    assert_eq!(&row[1..4], &[1.5, 2.0, 2.5]);
}

#[test]
fn custom_problem_file_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/three_mode_oscillator.json");
    let status = bin()
        .args([
            "run",
            "--problem",
            spec,
            "--nodes",
            "40",
            "--alpha",
            "0.1",
            "--beta",
            "1",
        ])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let s = read_json(&dir.path().join("summary.json"));
    assert!(s["q_values"]
        .as_array()
        .unwrap()
        .iter()
        .all(|v| v.as_u64().unwrap() < 3));
    check_csv(
        &dir.path().join("trajectory.csv"),
        "t,x0,x1,v0,v1,q,running_cost",
        Some(41),
    );
}

#[test]
fn verify_fast_passes() {
    let out = bin().args(["verify", "fast"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("partition-of-unity"));
    assert!(!text.contains("brute-force-oracle"));
}

#[test]
fn unknown_problem_name_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--problem", "four-tank"])
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("four-tank"));
}
