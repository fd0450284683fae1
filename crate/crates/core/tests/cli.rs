use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn coopalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coopalloc")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn solve_prints_allocation_json() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "inst.json", r#"{"gamma": [[3.0, 0.5], [0.4, 2.0]], "rate": [0.4, 0.3]}"#);
    let out = coopalloc(&["solve", "--instance", &inst]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["feasible"], Value::Bool(true));
    assert!(v["z"].as_f64().unwrap() > 0.0);
    assert_eq!(v["x"].as_array().unwrap().len(), 2);
    let y: f64 = v["y"].as_array().unwrap().iter().map(|t| t.as_f64().unwrap()).sum();
    assert!((y - 1.0).abs() < 1e-9);
}

#[test]
fn solve_accepts_flat_gamma_and_reports_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "flat.json", r#"{"num_bs": 1, "num_ue": 2, "gamma": [1.0, 1.0], "rate": [5.0, 5.0]}"#);
    let out = coopalloc(&["solve", "--instance", &inst]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["feasible"], Value::Bool(false));
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"gamma": [[1.0, -2.0]], "rate": [0.1, 0.1]}"#);
    assert_eq!(coopalloc(&["solve", "--instance", &bad]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(coopalloc(&["solve", "--instance", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(coopalloc(&["sim", "--bs", "2", "--epsilon", ""]).status.code(), Some(2));
    assert_eq!(coopalloc(&["sim", "--bs", "2", "--epsilon", "1.0", "--format", "xml"]).status.code(), Some(2));
    assert_eq!(coopalloc(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(coopalloc(&["--help"]).status.code(), Some(0));
}

#[test]
fn certify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "inst.json", r#"{"gamma": [[4.0, 1.0, 0.6], [0.5, 1.5, 3.0]], "rate": [0.3, 0.3, 0.3]}"#);
    let solved = coopalloc(&["solve", "--instance", &inst]);
    let alloc = write(dir.path(), "alloc.json", std::str::from_utf8(&solved.stdout).unwrap());
    let out = coopalloc(&["certify", "--instance", &inst, "--allocation", &alloc]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let _: Value = serde_json::from_slice(&out.stdout).unwrap();

    // Equal power on every link wastes power on the cross links.
    let wasteful = write(
        dir.path(),
        "esp.json",
        r#"{"x": [[0.2, 0.2, 0.2], [0.2, 0.2, 0.2]], "y": [0.3333333333333333, 0.3333333333333333, 0.3333333333333334]}"#,
    );
    let out = coopalloc(&["certify", "--instance", &inst, "--allocation", &wasteful]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sim_writes_identical_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = coopalloc(&[
            "sim", "--bs", "2", "--ue", "4", "--epsilon", "0.5,1.5", "--snapshots", "5", "--seed", "3", "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(path).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(text.starts_with("epsilon,algo,"));
}

#[test]
fn sim_json_to_stdout() {
    let out = coopalloc(&["sim", "--bs", "2", "--ue", "3", "--epsilon", "0.8", "--snapshots", "3", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let rows: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    let algos: Vec<&str> = rows.iter().map(|r| r["algo"].as_str().unwrap()).collect();
    assert_eq!(algos, ["jspa", "jmpc", "esp"]);
}
