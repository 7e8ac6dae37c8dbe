use std::fs;
use std::process::{Command, Output};

const PINNED: &str = r#"{
  "grid": {"width": 1, "height": 1},
  "cells": [{"x": 0, "y": 0, "type": "S1"}],
  "robots": [{"kind": "drone", "start": [0, 0], "eps_true": 0.1, "eps_est": 0.2}],
  "tasks": [{"name": "home", "formula": "H^0 S1", "threshold": 0.9}]
}"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twtl-fleet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn check_reports_both_verdicts() {
    let out = cli(&[
        "check",
        "--formula",
        "[H^1 P]^[1,2] . [H^0 D]^[0,2]",
        "--word",
        r#"[["P"],["P"],["P"],["D"]]"#,
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["satisfied"], true);
    assert_eq!(v["dfa_accepts"], true);
    assert_eq!(v["time_bound"], 5);
}

#[test]
fn compile_writes_a_dfa() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dfa.json");
    let out = cli(&["compile", "--formula", "H^2 A", "--minimize", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["propositions"], serde_json::json!(["A"]));
    assert!(v["states"].as_u64().unwrap() >= 4);
}

#[test]
fn bad_input_exits_with_one() {
    assert_eq!(cli(&["check", "--formula", "H^ A", "--word", "[]"]).status.code(), Some(1));
    assert_eq!(cli(&["run", "--scenario", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(cli(&["run", "--episodes", "0"]).status.code(), Some(1));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn infeasible_scenario_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scn.json");
    fs::write(&path, PINNED.replace("H^0 S1", "H^0 O")).unwrap();
    let out = cli(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--episodes",
        "3",
        "--iterations",
        "1",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scn.json");
    fs::write(&path, PINNED).unwrap();
    let out_dir = dir.path().join("out");
    let out = cli(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--episodes",
        "20",
        "--iterations",
        "2",
        "--bounds",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let v = stdout_json(&out);
    assert_eq!(v.as_array().unwrap().len(), 2);
    for name in ["iter0_tasks.csv", "iter1_robots.csv", "iter1_bounds.csv", "summary.json"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let tasks = fs::read_to_string(out_dir.join("iter0_tasks.csv")).unwrap();
    assert_eq!(tasks.lines().count(), 21);
}
