use std::path::PathBuf;
use std::process::{Command, Output};

use loopgas::{FactorGraph, WeightSpec};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loopgas"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("loopgas-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn gen_regular_graph() {
    let v = json(&run(&["gen", "--ensemble", "ldpc-regular", "--l", "3", "--r", "6", "--n", "12", "--seed", "7"]));
    assert_eq!(v["n"], 12);
    assert_eq!(v["m"], 6);
    assert_eq!(v["edges"].as_array().unwrap().len(), 36);
}

#[test]
fn gen_ldgm_graph() {
    let v = json(&run(&[
        "gen", "--ensemble", "ldgm", "--lambda", "3:1.0", "--p-dist", "6:1.0", "--n", "12", "--seed", "2",
    ]));
    assert_eq!(v["m"], 6);
}

#[test]
fn divisibility_error_exits_two() {
    let out = run(&["gen", "--ensemble", "ldpc-regular", "--l", "3", "--r", "4", "--n", "7"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DivisibilityError"));
}

#[test]
fn gen_is_deterministic() {
    let args = ["gen", "--ensemble", "ldpc-regular", "--l", "3", "--r", "4", "--n", "8", "--seed", "5"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn verify_identity_on_tree() {
    let edges = [(0, 0), (1, 0), (1, 1), (2, 1)];
    let g = FactorGraph::build(3, 2, &edges, WeightSpec::Ldpc { fields: vec![0.3, -0.2, 0.5] }).unwrap();
    let path = scratch("tree.json");
    std::fs::write(&path, g.to_json().unwrap()).unwrap();
    let v = json(&run(&["verify-identity", "--graph", path.to_str().unwrap()]));
    assert_eq!(v["schema_version"], 1);
    assert!(v["residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(v["q"].as_f64().unwrap(), 0.0);
    assert_eq!(v["loop_count"], 0);
}

#[test]
fn verify_identity_on_regular_instance() {
    let v = json(&run(&[
        "verify-identity", "--ensemble", "ldpc-regular", "--l", "3", "--r", "4", "--n", "8", "--p", "0.45", "--seed",
        "3",
    ]));
    assert!(v["residual"].as_f64().unwrap() <= 1e-8);
    assert!(v["bp_residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn budget_exceeded_exits_three() {
    let out = run(&[
        "verify-identity", "--ensemble", "ldpc-regular", "--l", "3", "--r", "4", "--n", "8", "--p", "0.45", "--budget",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exact_and_bethe_outputs() {
    let base = ["--ensemble", "ldpc-regular", "--l", "3", "--r", "4", "--n", "8", "--p", "0.3", "--seed", "1"];
    let exact = json(&run(&[&["exact"], &base[..]].concat()));
    assert_eq!(exact["schema_version"], 1);
    assert_eq!(exact["method"], "bruteforce");
    let lz = exact["log_z"].as_f64().unwrap();
    assert!((exact["free_energy"].as_f64().unwrap() - lz / 8.0).abs() < 1e-12);
    let bethe = json(&run(&[&["bethe"], &base[..]].concat()));
    assert_eq!(bethe["schema_version"], 1);
    let bp = json(&run(&[&["bp"], &base[..]].concat()));
    assert_eq!(bp["schema_version"], 1);
}

#[test]
fn series_csv_header() {
    let out = run(&[
        "series", "--ensemble", "ldpc-regular", "--l", "3", "--r", "4", "--n", "8", "--p", "0.47", "--m-max", "3",
        "--size-cutoff", "6",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("M,term,partial_sum,Q"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn rate_function_rows() {
    let out = run(&[
        "rate-function", "--l", "3", "--r", "6", "--theta", "1e-3,1e-2", "--lambda", "1e-3", "--starts", "200",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("theta,rate"));
    for row in &rows[1..] {
        let rate: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(rate < 0.0);
    }
}

#[test]
fn trend_single_row() {
    let out = run(&[
        "trend", "--ensemble", "ldpc-regular", "--l", "3", "--r", "4", "--n-list", "8", "--p", "0.45", "--instances",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
}

#[test]
fn entropy_json() {
    let v = json(&run(&[
        "--format", "json", "entropy", "--ensemble", "ldpc-regular", "--l", "3", "--r", "4", "--n", "8", "--p", "0.45",
        "--instances", "2",
    ]));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn output_file_flag() {
    let path = scratch("gen.json");
    let out = run(&[
        "--out", path.to_str().unwrap(), "gen", "--ensemble", "ldpc-regular", "--l", "3", "--r", "4", "--n", "8",
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(FactorGraph::from_json(&text).is_ok());
}
