//! End-to-end checks of the command-line binary: subcommands, artifacts,
//! exit codes.

mod common;

use common::case_path;
use std::path::Path;
use std::process::{Command, Output};

fn dpopf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpopf"))
        .args(args)
        .env("DPOPF_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn path_arg(name: &str) -> String {
    case_path(name).to_str().unwrap().to_string()
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("artifacts");
    let output = dpopf(&[
        "run",
        "--case",
        &path_arg("case3.json"),
        "--zones",
        &path_arg("case3_zones.json"),
        "--algo",
        "dp-admm",
        "--rho",
        "2000",
        "--max-iters",
        "60",
        "--tol",
        "1e-4",
        "--alpha",
        "0.05",
        "--runs",
        "2",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    for artifact in ["trace.csv", "envelope.csv", "metrics.csv", "sensitivity.csv"] {
        let p = out.join(artifact);
        assert!(p.exists(), "missing {artifact}");
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.lines().count() > 1, "{artifact} is empty");
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("mean optimality loss"));
}

#[test]
fn attack_emits_parseable_matrix() {
    let output = dpopf(&[
        "attack",
        "--case",
        &path_arg("case3.json"),
        "--zones",
        &path_arg("case3_zones.json"),
        "--algo",
        "admm",
        "--rho",
        "2000",
        "--max-iters",
        "100",
        "--tol",
        "1e-4",
        "--target-zone",
        "east",
        "--target-bus",
        "2",
        "--alphas",
        "0.05",
        "--budgets",
        "1,5",
        "--upsilon",
        "1e8",
        "--runs",
        "1",
    ]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8(output.stdout).unwrap();
    let matrix = dpopf::harness::parse_attack_matrix_csv(&stdout).unwrap();
    assert_eq!(matrix.budgets, vec![1, 5]);
    assert_eq!(matrix.errors.len(), 1);
    // Non-private run: the attack recovers the load almost exactly.
    assert!(matrix.errors[0][0] < 0.1, "error {}", matrix.errors[0][0]);
}

#[test]
fn sensitivity_reports_global_and_local() {
    let output = dpopf(&[
        "sensitivity",
        "--case",
        &path_arg("case2.json"),
        "--zones",
        &path_arg("case2_zones.json"),
        "--alpha",
        "0.10",
    ]);
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("global sensitivity bound: 0.5"));
    // z2's local sensitivity: alpha * d / beta = 0.05 / 10.
    let z2 = stdout.lines().find(|l| l.starts_with("z2,")).unwrap();
    let delta: f64 = z2.split(',').nth(1).unwrap().parse().unwrap();
    assert!((delta - 5e-3).abs() < 1e-8, "delta {delta}");
}

#[test]
fn convert_round_trips_matpower() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("case6_converted.json");
    let output = dpopf(&[
        "convert",
        "--case",
        &path_arg("case6.m"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let case = dpopf::case::parse_case_json(&text).unwrap();
    assert_eq!(case.num_buses(), 6);
    assert_eq!(case.gens.len(), 3);
}

#[test]
fn exit_codes_match_contract() {
    // Usage error: unknown flag.
    let usage = dpopf(&["run", "--no-such-flag"]);
    assert_eq!(usage.status.code(), Some(1));
    // Data error: missing case file.
    let data = dpopf(&["run", "--case", "/nonexistent/case.json"]);
    assert_eq!(data.status.code(), Some(2));
    // Data error: malformed algorithm name.
    let algo = dpopf(&[
        "run",
        "--case",
        &path_arg("case2.json"),
        "--algo",
        "quantum",
    ]);
    assert_eq!(algo.status.code(), Some(2));
    // Solver failure: infeasible system (load beyond generation).
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{
            "base_mva": 100.0, "slack_bus": 1,
            "buses": [{"id":1,"load_mw":0},{"id":2,"load_mw":500}],
            "lines": [{"from":1,"to":2,"susceptance_pu":10.0,"capacity_mw":1000}],
            "gens": [{"bus":1,"pmin_mw":0,"pmax_mw":100,"c2_per_mw2":0.01,"c1_per_mw":1}]
        }"#,
    )
    .unwrap();
    let solver = dpopf(&["run", "--case", bad.to_str().unwrap()]);
    assert_eq!(solver.status.code(), Some(3));
    // Help exits cleanly.
    let help = dpopf(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn failed_run_leaves_no_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("artifacts");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{").unwrap();
    let output = dpopf(&["run", "--case", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!output.status.success());
    assert!(!Path::new(&out).exists());
}
