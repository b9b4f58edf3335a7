//! The `lbl` binary end to end: exit codes and stream contents.

use std::path::Path;
use std::process::{Command, Output};

fn lbl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbl")).args(args).output().expect("binary runs")
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name).to_string_lossy().into_owned()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn simulate_bundled_scenario_by_path_and_name() {
    let by_path = lbl(&["simulate", &data("squaretest.toml")]);
    assert_eq!(by_path.status.code(), Some(0), "{}", text(&by_path.stderr));
    let by_name = lbl(&["simulate", "squaretest"]);
    assert_eq!(by_path.stdout, by_name.stdout);
    assert!(text(&by_path.stdout).starts_with("frame,status,"));
    assert!(text(&by_path.stderr).contains("analytic error: max"));
}

#[test]
fn simulate_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let out = lbl(&["simulate", "squaretest", "-o", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 5);
    assert!(text(&out.stdout).contains("4 solved"));
}

#[test]
fn missing_scenario_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let out = lbl(&["simulate", "no-such-file.toml", "-o", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(!csv.exists());
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(lbl(&[]).status.code(), Some(1));
    assert_eq!(lbl(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lbl(&["schedule", "80", "fast", "1"]).status.code(), Some(1));
    assert_eq!(lbl(&["--help"]).status.code(), Some(0));
}

#[test]
fn solve_bundled_observations() {
    let out = lbl(&["solve", &data("squaretest-frame0.obs")]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    for needle in ["candidate 1", "candidate 2", "selected", "residuals", "differences relative to buoy 1"] {
        assert!(stdout.contains(needle), "missing {needle}:\n{stdout}");
    }
}

#[test]
fn solve_symmetric_axis_exits_2_with_taxonomy_name() {
    let out = lbl(&["solve", &data("symmetric.obs")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("SingularDenominator"));
}

#[test]
fn schedule_exit_codes() {
    let ok = lbl(&["schedule", "80", "640", "1"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(text(&ok.stdout).contains("T_f = 8 s, within the 10 s budget"));
    let over = lbl(&["schedule", "200", "640", "1"]);
    assert_eq!(over.status.code(), Some(2));
    assert!(text(&over.stderr).contains("BudgetExceeded"));
    assert_eq!(lbl(&["schedule", "0", "640", "1"]).status.code(), Some(1));
}

#[test]
fn verify_verdicts_depend_only_on_seed() {
    let a = lbl(&["verify", "--seed", "9"]);
    let b = lbl(&["verify", "--seed", "9"]);
    assert_eq!(a.stdout, b.stdout);
    assert!(matches!(a.status.code(), Some(0) | Some(3)));
    let stdout = text(&a.stdout);
    assert!(stdout.starts_with("seed 9\n"));
    let failed = stdout.lines().filter(|l| l.starts_with("FAIL")).count();
    assert_eq!(a.status.code() == Some(3), failed > 0);
}
