//! End-to-end tests of the command-line binary: the
//! generate/validate/solve-central/run/diagnose/compare pipeline and the
//! documented exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualdecomp"))
}

fn work_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ddcli-{}-{}", tag, std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn pipeline_generate_validate_central_run_compare() {
    let dir = work_dir("pipeline");
    let out = dir.join("gen");

    let generate = bin()
        .args(["generate", "--m", "4", "--slots", "6", "--seed", "7"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(generate.status.success(), "{generate:?}");
    let problem = out.join("problem.json");
    assert!(problem.exists());

    let validate = bin()
        .arg("validate")
        .arg("--problem")
        .arg(&problem)
        .output()
        .unwrap();
    assert!(validate.status.success(), "{validate:?}");

    let central = bin()
        .arg("solve-central")
        .arg("--problem")
        .arg(&problem)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(central.status.success(), "{central:?}");
    assert!(out.join("reference.json").exists());

    let run_out = dir.join("run");
    let run = bin()
        .arg("run")
        .arg("--problem")
        .arg(&problem)
        .args([
            "--schedule",
            "alternating",
            "--iters",
            "150",
            "--beta",
            "4",
            "--seed",
            "7",
            "--diagnostics",
            "full",
            "--solve-reference",
        ])
        .arg("--out")
        .arg(&run_out)
        .output()
        .unwrap();
    assert!(run.status.success(), "{run:?}");
    let trace = run_out.join("trace.csv");
    assert!(trace.exists());
    assert!(run_out.join("summary.json").exists());
    assert!(run_out.join("lambda_trajectories.csv").exists());
    assert!(run_out.join("schedule.json").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["m"], 4);
    assert_eq!(summary["iterations_run"], 150);
    assert!(summary["f_star"].is_number());

    // The generated schedule file round-trips through validate.
    let validate_schedule = bin()
        .arg("validate")
        .arg("--schedule")
        .arg(run_out.join("schedule.json"))
        .output()
        .unwrap();
    assert!(validate_schedule.status.success(), "{validate_schedule:?}");

    let compare = bin()
        .arg("compare")
        .arg("--trace")
        .arg(&trace)
        .args(["--tol-viol", "0.5"])
        .output()
        .unwrap();
    assert!(compare.status.success(), "{compare:?}");
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&compare.stdout)).unwrap();
    assert!(report["first_hit_tilde"].is_number() || report["first_hit_tilde"].is_null());

    fs::remove_dir_all(&dir).ok();
}

#[test]
fn diagnose_emits_bound_and_rate_reports() {
    let dir = work_dir("diagnose");
    let diagnose = bin()
        .arg("diagnose")
        .args([
            "--problem",
            "pev",
            "--m",
            "3",
            "--slots",
            "4",
            "--schedule",
            "alternating",
            "--iters",
            "300",
            "--beta",
            "4",
            "--seed",
            "2",
            "--bound-horizon",
            "250",
        ])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        diagnose.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&diagnose.stderr)
    );
    assert!(dir.join("consensus_bound.csv").exists());
    assert!(dir.join("diagnostics.json").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(report["bound_holds_for_all_N"], true);
    let csv = fs::read_to_string(dir.join("consensus_bound.csv")).unwrap();
    assert!(csv.starts_with("N,lhs,rhs"));
    assert_eq!(csv.lines().count(), 251); // header + N = 1..=250
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn validation_failures_exit_with_code_two() {
    let dir = work_dir("badinput");
    // Problem whose coupling can never be satisfied: 1 - x <= 0 on [0, 0.5].
    let bad_problem = r#"{
        "m": 1, "p": 1,
        "agents": [{
            "n": 1,
            "objective": {"q": [1.0]},
            "coupling": {"A": [[-1.0]], "b": [-1.0]},
            "polytope": {"C": [], "d": [], "lb": [0.0], "ub": [0.5]}
        }]
    }"#;
    let path = dir.join("infeasible.json");
    fs::write(&path, bad_problem).unwrap();
    let validate = bin()
        .arg("validate")
        .arg("--problem")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(validate.status.code(), Some(2), "{validate:?}");

    // Running it is also a validation failure (the gate rejects it).
    let run = bin()
        .arg("run")
        .arg("--problem")
        .arg(&path)
        .args(["--schedule", "metropolis", "--iters", "10"])
        .arg("--out")
        .arg(dir.join("runout"))
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2), "{run:?}");
    // Partial outputs were cleaned up.
    assert!(!dir.join("runout").join("trace.csv").exists());

    fs::remove_dir_all(&dir).ok();
}

#[test]
fn solver_failures_exit_with_code_three() {
    let dir = work_dir("solverfail");
    // Locally infeasible polytope: row x <= -1 with box [0, 1]. The
    // centralized solve reports infeasibility (exit 3).
    let infeasible_local = r#"{
        "m": 1, "p": 0,
        "agents": [{
            "n": 1,
            "objective": {"q": [1.0]},
            "coupling": {"A": [], "b": []},
            "polytope": {"C": [[1.0]], "d": [-1.0], "lb": [0.0], "ub": [1.0]}
        }]
    }"#;
    let path = dir.join("local_infeasible.json");
    fs::write(&path, infeasible_local).unwrap();
    let central = bin()
        .arg("solve-central")
        .arg("--problem")
        .arg(&path)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(central.status.code(), Some(3), "{central:?}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn malformed_problem_files_are_rejected() {
    let dir = work_dir("malformed");
    let path = dir.join("ragged.json");
    fs::write(
        &path,
        r#"{"m": 1, "p": 1, "agents": [{"n": 2, "objective": {"q": [1.0, 2.0]},
           "coupling": {"A": [[1.0]], "b": [0.0]},
           "polytope": {"C": [], "d": [], "lb": [0.0, 0.0], "ub": [1.0, 1.0]}}]}"#,
    )
    .unwrap();
    let out = bin()
        .arg("validate")
        .arg("--problem")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    fs::remove_dir_all(&dir).ok();
}
