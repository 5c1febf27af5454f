//! End-to-end tests for the `tsallis-fpd` binary: every exit code, the
//! on-disk artifacts, and the oracle comparison subcommands.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tsallis-fpd")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code (signal?)")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn validate_ok_exits_zero() {
    let out = run(&["validate", fixture("matched.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
}

#[test]
fn validate_bad_row_exits_two_and_names_the_field() {
    let out = run(&["validate", fixture("bad_row.json").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let text = format!("{}{}", stdout(&out), stderr(&out));
    assert!(text.contains("prior"), "diagnostic should name the field: {text}");
}

#[test]
fn missing_file_exits_three() {
    let out = run(&["validate", "/nonexistent/problem.json"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn malformed_json_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn usage_error_exits_one() {
    let out = run(&["frobnicate"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn solve_matched_converges_in_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "solve",
        fixture("matched.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for name in ["policy.json", "diagnostics.csv", "manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["exit_status"], 0);
    assert_eq!(manifest["termination"], "converged");
    assert_eq!(manifest["iterations"], 1);
}

#[test]
fn solve_max_iter_exits_four_with_partial_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "solve",
        fixture("regression.json").to_str().unwrap(),
        "--max-iter",
        "1",
        "--tol",
        "1e-16",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4, "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iter,sup_l1_delta,objective,contraction_ratio,wallclock_ms");
    assert_eq!(lines.len(), 2, "one header plus one iteration row");
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["termination"], "max_iter");
}

#[test]
fn solve_nonpositive_scale_exits_five() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "solve",
        fixture("nonpositive_scale.json").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 5, "stderr: {}", stderr(&out));
}

#[test]
fn compare_guard_exits_six() {
    let out = run(&[
        "compare",
        fixture("guard.json").to_str().unwrap(),
        "--grid-step",
        "0.02",
    ]);
    assert_eq!(code(&out), 6, "stderr: {}", stderr(&out));
}

#[test]
fn compare_matched_reports_negligible_gap() {
    let out = run(&[
        "compare",
        fixture("matched.json").to_str().unwrap(),
        "--grid-step",
        "0.25",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let gap_line = text
        .lines()
        .find(|l| l.contains("gap"))
        .unwrap_or_else(|| panic!("no gap line in: {text}"));
    let gap: f64 = gap_line
        .rsplit(|c: char| c.is_whitespace() || c == '=')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    // Matched references with zero costs: the reference policy is optimal
    // (objective 0), so the solver cannot lose to any grid point.
    assert!(gap <= 1e-12, "gap = {gap}");
}

#[test]
fn compare_near_kl_reports_small_distance() {
    let out = run(&[
        "compare",
        fixture("near_kl.json").to_str().unwrap(),
        "--grid-step",
        "0.5",
        "--kl",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let dist_line = text
        .lines()
        .find(|l| l.contains("KL"))
        .unwrap_or_else(|| panic!("no KL distance line in: {text}"));
    let dist: f64 = dist_line
        .rsplit(|c: char| c.is_whitespace() || c == '=')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(dist <= 1e-2, "distance to classical design = {dist}");
}

#[test]
fn sweep_writes_summary_rows_per_combination() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        fixture("matched.json").to_str().unwrap(),
        "--omega-list",
        "0.2,0.4",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "r,omega,iterations,converged,final_residual,objective");
    assert_eq!(lines.len(), 3, "header plus one row per omega: {csv}");
    for omega in ["0.2", "0.4"] {
        assert!(
            dir.path()
                .join(format!("r_file_omega_{omega}"))
                .join("policy.json")
                .exists(),
            "missing subdirectory artifacts for omega={omega}; csv: {csv}"
        );
    }
}

#[test]
fn sweep_mixes_ok_and_error_rows_and_propagates_worst_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        fixture("nonpositive_scale.json").to_str().unwrap(),
        "--r-list",
        "0.8,3.0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 5, "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "csv: {csv}");
    assert!(rows.iter().any(|r| r.contains("true")), "csv: {csv}");
}

#[test]
fn sweep_empty_list_is_a_usage_error() {
    let out = run(&[
        "sweep",
        fixture("matched.json").to_str().unwrap(),
        "--omega-list",
        "",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn solve_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&[
            "solve",
            fixture("regression.json").to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let pol_a = std::fs::read(a.path().join("policy.json")).unwrap();
    let pol_b = std::fs::read(b.path().join("policy.json")).unwrap();
    assert_eq!(pol_a, pol_b, "policy.json must be byte-identical across runs");
}
