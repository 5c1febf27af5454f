//! Command-line front-end: validate, solve, compare, sweep.
//!
//! Exit codes: 0 success, 1 usage, 2 validation failure, 3 I/O or parse
//! failure, 4 stopped at the iteration cap, 5 solver error, 6 size guard.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;
use crate::fixed_point::{self, IterationReport, Termination};
use crate::model::{self, ProblemSpec, ValidatedProblem};
use crate::oracle;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_MAX_ITER: i32 = 4;
pub const EXIT_SOLVER: i32 = 5;
pub const EXIT_GUARD: i32 = 6;

#[derive(Debug, Parser)]
#[command(
    name = "tsallis-fpd",
    about = "Finite-horizon fully probabilistic design under Tsallis divergence",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a problem file and report every validation issue.
    Validate { path: PathBuf },
    /// Run the fixed-point solver and write policy, diagnostics, manifest.
    Solve {
        path: PathBuf,
        #[command(flatten)]
        overrides: SolveFlags,
        /// Directory for policy.json, diagnostics.csv, manifest.json.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Solve, then report gaps against the oracles (never judged here).
    Compare {
        path: PathBuf,
        /// Simplex grid step for the brute-force oracle.
        #[arg(long, default_value_t = 0.1)]
        grid_step: f64,
        /// Also report the sup-L1 distance to the classical KL design.
        #[arg(long)]
        kl: bool,
    },
    /// Solve over a grid of (r, omega) values into subdirectories.
    Sweep {
        path: PathBuf,
        /// Comma-separated omega values; defaults to the file's value.
        #[arg(long)]
        omega_list: Option<String>,
        /// Comma-separated r values; defaults to the file's value.
        #[arg(long)]
        r_list: Option<String>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args, Clone)]
struct SolveFlags {
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Initialization: "reference" or "uniform".
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SolveFlags {
    fn apply(&self, spec: &mut ProblemSpec) {
        let opts = spec.solver.get_or_insert_with(Default::default);
        if self.omega.is_some() {
            opts.omega = self.omega;
        }
        if self.tol.is_some() {
            opts.tol = self.tol;
        }
        if self.max_iter.is_some() {
            opts.max_outer = self.max_iter;
        }
        if self.init.is_some() {
            opts.init_mode = self.init.clone();
        }
        if self.seed.is_some() {
            opts.seed = self.seed;
        }
    }
}

/// 17 significant digits, enough to round-trip any f64; locale-independent.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Parse { .. } => EXIT_IO,
        Error::SizeGuard { .. } => EXIT_GUARD,
        Error::Validation { .. }
        | Error::ShapeMismatch(_)
        | Error::AbsoluteContinuity { .. }
        | Error::SupportViolation { .. }
        | Error::InvalidDeformation { .. }
        | Error::Domain { .. } => EXIT_VALIDATION,
        _ => EXIT_SOLVER,
    }
}

fn report_error(e: &Error) -> i32 {
    if let Error::Validation { issues } = e {
        eprintln!("error: problem failed validation ({} issue(s))", issues.len());
        for issue in issues {
            eprintln!("  - {issue}");
        }
    } else {
        eprintln!("error: {e}");
    }
    exit_code(e)
}

#[derive(Debug, Serialize)]
struct ManifestConfig {
    omega: f64,
    tol: f64,
    max_outer: usize,
    init_mode: String,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    input: String,
    config: ManifestConfig,
    policy_path: String,
    diagnostics_path: String,
    exit_status: i32,
    termination: Termination,
    iterations: usize,
    final_residual: Option<f64>,
    objective: Option<f64>,
    wallclock_ms: f64,
}

/// Report summary embedded in the policy file: everything except wall time,
/// which would break byte-for-byte reproducibility.
fn report_summary(report: &IterationReport) -> serde_json::Value {
    serde_json::json!({
        "iterations": report.iterations,
        "deltas": report.deltas,
        "objectives": report.objectives,
        "contraction_ratios": report.contraction_ratios,
        "termination": report.termination,
        "final_residual": report.final_residual,
    })
}

fn write_diagnostics_csv(path: &Path, report: &IterationReport) -> crate::error::Result<()> {
    let mut out = String::from("iter,sup_l1_delta,objective,contraction_ratio,wallclock_ms\n");
    for l in 0..report.iterations {
        let ratio = if l == 0 {
            f64::NAN
        } else {
            report.contraction_ratios[l - 1]
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            l + 1,
            fmt17(report.deltas[l]),
            fmt17(report.objectives[l]),
            fmt17(ratio),
            fmt17(report.wallclock_ms[l]),
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_validate(path: &Path) -> i32 {
    let spec = match model::load_problem(path) {
        Ok(s) => s,
        Err(e) => return report_error(&e),
    };
    match model::validate(&spec) {
        Ok(v) => {
            println!(
                "ok: {} states, {} actions, horizon {}, r = {}",
                v.n_states(),
                v.n_actions(),
                v.horizon,
                v.r.r()
            );
            EXIT_OK
        }
        Err(e) => report_error(&e),
    }
}

struct SolveOutcome {
    exit: i32,
    #[allow(dead_code)]
    report: Option<IterationReport>,
}

fn run_solve(spec: &ValidatedProblem, input: &Path, out_dir: &Path) -> SolveOutcome {
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        return SolveOutcome {
            exit: report_error(&e.into()),
            report: None,
        };
    }
    let t0 = Instant::now();
    let (policies, report) = match fixed_point::iterate(spec, &spec.solver) {
        Ok(pair) => pair,
        Err(e) => {
            return SolveOutcome {
                exit: report_error(&e),
                report: None,
            }
        }
    };
    let exit = match &report.termination {
        Termination::Converged => EXIT_OK,
        Termination::MaxIter => EXIT_MAX_ITER,
        Termination::Error(msg) => {
            eprintln!("solver error: {msg}");
            EXIT_SOLVER
        }
    };
    let policy_path = out_dir.join("policy.json");
    let diagnostics_path = out_dir.join("diagnostics.csv");
    let manifest_path = out_dir.join("manifest.json");
    if let Err(e) = model::save_policy(&policy_path, &policies, Some(report_summary(&report))) {
        return SolveOutcome {
            exit: report_error(&e),
            report: Some(report),
        };
    }
    if let Err(e) = write_diagnostics_csv(&diagnostics_path, &report) {
        return SolveOutcome {
            exit: report_error(&e),
            report: Some(report),
        };
    }
    let objective = report.objectives.last().copied().filter(|v| v.is_finite());
    let manifest = RunManifest {
        input: input.display().to_string(),
        config: ManifestConfig {
            omega: spec.solver.omega,
            tol: spec.solver.tol,
            max_outer: spec.solver.max_outer,
            init_mode: match &spec.solver.init_mode {
                model::InitMode::Reference => "reference".into(),
                model::InitMode::Uniform => "uniform".into(),
                model::InitMode::Custom(_) => "custom".into(),
            },
            seed: spec.solver.rng_seed,
        },
        policy_path: policy_path.display().to_string(),
        diagnostics_path: diagnostics_path.display().to_string(),
        exit_status: exit,
        termination: report.termination.clone(),
        iterations: report.iterations,
        final_residual: report.final_residual,
        objective,
        wallclock_ms: t0.elapsed().as_secs_f64() * 1e3,
    };
    match serde_json::to_string_pretty(&manifest) {
        Ok(text) => {
            if let Err(e) = std::fs::write(&manifest_path, text + "\n") {
                return SolveOutcome {
                    exit: report_error(&e.into()),
                    report: Some(report),
                };
            }
        }
        Err(e) => {
            eprintln!("error: could not serialize manifest: {e}");
            return SolveOutcome {
                exit: EXIT_IO,
                report: Some(report),
            };
        }
    }
    println!(
        "{}: {} iteration(s), final residual {}",
        match &report.termination {
            Termination::Converged => "converged",
            Termination::MaxIter => "stopped at iteration cap",
            Termination::Error(_) => "failed",
        },
        report.iterations,
        report
            .final_residual
            .map(fmt17)
            .unwrap_or_else(|| "n/a".into()),
    );
    SolveOutcome {
        exit,
        report: Some(report),
    }
}

fn cmd_solve(path: &Path, flags: &SolveFlags, out_dir: &Path) -> i32 {
    let mut spec = match model::load_problem(path) {
        Ok(s) => s,
        Err(e) => return report_error(&e),
    };
    flags.apply(&mut spec);
    let validated = match model::validate(&spec) {
        Ok(v) => v,
        Err(e) => return report_error(&e),
    };
    run_solve(&validated, path, out_dir).exit
}

fn cmd_compare(path: &Path, grid_step: f64, kl: bool) -> i32 {
    let spec = match model::load_problem(path).and_then(|s| model::validate(&s)) {
        Ok(v) => v,
        Err(e) => return report_error(&e),
    };
    let (policies, report) = match fixed_point::iterate(&spec, &spec.solver) {
        Ok(pair) => pair,
        Err(e) => return report_error(&e),
    };
    if let Termination::Error(msg) = &report.termination {
        eprintln!("solver error: {msg}");
        return EXIT_SOLVER;
    }
    let solver_objective = match oracle::objective_recursive(&spec, &policies) {
        Ok(v) => v,
        Err(e) => return report_error(&e),
    };
    let (_, brute_objective) = match oracle::brute_force_minimize(&spec, grid_step) {
        Ok(pair) => pair,
        Err(e) => return report_error(&e),
    };
    println!("solver objective:      {}", fmt17(solver_objective));
    println!("brute-force objective: {}", fmt17(brute_objective));
    println!(
        "gap (solver - brute):  {}",
        fmt17(solver_objective - brute_objective)
    );
    if kl {
        let kl_policies = match oracle::kl_fpd_solve(&spec) {
            Ok(p) => p,
            Err(e) => return report_error(&e),
        };
        let dist = match fixed_point::policy_distance(&policies, &kl_policies) {
            Ok(d) => d,
            Err(e) => return report_error(&e),
        };
        println!("sup-L1 distance to KL design: {}", fmt17(dist));
    }
    EXIT_OK
}

fn parse_list(name: &str, raw: &str) -> Result<Vec<f64>, String> {
    let items: Vec<&str> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(format!("--{name} must list at least one value"));
    }
    items
        .iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| format!("--{name}: bad value {s:?}: {e}"))
        })
        .collect()
}

fn cmd_sweep(
    path: &Path,
    omega_list: Option<&str>,
    r_list: Option<&str>,
    out_dir: &Path,
) -> i32 {
    let base = match model::load_problem(path) {
        Ok(s) => s,
        Err(e) => return report_error(&e),
    };
    let omegas: Vec<(String, Option<f64>)> = match omega_list {
        Some(raw) => match parse_list("omega-list", raw) {
            Ok(vals) => vals.iter().map(|&v| (format!("{v}"), Some(v))).collect(),
            Err(msg) => {
                eprintln!("usage error: {msg}");
                return EXIT_USAGE;
            }
        },
        None => vec![("file".into(), None)],
    };
    let rs: Vec<(String, Option<f64>)> = match r_list {
        Some(raw) => match parse_list("r-list", raw) {
            Ok(vals) => vals.iter().map(|&v| (format!("{v}"), Some(v))).collect(),
            Err(msg) => {
                eprintln!("usage error: {msg}");
                return EXIT_USAGE;
            }
        },
        None => vec![("file".into(), None)],
    };
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        return report_error(&e.into());
    }

    let mut summary = String::from("r,omega,iterations,converged,final_residual,objective\n");
    let mut worst = EXIT_OK;
    for (r_name, r_val) in &rs {
        for (omega_name, omega_val) in &omegas {
            let mut spec = base.clone();
            if let Some(r) = r_val {
                spec.r = *r;
            }
            if let Some(w) = omega_val {
                spec.solver.get_or_insert_with(Default::default).omega = Some(*w);
            }
            let run_dir = out_dir.join(format!("r_{r_name}_omega_{omega_name}"));
            let r_used = spec.r;
            let (row, exit) = match model::validate(&spec) {
                Ok(validated) => {
                    let omega_used = validated.solver.omega;
                    let outcome = run_solve(&validated, path, &run_dir);
                    let row = match &outcome.report {
                        Some(report) => format!(
                            "{},{},{},{},{},{}\n",
                            fmt17(r_used),
                            fmt17(omega_used),
                            report.iterations,
                            matches!(report.termination, Termination::Converged),
                            report.final_residual.map(fmt17).unwrap_or("NaN".into()),
                            report
                                .objectives
                                .last()
                                .map(|&v| fmt17(v))
                                .unwrap_or("NaN".into()),
                        ),
                        None => format!(
                            "{},{},0,false,NaN,NaN\n",
                            fmt17(r_used),
                            fmt17(omega_used)
                        ),
                    };
                    (row, outcome.exit)
                }
                Err(e) => {
                    let code = report_error(&e);
                    (
                        format!("{},{},0,false,NaN,NaN\n", fmt17(r_used), omega_name),
                        code,
                    )
                }
            };
            summary.push_str(&row);
            worst = worst.max(exit);
        }
    }
    let summary_path = out_dir.join("sweep.csv");
    if let Err(e) = std::fs::write(&summary_path, summary) {
        return report_error(&e.into());
    }
    println!("sweep summary written to {}", summary_path.display());
    worst
}

fn init_thread_pool() {
    if let Ok(raw) = std::env::var("TSALLIS_FPD_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n > 0 {
                // Ignore failure: the global pool may already be built.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        } else {
            eprintln!("warning: ignoring unparsable TSALLIS_FPD_THREADS={raw:?}");
        }
    }
}

/// Parses and runs a full CLI invocation; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes, everything else is usage.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_thread_pool();
    match &cli.command {
        Command::Validate { path } => cmd_validate(path),
        Command::Solve {
            path,
            overrides,
            out_dir,
        } => cmd_solve(path, overrides, out_dir),
        Command::Compare {
            path,
            grid_step,
            kl,
        } => cmd_compare(path, *grid_step, *kl),
        Command::Sweep {
            path,
            omega_list,
            r_list,
            out_dir,
        } => cmd_sweep(path, omega_list.as_deref(), r_list.as_deref(), out_dir),
    }
}
