//! C ABI for the tsallis-fpd solver.
//!
//! Handles are opaque; every fallible call returns a `TsfpdStatus` and the
//! last error message is retrievable per thread via
//! [`tsfpd_last_error_message`]. Strings returned by this library must be
//! released with [`tsfpd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tsallis_fpd::fixed_point::{self, IterationReport, Termination};
use tsallis_fpd::model::{self, PolicySequence, ValidatedProblem};
use tsallis_fpd::Error;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsfpdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ValidationError = 4,
    SolverError = 5,
    GuardError = 6,
    Panic = 7,
}

/// An opaque validated problem.
pub struct TsfpdProblem {
    inner: ValidatedProblem,
}

/// An opaque solve result: the policy plus its iteration report.
pub struct TsfpdSolution {
    policies: PolicySequence,
    report: IterationReport,
}

/// Solver options; `omega <= 0`, `tol <= 0`, or `max_outer == 0` mean
/// "keep the problem file's value".
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TsfpdSolveOptions {
    pub omega: f64,
    pub tol: f64,
    pub max_outer: usize,
}

fn set_error(msg: &str) {
    let cstring = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_for(e: &Error) -> TsfpdStatus {
    match e {
        Error::Parse { .. } | Error::Io(_) => TsfpdStatus::ParseError,
        Error::Validation { .. }
        | Error::ShapeMismatch(_)
        | Error::AbsoluteContinuity { .. }
        | Error::SupportViolation { .. }
        | Error::InvalidDeformation { .. }
        | Error::Domain { .. } => TsfpdStatus::ValidationError,
        Error::SizeGuard { .. } => TsfpdStatus::GuardError,
        _ => TsfpdStatus::SolverError,
    }
}

fn guarded<F: FnOnce() -> TsfpdStatus>(f: F) -> TsfpdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            TsfpdStatus::Panic
        }
    }
}

/// Parses and validates a problem from a JSON document.
///
/// On success writes an owned handle to `out` and returns `Ok`; release it
/// with [`tsfpd_problem_free`].
///
/// # Safety
/// `json` must be a valid NUL-terminated C string; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn tsfpd_problem_from_json(
    json: *const c_char,
    out: *mut *mut TsfpdProblem,
) -> TsfpdStatus {
    guarded(|| {
        if json.is_null() || out.is_null() {
            set_error("null argument");
            return TsfpdStatus::NullArgument;
        }
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("problem JSON is not valid UTF-8");
                return TsfpdStatus::InvalidUtf8;
            }
        };
        let spec: model::ProblemSpec = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => {
                set_error(&format!("parse error: {e}"));
                return TsfpdStatus::ParseError;
            }
        };
        match model::validate(&spec) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(TsfpdProblem { inner }));
                clear_error();
                TsfpdStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Releases a problem handle. NULL is a no-op.
///
/// # Safety
/// `problem` must be NULL or a pointer from [`tsfpd_problem_from_json`],
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsfpd_problem_free(problem: *mut TsfpdProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Runs the fixed-point solver. `options` may be NULL to use the problem
/// file's configuration.
///
/// A solution handle is produced whenever the iteration ran, including
/// max-iteration and mid-run solver failures (inspect
/// [`tsfpd_solution_converged`]); release it with [`tsfpd_solution_free`].
///
/// # Safety
/// `problem` must be a live handle; `out` must be a valid pointer;
/// `options` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn tsfpd_solve(
    problem: *const TsfpdProblem,
    options: *const TsfpdSolveOptions,
    out: *mut *mut TsfpdSolution,
) -> TsfpdStatus {
    guarded(|| {
        if problem.is_null() || out.is_null() {
            set_error("null argument");
            return TsfpdStatus::NullArgument;
        }
        let spec = &(*problem).inner;
        let mut cfg = spec.solver.clone();
        if let Some(opts) = options.as_ref() {
            if opts.omega > 0.0 {
                cfg.omega = opts.omega;
            }
            if opts.tol > 0.0 {
                cfg.tol = opts.tol;
            }
            if opts.max_outer > 0 {
                cfg.max_outer = opts.max_outer;
            }
        }
        match fixed_point::iterate(spec, &cfg) {
            Ok((policies, report)) => {
                let status = match &report.termination {
                    Termination::Error(msg) => {
                        set_error(msg);
                        TsfpdStatus::SolverError
                    }
                    _ => {
                        clear_error();
                        TsfpdStatus::Ok
                    }
                };
                *out = Box::into_raw(Box::new(TsfpdSolution { policies, report }));
                status
            }
            Err(e) => {
                set_error(&e.to_string());
                status_for(&e)
            }
        }
    })
}

/// Releases a solution handle. NULL is a no-op.
///
/// # Safety
/// `solution` must be NULL or a pointer from [`tsfpd_solve`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsfpd_solution_free(solution: *mut TsfpdSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Serializes the solved policy as a JSON document (same schema as the CLI's
/// policy.json, without the report). Free the string with
/// [`tsfpd_string_free`].
///
/// # Safety
/// `solution` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tsfpd_solution_policy_json(
    solution: *const TsfpdSolution,
    out: *mut *mut c_char,
) -> TsfpdStatus {
    guarded(|| {
        if solution.is_null() || out.is_null() {
            set_error("null argument");
            return TsfpdStatus::NullArgument;
        }
        let file = model::policy_to_file(&(*solution).policies, None);
        match serde_json::to_string_pretty(&file) {
            Ok(text) => match CString::new(text) {
                Ok(cstring) => {
                    *out = cstring.into_raw();
                    clear_error();
                    TsfpdStatus::Ok
                }
                Err(_) => {
                    set_error("policy JSON contained an interior NUL");
                    TsfpdStatus::SolverError
                }
            },
            Err(e) => {
                set_error(&format!("serialization error: {e}"));
                TsfpdStatus::SolverError
            }
        }
    })
}

/// Number of outer iterations the solve ran.
///
/// # Safety
/// `solution` must be a live handle (NULL returns 0).
#[no_mangle]
pub unsafe extern "C" fn tsfpd_solution_iterations(solution: *const TsfpdSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.report.iterations)
}

/// Final residual d(T(p*), p*); NaN unless the run converged.
///
/// # Safety
/// `solution` must be a live handle (NULL returns NaN).
#[no_mangle]
pub unsafe extern "C" fn tsfpd_solution_final_residual(solution: *const TsfpdSolution) -> f64 {
    solution
        .as_ref()
        .and_then(|s| s.report.final_residual)
        .unwrap_or(f64::NAN)
}

/// 1 if the run converged, 0 otherwise.
///
/// # Safety
/// `solution` must be a live handle (NULL returns 0).
#[no_mangle]
pub unsafe extern "C" fn tsfpd_solution_converged(solution: *const TsfpdSolution) -> i32 {
    match solution.as_ref() {
        Some(s) if s.report.termination == Termination::Converged => 1,
        _ => 0,
    }
}

/// Releases a string produced by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsfpd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The message of the most recent error on this thread, or NULL if the last
/// call succeeded. The pointer is owned by the library and valid until the
/// next fallible call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn tsfpd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |msg| msg.as_ptr())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_json() -> CString {
        let spec = tsallis_fpd::testutil::matched_reference_spec(2, 2, 2, 2.0);
        CString::new(serde_json::to_string(&spec).unwrap()).unwrap()
    }

    #[test]
    fn parse_solve_and_serialize_roundtrip() {
        unsafe {
            let mut problem: *mut TsfpdProblem = ptr::null_mut();
            let status = tsfpd_problem_from_json(sample_json().as_ptr(), &mut problem);
            assert_eq!(status, TsfpdStatus::Ok);
            assert!(!problem.is_null());

            let mut solution: *mut TsfpdSolution = ptr::null_mut();
            let status = tsfpd_solve(problem, ptr::null(), &mut solution);
            assert_eq!(status, TsfpdStatus::Ok);
            assert_eq!(tsfpd_solution_converged(solution), 1);
            assert_eq!(tsfpd_solution_iterations(solution), 1);
            assert!(tsfpd_solution_final_residual(solution) < 1e-12);

            let mut json: *mut c_char = ptr::null_mut();
            let status = tsfpd_solution_policy_json(solution, &mut json);
            assert_eq!(status, TsfpdStatus::Ok);
            let text = CStr::from_ptr(json).to_str().unwrap();
            let parsed: serde_json::Value = serde_json::from_str(text).unwrap();
            assert!(parsed["policy"]["1"].is_array());
            tsfpd_string_free(json);

            tsfpd_solution_free(solution);
            tsfpd_problem_free(problem);
        }
    }

    #[test]
    fn parse_error_reports_message() {
        unsafe {
            let mut problem: *mut TsfpdProblem = ptr::null_mut();
            let bad = CString::new("{ not json").unwrap();
            let status = tsfpd_problem_from_json(bad.as_ptr(), &mut problem);
            assert_eq!(status, TsfpdStatus::ParseError);
            assert!(problem.is_null());
            let msg = tsfpd_last_error_message();
            assert!(!msg.is_null());
            let text = CStr::from_ptr(msg).to_str().unwrap();
            assert!(text.contains("parse error"), "{text}");
        }
    }

    #[test]
    fn validation_error_status() {
        unsafe {
            let mut spec = tsallis_fpd::testutil::matched_reference_spec(2, 2, 1, 2.0);
            spec.prior = vec![0.9, 0.3];
            let json = CString::new(serde_json::to_string(&spec).unwrap()).unwrap();
            let mut problem: *mut TsfpdProblem = ptr::null_mut();
            let status = tsfpd_problem_from_json(json.as_ptr(), &mut problem);
            assert_eq!(status, TsfpdStatus::ValidationError);
        }
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            let mut problem: *mut TsfpdProblem = ptr::null_mut();
            assert_eq!(
                tsfpd_problem_from_json(ptr::null(), &mut problem),
                TsfpdStatus::NullArgument
            );
            assert_eq!(
                tsfpd_solve(ptr::null(), ptr::null(), ptr::null_mut()),
                TsfpdStatus::NullArgument
            );
            tsfpd_problem_free(ptr::null_mut());
            tsfpd_solution_free(ptr::null_mut());
            tsfpd_string_free(ptr::null_mut());
        }
    }

    #[test]
    fn options_override_iteration_cap() {
        unsafe {
            let spec = {
                let mut rng = tsallis_fpd::testutil::SplitMix64::new(5);
                tsallis_fpd::testutil::random_problem_spec(&mut rng, 2, 2, 2, 1.5)
            };
            let json = CString::new(serde_json::to_string(&spec).unwrap()).unwrap();
            let mut problem: *mut TsfpdProblem = ptr::null_mut();
            assert_eq!(
                tsfpd_problem_from_json(json.as_ptr(), &mut problem),
                TsfpdStatus::Ok
            );
            let opts = TsfpdSolveOptions {
                omega: 0.4,
                tol: 1e-16,
                max_outer: 1,
            };
            let mut solution: *mut TsfpdSolution = ptr::null_mut();
            assert_eq!(tsfpd_solve(problem, &opts, &mut solution), TsfpdStatus::Ok);
            assert_eq!(tsfpd_solution_iterations(solution), 1);
            assert_eq!(tsfpd_solution_converged(solution), 0);
            tsfpd_solution_free(solution);
            tsfpd_problem_free(problem);
        }
    }
}
