#ifndef TSALLIS_FPD_H
#define TSALLIS_FPD_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum TsfpdStatus {
  TSFPD_STATUS_OK = 0,
  TSFPD_STATUS_NULL_ARGUMENT = 1,
  TSFPD_STATUS_INVALID_UTF8 = 2,
  TSFPD_STATUS_PARSE_ERROR = 3,
  TSFPD_STATUS_VALIDATION_ERROR = 4,
  TSFPD_STATUS_SOLVER_ERROR = 5,
  TSFPD_STATUS_GUARD_ERROR = 6,
  TSFPD_STATUS_PANIC = 7,
} TsfpdStatus;

/**
 * An opaque validated problem.
 */
typedef struct tsfpd_problem tsfpd_problem;

/**
 * An opaque solve result: the policy plus its iteration report.
 */
typedef struct tsfpd_solution tsfpd_solution;

/**
 * Solver options; `omega <= 0`, `tol <= 0`, or `max_outer == 0` mean
 * "keep the problem file's value".
 */
typedef struct TsfpdSolveOptions {
  double omega;
  double tol;
  uintptr_t max_outer;
} TsfpdSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses and validates a problem from a JSON document.
 *
 * On success writes an owned handle to `out` and returns `Ok`; release it
 * with [`tsfpd_problem_free`].
 *
 * # Safety
 * `json` must be a valid NUL-terminated C string; `out` must be a valid
 * pointer.
 */
enum TsfpdStatus tsfpd_problem_from_json(const char *json, struct tsfpd_problem **out);

/**
 * Releases a problem handle. NULL is a no-op.
 *
 * # Safety
 * `problem` must be NULL or a pointer from [`tsfpd_problem_from_json`],
 * not yet freed.
 */
void tsfpd_problem_free(struct tsfpd_problem *problem);

/**
 * Runs the fixed-point solver. `options` may be NULL to use the problem
 * file's configuration.
 *
 * A solution handle is produced whenever the iteration ran, including
 * max-iteration and mid-run solver failures (inspect
 * [`tsfpd_solution_converged`]); release it with [`tsfpd_solution_free`].
 *
 * # Safety
 * `problem` must be a live handle; `out` must be a valid pointer;
 * `options` must be NULL or valid.
 */
enum TsfpdStatus tsfpd_solve(const struct tsfpd_problem *problem,
                             const struct TsfpdSolveOptions *options,
                             struct tsfpd_solution **out);

/**
 * Releases a solution handle. NULL is a no-op.
 *
 * # Safety
 * `solution` must be NULL or a pointer from [`tsfpd_solve`], not yet freed.
 */
void tsfpd_solution_free(struct tsfpd_solution *solution);

/**
 * Serializes the solved policy as a JSON document (same schema as the CLI's
 * policy.json, without the report). Free the string with
 * [`tsfpd_string_free`].
 *
 * # Safety
 * `solution` must be a live handle; `out` must be a valid pointer.
 */
enum TsfpdStatus tsfpd_solution_policy_json(const struct tsfpd_solution *solution, char **out);

/**
 * Number of outer iterations the solve ran.
 *
 * # Safety
 * `solution` must be a live handle (NULL returns 0).
 */
uintptr_t tsfpd_solution_iterations(const struct tsfpd_solution *solution);

/**
 * Final residual d(T(p*), p*); NaN unless the run converged.
 *
 * # Safety
 * `solution` must be a live handle (NULL returns NaN).
 */
double tsfpd_solution_final_residual(const struct tsfpd_solution *solution);

/**
 * 1 if the run converged, 0 otherwise.
 *
 * # Safety
 * `solution` must be a live handle (NULL returns 0).
 */
int32_t tsfpd_solution_converged(const struct tsfpd_solution *solution);

/**
 * Releases a string produced by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void tsfpd_string_free(char *s);

/**
 * The message of the most recent error on this thread, or NULL if the last
 * call succeeded. The pointer is owned by the library and valid until the
 * next fallible call on the same thread; do not free it.
 */
const char *tsfpd_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSALLIS_FPD_H */
