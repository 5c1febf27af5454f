//! Finite-horizon fully probabilistic design under the Tsallis divergence.
//!
//! The solver minimizes a Tsallis-divergence-plus-expected-cost objective
//! over closed-loop policies of a discrete Markov model by backward
//! induction inside a relaxed outer fixed-point loop, and ships with
//! enumeration, brute-force, and classical-KL oracles for cross-checking.
//!
//! Module map:
//! - [`divergence`]: deformed log/exp, PMFs, Tsallis divergence, the
//!   non-additive chain rule.
//! - [`model`]: problem description, validation, (de)serialization.
//! - [`stage`]: the single-stage deformed-Gibbs solver and its scale search.
//! - [`induction`]: stage-term assembly and the backward-sweep operator T.
//! - [`fixed_point`]: the relaxed outer loop and convergence diagnostics.
//! - [`oracle`]: trajectory enumeration, brute-force search, classical KL
//!   design.
//! - [`cli`]: the command-line front-end.

pub mod cli;
pub mod divergence;
pub mod error;
pub mod fixed_point;
pub mod induction;
pub mod model;
pub mod oracle;
pub mod stage;

#[doc(hidden)]
pub mod testutil;

pub use divergence::{exp_r, log_r, tsallis_div, ConditionalPmf, DeformParam, Pmf};
pub use error::{Error, Result};
pub use fixed_point::{iterate, IterationReport, Termination};
pub use model::{load_problem, validate, PolicySequence, ProblemSpec, ValidatedProblem};
