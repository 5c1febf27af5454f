//! The relaxed operator, the outer fixed-point loop, and its diagnostics.

use std::time::Instant;

use serde::Serialize;

use crate::divergence::ConditionalPmf;
use crate::error::{Error, Result};
use crate::induction::apply_t;
use crate::model::{init_policies, IterationConfig, PolicySequence, ValidatedProblem};
use crate::oracle;

/// Iterations to discard before reading off an empirical contraction factor.
pub const CONTRACTION_BURN_IN: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
    Error(String),
}

/// Immutable record of one outer-loop run.
#[derive(Debug, Clone, Serialize)]
pub struct IterationReport {
    pub iterations: usize,
    /// Sup-(stage, state) row-L1 distance between successive iterates.
    pub deltas: Vec<f64>,
    /// Exact objective of each iterate (NaN if an enumeration guard tripped).
    pub objectives: Vec<f64>,
    /// deltas[l] / deltas[l-1]; NaN where the denominator is zero.
    pub contraction_ratios: Vec<f64>,
    pub termination: Termination,
    /// d(T(p*), p*) at the unrelaxed operator, set on convergence.
    pub final_residual: Option<f64>,
    /// Wall time per iteration. Excluded from determinism guarantees.
    pub wallclock_ms: Vec<f64>,
}

/// Sup over stages and conditioning states of the row L1 distance.
/// Bounded by 2 for any pair of policy sequences.
pub fn policy_distance(a: &PolicySequence, b: &PolicySequence) -> Result<f64> {
    if a.horizon() != b.horizon() {
        return Err(Error::ShapeMismatch(format!(
            "policy horizons differ: {} vs {}",
            a.horizon(),
            b.horizon()
        )));
    }
    let mut sup = 0.0f64;
    for k in 1..=a.horizon() {
        let (sa, sb) = (a.stage(k), b.stage(k));
        if sa.n_conditions() != sb.n_conditions() || sa.n_outcomes() != sb.n_outcomes() {
            return Err(Error::ShapeMismatch(format!(
                "stage {k} shapes differ: {}x{} vs {}x{}",
                sa.n_conditions(),
                sa.n_outcomes(),
                sb.n_conditions(),
                sb.n_outcomes()
            )));
        }
        for x in 0..sa.n_conditions() {
            sup = sup.max(sa.row(x).l1_distance(sb.row(x)));
        }
    }
    Ok(sup)
}

/// One application of the relaxed operator: omega * T(p) + (1 - omega) * p,
/// rowwise. omega = 1 returns T(p) exactly (no blending arithmetic).
pub fn apply_t_relaxed(
    spec: &ValidatedProblem,
    policies_l: &PolicySequence,
    omega: f64,
) -> Result<PolicySequence> {
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::Domain {
            op: "apply_t_relaxed omega",
            value: omega,
        });
    }
    let t = apply_t(spec, policies_l)?;
    if omega == 1.0 {
        return Ok(t);
    }
    let mut stages = Vec::with_capacity(t.horizon());
    for k in 1..=t.horizon() {
        let rows = (0..t.stage(k).n_conditions())
            .map(|x| t.stage(k).row(x).lerp(policies_l.stage(k).row(x), omega))
            .collect();
        stages.push(ConditionalPmf::new(rows)?);
    }
    Ok(PolicySequence::new(stages))
}

fn record_objective(spec: &ValidatedProblem, policies: &PolicySequence) -> f64 {
    oracle::objective_recursive(spec, policies).unwrap_or(f64::NAN)
}

/// The outer fixed-point loop. Starts from the configured initialization,
/// applies the relaxed operator until successive iterates are within `tol`
/// in the sup row-L1 metric or `max_outer` sweeps have run.
///
/// The objective is recorded every iteration for diagnostics but never
/// consulted for termination. On a solver error mid-run the report carries
/// the partial history and the last good iterate is returned.
pub fn iterate(
    spec: &ValidatedProblem,
    cfg: &IterationConfig,
) -> Result<(PolicySequence, IterationReport)> {
    cfg.validate()?;
    let mut current = init_policies(spec, cfg)?;
    let mut deltas = Vec::new();
    let mut objectives = Vec::new();
    let mut wallclock_ms = Vec::new();
    let mut termination = Termination::MaxIter;
    let mut final_residual = None;

    for _ in 0..cfg.max_outer {
        let t0 = Instant::now();
        let next = match apply_t_relaxed(spec, &current, cfg.omega) {
            Ok(next) => next,
            Err(e) => {
                termination = Termination::Error(e.to_string());
                break;
            }
        };
        let delta = policy_distance(&next, &current)?;
        current = next;
        deltas.push(delta);
        objectives.push(record_objective(spec, &current));
        wallclock_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        if delta <= cfg.tol {
            termination = Termination::Converged;
            // The fixed-point property is interchangeable between the relaxed
            // and unrelaxed operators; report the residual against T itself.
            let t_star = apply_t(spec, &current)?;
            final_residual = Some(policy_distance(&t_star, &current)?);
            break;
        }
    }

    let contraction_ratios = ratio_series(&deltas);
    let report = IterationReport {
        iterations: deltas.len(),
        deltas,
        objectives,
        contraction_ratios,
        termination,
        final_residual,
        wallclock_ms,
    };
    Ok((current, report))
}

fn ratio_series(deltas: &[f64]) -> Vec<f64> {
    (1..deltas.len())
        .map(|l| {
            if deltas[l - 1] == 0.0 {
                f64::NAN
            } else {
                deltas[l] / deltas[l - 1]
            }
        })
        .collect()
}

/// Empirical contraction factor: the maximum ratio deltas[l]/deltas[l-1]
/// after a burn-in of [`CONTRACTION_BURN_IN`] iterations, skipping ratios
/// with a zero denominator. Requires at least 6 recorded deltas.
pub fn contraction_estimate(report: &IterationReport) -> Result<f64> {
    if report.deltas.len() < CONTRACTION_BURN_IN + 1 {
        return Err(Error::InsufficientHistory {
            have: report.deltas.len(),
            need: CONTRACTION_BURN_IN + 1,
        });
    }
    let mut best: Option<f64> = None;
    for l in CONTRACTION_BURN_IN..report.deltas.len() {
        if report.deltas[l - 1] == 0.0 {
            continue;
        }
        let ratio = report.deltas[l] / report.deltas[l - 1];
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or(Error::InsufficientHistory {
        have: 0,
        need: 1,
    })
}
