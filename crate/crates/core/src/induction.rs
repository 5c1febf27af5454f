//! Stage-wise effective costs and the backward sweep.
//!
//! One sweep of the solution operator `T` runs k = N, N-1, ..., 1. At each
//! stage the multi-stage objective is reduced, by the non-additivity
//! expansion plus a Gauss-Seidel freezing of the bilinear/trilinear factors,
//! to a single-stage problem of the canonical single-row shape: earlier stages are frozen
//! at the previous outer iterate, later stages at the values already updated
//! in this sweep.
//!
//! All divergences here are computed by exhaustive trajectory enumeration;
//! instances are desk-scale by construction and enumeration is the easiest
//! path to trust. The recursive expansion lives in the oracle module as an
//! independent cross-check.

use rayon::prelude::*;

use crate::divergence::{tsallis_div, ConditionalPmf, KahanSum, Pmf};
use crate::divergence::tsallis_div_weights;
use crate::error::{Error, Result};
use crate::model::{PolicySequence, ValidatedProblem};
use crate::stage::{single_stage_solve, StageProblem};

/// Guard on enumerated trajectory tables.
pub const ENUMERATION_GUARD: u128 = 10_000_000;
/// Positivity floor for the stage scale.
pub const RHO_EPSILON: f64 = 1e-12;

/// The frozen-policy bookkeeping of one sweep position: `p1` holds stages
/// 1..=k from outer iterate l (the stage-k entry is the previous-iterate
/// copy), `p2` the stages k+1..=N already updated in this sweep (empty at
/// k = N).
#[derive(Debug, Clone, Copy)]
pub struct PSets<'a> {
    pub p1: &'a [ConditionalPmf],
    pub p2: &'a [ConditionalPmf],
    pub k: usize,
}

impl<'a> PSets<'a> {
    pub fn new(policies_l: &'a PolicySequence, updated: &'a [ConditionalPmf], k: usize) -> Self {
        PSets {
            p1: &policies_l.stages()[..k],
            p2: updated,
            k,
        }
    }

    /// Previous-iterate policy for stage k itself.
    fn frozen_stage_policy(&self) -> &ConditionalPmf {
        &self.p1[self.k - 1]
    }
}

/// Per-(state, action) effective costs and scales assembled for one stage,
/// with a named breakdown of every ingredient for diagnostics.
#[derive(Debug, Clone)]
pub struct StageTerms {
    /// Effective cost `J[x_{k-1}][u_k]`.
    pub j: Vec<Vec<f64>>,
    /// stage scale per conditioning state. Recorded even when
    /// non-positive; positivity is enforced where the stage is solved.
    pub rho: Vec<f64>,
    pub components: StageTermComponents,
}

#[derive(Debug, Clone)]
pub struct StageTermComponents {
    /// `D_r` of the frozen behavior prefix against the reference prefix.
    pub prefix_divergence: f64,
    /// Plant divergence per (x_{k-1}, u_k).
    pub plant_divergence: Vec<Vec<f64>>,
    /// Frozen stage-k policy divergence per x_{k-1}.
    pub frozen_policy_divergence: Vec<f64>,
    /// Suffix divergence per successor state x_k (empty suffix at k = N).
    pub suffix_divergence: Vec<f64>,
    /// Plant expectation of the suffix divergence per (x_{k-1}, u_k).
    pub suffix_expectation: Vec<Vec<f64>>,
    /// Suffix expectation additionally averaged under the frozen stage-k
    /// policy, per x_{k-1}.
    pub frozen_suffix_expectation: Vec<f64>,
    /// Stage cost expectation under the plant per (x_{k-1}, u_k).
    pub cost_expectation: Vec<Vec<f64>>,
    /// Expected total cost over stages k+1..=N given the stage-k successor
    /// state (zero at k = N).
    pub suffix_cost_to_go: Vec<f64>,
    /// Plant expectation of the suffix cost-to-go per (x_{k-1}, u_k).
    pub suffix_cost_expectation: Vec<Vec<f64>>,
}

fn guarded_size(what: &'static str, count: u128) -> Result<()> {
    if count > ENUMERATION_GUARD {
        return Err(Error::SizeGuard {
            what,
            size: count,
            limit: ENUMERATION_GUARD,
        });
    }
    Ok(())
}

/// Enumerates the behavior and reference trajectory tables over stages
/// 0..k-1 (prior plus stages 1..=k-1), in lexicographic trajectory order.
fn enumerate_prefix(
    spec: &ValidatedProblem,
    policies: &[ConditionalPmf],
    k: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = spec.n_states();
    let m = spec.n_actions();
    let size = (n as u128) * ((m as u128) * (n as u128)).pow(k as u32 - 1);
    guarded_size("prefix trajectory table", size)?;

    // Entries are (last state, behavior probability, reference probability).
    let mut trajs: Vec<(usize, f64, f64)> = (0..n)
        .map(|x0| (x0, spec.prior.get(x0), spec.ref_prior.get(x0)))
        .collect();
    for j in 1..k {
        let plant = spec.plant_stage(j);
        let ref_plant = spec.ref_plant_stage(j);
        let policy = &policies[j - 1];
        let ref_policy = spec.ref_policy_stage(j);
        let mut next = Vec::with_capacity(trajs.len() * m * n);
        for &(x, p, q) in &trajs {
            for u in 0..m {
                let pu = p * policy.row(x).get(u);
                let qu = q * ref_policy.row(x).get(u);
                let row = spec.plant_row(x, u);
                for x_next in 0..n {
                    next.push((
                        x_next,
                        pu * plant.row(row).get(x_next),
                        qu * ref_plant.row(row).get(x_next),
                    ));
                }
            }
        }
        trajs = next;
    }
    Ok((
        trajs.iter().map(|t| t.1).collect(),
        trajs.iter().map(|t| t.2).collect(),
    ))
}

/// Tsallis divergence between the frozen behavior truncated to stages
/// 0..k-1 and the reference truncated likewise. At k = 1 this is the
/// prior-only divergence.
pub fn prefix_divergence(
    spec: &ValidatedProblem,
    policies_l: &PolicySequence,
    k: usize,
) -> Result<f64> {
    debug_assert!(k >= 1 && k <= spec.horizon);
    let (p, q) = enumerate_prefix(spec, &policies_l.stages()[..k - 1], k)?;
    tsallis_div_weights(&p, &q, spec.r)
}

/// Tsallis divergence of the conditional suffix process over stages
/// k+1..=N started at `x_k`, against the reference suffix. `updated[j]`
/// holds the (already updated) policy for stage k+1+j. The empty suffix at
/// k = N has divergence 0.
pub fn suffix_divergence(
    spec: &ValidatedProblem,
    updated: &[ConditionalPmf],
    k: usize,
    x_k: usize,
) -> Result<f64> {
    debug_assert!(k <= spec.horizon);
    debug_assert_eq!(updated.len(), spec.horizon - k);
    if k == spec.horizon {
        return Ok(0.0);
    }
    let n = spec.n_states();
    let m = spec.n_actions();
    let size = ((m as u128) * (n as u128)).pow((spec.horizon - k) as u32);
    guarded_size("suffix trajectory table", size)?;

    let mut trajs: Vec<(usize, f64, f64)> = vec![(x_k, 1.0, 1.0)];
    for j in (k + 1)..=spec.horizon {
        let plant = spec.plant_stage(j);
        let ref_plant = spec.ref_plant_stage(j);
        let policy = &updated[j - k - 1];
        let ref_policy = spec.ref_policy_stage(j);
        let mut next = Vec::with_capacity(trajs.len() * m * n);
        for &(x, p, q) in &trajs {
            for u in 0..m {
                let pu = p * policy.row(x).get(u);
                let qu = q * ref_policy.row(x).get(u);
                let row = spec.plant_row(x, u);
                for x_next in 0..n {
                    next.push((
                        x_next,
                        pu * plant.row(row).get(x_next),
                        qu * ref_plant.row(row).get(x_next),
                    ));
                }
            }
        }
        trajs = next;
    }
    let p: Vec<f64> = trajs.iter().map(|t| t.1).collect();
    let q: Vec<f64> = trajs.iter().map(|t| t.2).collect();
    tsallis_div_weights(&p, &q, spec.r)
}

/// Marginal distribution of `x_{k-1}` under the prior, plant, and the given
/// policies for stages 1..k-1.
pub fn state_marginal(
    spec: &ValidatedProblem,
    policies: &[ConditionalPmf],
    k: usize,
) -> Vec<f64> {
    let n = spec.n_states();
    let m = spec.n_actions();
    let mut marginal: Vec<f64> = spec.prior.weights().to_vec();
    for j in 1..k {
        let plant = spec.plant_stage(j);
        let policy = &policies[j - 1];
        let mut next = vec![KahanSum::new(); n];
        for x in 0..n {
            let mass = marginal[x];
            if mass == 0.0 {
                continue;
            }
            for u in 0..m {
                let w = mass * policy.row(x).get(u);
                if w == 0.0 {
                    continue;
                }
                let row = plant.row(spec.plant_row(x, u));
                for (x_next, acc) in next.iter_mut().enumerate() {
                    acc.add(w * row.get(x_next));
                }
            }
        }
        marginal = next.iter().map(|acc| acc.value()).collect();
    }
    marginal
}

/// Expected total cost over stages k+1..=N as a function of the stage-k
/// successor state, under the plant and the already-updated suffix
/// policies. The costs enter the objective additively, so unlike the suffix
/// divergence this is a plain backward expectation.
pub fn suffix_cost_to_go(
    spec: &ValidatedProblem,
    updated: &[ConditionalPmf],
    k: usize,
) -> Vec<f64> {
    let n = spec.n_states();
    let m = spec.n_actions();
    debug_assert_eq!(updated.len(), spec.horizon - k);
    let mut ctg = vec![0.0; n];
    for j in ((k + 1)..=spec.horizon).rev() {
        let plant = spec.plant_stage(j);
        let policy = &updated[j - k - 1];
        let costs = spec.costs_stage(j);
        let mut next = vec![0.0; n];
        for (x, slot) in next.iter_mut().enumerate() {
            let mut acc = KahanSum::new();
            for u in 0..m {
                let pu = policy.row(x).get(u);
                if pu == 0.0 {
                    continue;
                }
                let row = plant.row(spec.plant_row(x, u));
                for x_next in 0..n {
                    acc.add(pu * row.get(x_next) * (costs[x_next] + ctg[x_next]));
                }
            }
            *slot = acc.value();
        }
        ctg = next;
    }
    ctg
}

fn plant_divergences(spec: &ValidatedProblem, k: usize) -> Result<Vec<Vec<f64>>> {
    let n = spec.n_states();
    let m = spec.n_actions();
    let plant = spec.plant_stage(k);
    let ref_plant = spec.ref_plant_stage(k);
    let mut out = vec![vec![0.0; m]; n];
    for x in 0..n {
        for u in 0..m {
            let row = spec.plant_row(x, u);
            out[x][u] = tsallis_div(plant.row(row), ref_plant.row(row), spec.r)
                .map_err(|e| e.at_row(k, x))?;
        }
    }
    Ok(out)
}

fn cost_expectations(spec: &ValidatedProblem, k: usize) -> Vec<Vec<f64>> {
    let n = spec.n_states();
    let m = spec.n_actions();
    let plant = spec.plant_stage(k);
    let costs = spec.costs_stage(k);
    let mut out = vec![vec![0.0; m]; n];
    for x in 0..n {
        for u in 0..m {
            let row = plant.row(spec.plant_row(x, u));
            let mut acc = KahanSum::new();
            for (x_next, &c) in costs.iter().enumerate() {
                acc.add(row.get(x_next) * c);
            }
            out[x][u] = acc.value();
        }
    }
    out
}

fn policy_divergences(
    spec: &ValidatedProblem,
    policy: &ConditionalPmf,
    k: usize,
) -> Result<Vec<f64>> {
    let reference = spec.ref_policy_stage(k);
    (0..spec.n_states())
        .map(|x| {
            tsallis_div(policy.row(x), reference.row(x), spec.r).map_err(|e| e.at_row(k, x))
        })
        .collect()
}

/// Base-case stage terms at k = N.
///
/// For each `(x_{N-1}, u_N)`, with `Dp` the frozen stage-N policy
/// divergence, `Ds` the plant divergence, and `Dpre` the prefix divergence:
///
/// `J0 = (1-r) Dp Ds + (1-r)^2 Dp Dpre Ds + E[c_N]`,
/// `J1 = Ds`, `rho = 1 + (1-r) Dpre`, and the assembled total is
/// `J = J0 + rho * J1` (the single-row solution applied verbatim to the total cost).
pub fn base_stage_terms(
    spec: &ValidatedProblem,
    policies_l: &PolicySequence,
) -> Result<StageTerms> {
    let n = spec.n_states();
    let m = spec.n_actions();
    let big_n = spec.horizon;
    let one_minus_r = 1.0 - spec.r.r();

    let dpre = prefix_divergence(spec, policies_l, big_n)?;
    let dpol = policy_divergences(spec, policies_l.stage(big_n), big_n)?;
    let ds = plant_divergences(spec, big_n)?;
    let ec = cost_expectations(spec, big_n);

    let rho_scalar = 1.0 + one_minus_r * dpre;
    let mut j = vec![vec![0.0; m]; n];
    for x in 0..n {
        let a = one_minus_r * dpol[x];
        for u in 0..m {
            let j0 = a * ds[x][u] + a * one_minus_r * dpre * ds[x][u] + ec[x][u];
            j[x][u] = j0 + rho_scalar * ds[x][u];
        }
    }
    Ok(StageTerms {
        j,
        rho: vec![rho_scalar; n],
        components: StageTermComponents {
            prefix_divergence: dpre,
            plant_divergence: ds,
            frozen_policy_divergence: dpol,
            suffix_divergence: vec![0.0; n],
            suffix_expectation: vec![vec![0.0; m]; n],
            frozen_suffix_expectation: vec![0.0; n],
            cost_expectation: ec,
            suffix_cost_to_go: vec![0.0; n],
            suffix_cost_expectation: vec![vec![0.0; m]; n],
        },
    })
}

/// General stage terms for 1 <= k <= N.
///
/// Assembled from the non-additivity expansion of the objective pivoted at
/// stage k, with the bilinear/trilinear factors frozen at iterate-l values
/// (the stage-k policy divergence and the suffix expectation), everything
/// conditioned on `x_{k-1}`, and free quantities left as functions of
/// `(x_{k-1}, u_k)`. With `a = (1-r) Dp(x)`, `b = (1-r) Dpre`, and
/// `c = (1-r) Esuf_l(x)`:
///
/// `J(x, u) = [(1+a)(1+b)(1+c)] Ds(x, u) + (1+b) Esuf(x, u) + E[c_k] + Ecost`,
/// `rho(x) = (1+b)(1+c)`,
///
/// where `Ecost(x, u)` is the expected cost over stages k+1..=N given
/// `(x_{k-1}, u_k)`; the cost sum is additive in the objective, so its
/// suffix enters `J` with coefficient one,
///
/// which reduces bit-exactly to the base case when the suffix is empty.
pub fn general_stage_terms(spec: &ValidatedProblem, psets: PSets<'_>) -> Result<StageTerms> {
    let n = spec.n_states();
    let m = spec.n_actions();
    let k = psets.k;
    let one_minus_r = 1.0 - spec.r.r();
    debug_assert_eq!(psets.p1.len(), k);
    debug_assert_eq!(psets.p2.len(), spec.horizon - k);

    let dpre = {
        let (p, q) = enumerate_prefix(spec, &psets.p1[..k - 1], k)?;
        tsallis_div_weights(&p, &q, spec.r)?
    };
    let frozen_policy = psets.frozen_stage_policy();
    let dpol = policy_divergences(spec, frozen_policy, k)?;
    let ds = plant_divergences(spec, k)?;
    let ec = cost_expectations(spec, k);

    let dsuf: Vec<f64> = (0..n)
        .map(|x| suffix_divergence(spec, psets.p2, k, x))
        .collect::<Result<_>>()?;
    let ctg = suffix_cost_to_go(spec, psets.p2, k);
    let plant = spec.plant_stage(k);
    let mut esuf = vec![vec![0.0; m]; n];
    let mut ecost = vec![vec![0.0; m]; n];
    for x in 0..n {
        for u in 0..m {
            let row = plant.row(spec.plant_row(x, u));
            let mut acc = KahanSum::new();
            let mut cacc = KahanSum::new();
            for (x_next, &d) in dsuf.iter().enumerate() {
                acc.add(row.get(x_next) * d);
                cacc.add(row.get(x_next) * ctg[x_next]);
            }
            esuf[x][u] = acc.value();
            ecost[x][u] = cacc.value();
        }
    }
    let mut esuf_frozen = vec![0.0; n];
    for x in 0..n {
        let mut acc = KahanSum::new();
        for u in 0..m {
            acc.add(frozen_policy.row(x).get(u) * esuf[x][u]);
        }
        esuf_frozen[x] = acc.value();
    }

    let rho_base = 1.0 + one_minus_r * dpre;
    let mut j = vec![vec![0.0; m]; n];
    let mut rho = vec![0.0; n];
    for x in 0..n {
        let a = one_minus_r * dpol[x];
        let c = one_minus_r * esuf_frozen[x];
        let extra = c * (1.0 + a) * rho_base;
        rho[x] = rho_base * (1.0 + c);
        for u in 0..m {
            let j0 = a * ds[x][u] + a * one_minus_r * dpre * ds[x][u] + ec[x][u];
            j[x][u] =
                j0 + rho_base * ds[x][u] + extra * ds[x][u] + rho_base * esuf[x][u] + ecost[x][u];
        }
    }
    Ok(StageTerms {
        j,
        rho,
        components: StageTermComponents {
            prefix_divergence: dpre,
            plant_divergence: ds,
            frozen_policy_divergence: dpol,
            suffix_divergence: dsuf,
            suffix_expectation: esuf,
            frozen_suffix_expectation: esuf_frozen,
            cost_expectation: ec,
            suffix_cost_to_go: ctg,
            suffix_cost_expectation: ecost,
        },
    })
}

/// The block solution operator `S`: solves stage k rowwise via the single-stage solver,
/// with unreachable conditioning states (zero marginal mass under the
/// iterate-l behavior) assigned their reference rows.
pub fn apply_s(
    spec: &ValidatedProblem,
    policies_l: &PolicySequence,
    updated: &[ConditionalPmf],
    k: usize,
) -> Result<ConditionalPmf> {
    let psets = PSets::new(policies_l, updated, k);
    let terms = general_stage_terms(spec, psets)?;
    let marginal = state_marginal(spec, psets.p1, k);
    let reference = spec.ref_policy_stage(k);

    let rows: Vec<Result<Pmf>> = (0..spec.n_states())
        .into_par_iter()
        .map(|x| {
            if marginal[x] <= 0.0 {
                return Ok(reference.row(x).clone());
            }
            if terms.rho[x] <= RHO_EPSILON {
                return Err(Error::NonPositiveScale {
                    rho: terms.rho[x],
                    r: spec.r.r(),
                    prefix_divergence: terms.components.prefix_divergence,
                    stage: k,
                    state: x,
                });
            }
            let sp = StageProblem::new(
                terms.j[x].clone(),
                reference.row(x).clone(),
                terms.rho[x],
                spec.r,
            )
            .map_err(|e| e.at_row(k, x))?;
            single_stage_solve(&sp).map_err(|e| e.at_row(k, x))
        })
        .collect();

    let rows: Result<Vec<Pmf>> = rows.into_iter().collect();
    ConditionalPmf::new(rows?)
}

/// One full backward sweep of the solution operator `T`: stages N down to 1,
/// Gauss-Seidel, each stage reading previous-iterate policies below and
/// freshly updated policies above.
pub fn apply_t(spec: &ValidatedProblem, policies_l: &PolicySequence) -> Result<PolicySequence> {
    let big_n = spec.horizon;
    // `updated[j]` will hold stage k+1+j while processing stage k.
    let mut updated: Vec<ConditionalPmf> = Vec::with_capacity(big_n);
    for k in (1..=big_n).rev() {
        let stage = apply_s(spec, policies_l, &updated, k).map_err(|e| e.at_stage(k))?;
        updated.insert(0, stage);
    }
    Ok(PolicySequence::new(updated))
}
