//! Ground-truth evaluators independent of the solver path.
//!
//! Everything in this module is deliberately naive: the joint behavior is
//! materialized by full trajectory enumeration, the brute-force search walks
//! an explicit simplex grid, and the KL solver is written from the classical
//! closed form rather than by driving the deformed machinery at r ~ 1. These
//! are the instruments the solver is checked against, so they trade speed for
//! being easy to audit.

use rayon::prelude::*;

use crate::divergence::{log_r, tsallis_div_weights, KahanSum, Pmf};
use crate::error::{Error, Result};
use crate::model::{PolicySequence, ValidatedProblem};

/// Hard cap on the trajectory table size for full enumeration.
pub const TRAJECTORY_GUARD: u128 = 10_000_000;

/// Hard cap on the number of candidate policy sequences the brute-force
/// search will evaluate.
pub const SEARCH_GUARD: u128 = 100_000_000;

/// The full joint distribution over trajectories (x_0, u_1, x_1, ..., u_N, x_N).
///
/// Index scheme: the trajectory digits are packed most-significant-first as
/// x_0, then (u_k, x_k) for k = 1..N, with radices n, (m, n) repeating.
#[derive(Debug, Clone)]
pub struct JointBehavior {
    probabilities: Vec<f64>,
    n: usize,
    m: usize,
    horizon: usize,
}

impl JointBehavior {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Probability of one explicit trajectory.
    pub fn trajectory(&self, x0: usize, steps: &[(usize, usize)]) -> f64 {
        assert_eq!(steps.len(), self.horizon, "wrong trajectory length");
        let mut idx = x0;
        for &(u, x) in steps {
            idx = (idx * self.m + u) * self.n + x;
        }
        self.probabilities[idx]
    }

    /// Marginal over (x_{k-1}, u_k), k 1-based, as a flat table indexed x*m + u.
    pub fn stage_input_marginal(&self, k: usize) -> Vec<f64> {
        assert!(k >= 1 && k <= self.horizon);
        let mut out = vec![KahanSum::new(); self.n * self.m];
        for (idx, &p) in self.probabilities.iter().enumerate() {
            let (x_prev, u) = self.decode_stage_input(idx, k);
            out[x_prev * self.m + u].add(p);
        }
        out.into_iter().map(|s| s.value()).collect()
    }

    fn decode_stage_input(&self, mut idx: usize, k: usize) -> (usize, usize) {
        // Strip the digits for stages k+1..N, then read x_k... we need
        // (x_{k-1}, u_k): strip stages above k, then x_k, leaving u_k last.
        for _ in k..self.horizon {
            idx /= self.n * self.m;
        }
        idx /= self.n; // drop x_k
        let u = idx % self.m;
        idx /= self.m;
        let x_prev = idx % self.n;
        (x_prev, u)
    }
}

fn enumeration_size(n: usize, m: usize, horizon: usize) -> Result<usize> {
    let mut size: u128 = n as u128;
    for _ in 0..horizon {
        size = size.saturating_mul((m * n) as u128);
        if size > TRAJECTORY_GUARD {
            return Err(Error::SizeGuard {
                what: "trajectory table".into(),
                size,
                limit: TRAJECTORY_GUARD,
            });
        }
    }
    Ok(size as usize)
}

fn behavior_from(
    spec: &ValidatedProblem,
    prior: &Pmf,
    plants: &[crate::divergence::ConditionalPmf],
    policies: &PolicySequence,
) -> Result<JointBehavior> {
    let (n, m, big_n) = (spec.n_states(), spec.n_actions(), spec.horizon);
    let size = enumeration_size(n, m, big_n)?;
    let mut probabilities = vec![0.0; size];
    // Build by extending partial products stage by stage; digit order matches
    // the index scheme, so the write pattern below is just base expansion.
    for (idx, slot) in probabilities.iter_mut().enumerate() {
        let mut digits = Vec::with_capacity(2 * big_n + 1);
        let mut rest = idx;
        for _ in 0..big_n {
            digits.push(rest % n);
            rest /= n;
            digits.push(rest % m);
            rest /= m;
        }
        digits.push(rest % n);
        digits.reverse(); // now x0, u1, x1, ..., uN, xN
        let mut p = prior.get(digits[0]);
        let mut x_prev = digits[0];
        for k in 1..=big_n {
            let u = digits[2 * k - 1];
            let x = digits[2 * k];
            p *= policies.stage(k).row(x_prev).get(u);
            p *= plants[k - 1].row(spec.plant_row(x_prev, u)).get(x);
            x_prev = x;
        }
        *slot = p;
    }
    Ok(JointBehavior {
        probabilities,
        n,
        m,
        horizon: big_n,
    })
}

/// The closed-loop joint behavior p_{0:N} induced by `policies`.
pub fn joint_behavior(spec: &ValidatedProblem, policies: &PolicySequence) -> Result<JointBehavior> {
    spec.check_policy(policies)?;
    behavior_from(spec, &spec.prior, &spec.plant, policies)
}

/// The reference joint behavior q_{0:N} (reference prior, plant, and policies).
pub fn reference_behavior(spec: &ValidatedProblem) -> Result<JointBehavior> {
    let refs = spec.reference_policies();
    behavior_from(spec, &spec.ref_prior, &spec.ref_plant, &refs)
}

/// Total expected cost sum_k E[c_k(X_k)] under the closed-loop behavior,
/// computed by forward marginal propagation (no enumeration).
pub fn expected_cost(spec: &ValidatedProblem, policies: &PolicySequence) -> Result<f64> {
    spec.check_policy(policies)?;
    let (n, m) = (spec.n_states(), spec.n_actions());
    let mut w: Vec<f64> = spec.prior.weights().to_vec();
    let mut total = KahanSum::new();
    for k in 1..=spec.horizon {
        let policy = policies.stage(k);
        let plant = spec.plant_stage(k);
        let costs = spec.costs_stage(k);
        let mut w_next = vec![KahanSum::new(); n];
        for x in 0..n {
            for u in 0..m {
                let mass = w[x] * policy.row(x).get(u);
                if mass == 0.0 {
                    continue;
                }
                let srow = plant.row(spec.plant_row(x, u));
                for x_next in 0..n {
                    w_next[x_next].add(mass * srow.get(x_next));
                }
            }
        }
        w = w_next.into_iter().map(|s| s.value()).collect();
        for x in 0..n {
            total.add(w[x] * costs[x]);
        }
    }
    Ok(total.value())
}

/// The exact objective of the design problem: Tsallis divergence between the
/// closed-loop and reference joint behaviors, plus the expected cost sum.
/// Computed by full trajectory enumeration.
pub fn objective(spec: &ValidatedProblem, policies: &PolicySequence) -> Result<f64> {
    let p = joint_behavior(spec, policies)?;
    let q = reference_behavior(spec)?;
    let div = tsallis_div_weights(p.probabilities(), q.probabilities(), spec.r)?;
    Ok(div + expected_cost(spec, policies)?)
}

/// The joint-behavior divergence computed by a stagewise forward recursion
/// built on the exact non-additivity identity, never materializing the
/// trajectory table.
///
/// Per endpoint state x the recursion tracks the reaching mass w(x) and the
/// partial divergence mass g(x) = sum over trajectories ending at x of
/// p * log_r(p/q); extending by one stage multiplies p and q by step factors
/// with a constant log-ratio per (x, u, x'), so the deformed-log product rule
/// closes the recursion exactly.
pub fn divergence_recursive(spec: &ValidatedProblem, policies: &PolicySequence) -> Result<f64> {
    spec.check_policy(policies)?;
    let (n, m, r) = (spec.n_states(), spec.n_actions(), spec.r);
    let rm1 = r.r() - 1.0;
    let mut w: Vec<f64> = spec.prior.weights().to_vec();
    let mut g: Vec<f64> = Vec::with_capacity(n);
    for x in 0..n {
        let (px, qx) = (spec.prior.get(x), spec.ref_prior.get(x));
        if px == 0.0 {
            g.push(0.0);
        } else if qx == 0.0 {
            return Err(Error::AbsoluteContinuity {
                outcome: x,
                condition: None,
            });
        } else {
            g.push(px * log_r(px / qx, r)?);
        }
    }
    for k in 1..=spec.horizon {
        let policy = policies.stage(k);
        let ref_policy = spec.ref_policy_stage(k);
        let plant = spec.plant_stage(k);
        let ref_plant = spec.ref_plant_stage(k);
        let mut w_next = vec![KahanSum::new(); n];
        let mut g_next = vec![KahanSum::new(); n];
        for x in 0..n {
            if w[x] == 0.0 && g[x] == 0.0 {
                continue;
            }
            for u in 0..m {
                let pu = policy.row(x).get(u);
                if pu == 0.0 {
                    continue;
                }
                let qu = ref_policy.row(x).get(u);
                let srow = plant.row(spec.plant_row(x, u));
                let qrow = ref_plant.row(spec.plant_row(x, u));
                for x_next in 0..n {
                    let ps = pu * srow.get(x_next);
                    if ps == 0.0 {
                        continue;
                    }
                    let qs = qu * qrow.get(x_next);
                    if qs == 0.0 {
                        return Err(Error::AbsoluteContinuity {
                            outcome: x_next,
                            condition: Some(x * m + u),
                        });
                    }
                    let ls = log_r(ps / qs, r)?;
                    w_next[x_next].add(w[x] * ps);
                    g_next[x_next].add(ps * (g[x] * (1.0 + rm1 * ls) + w[x] * ls));
                }
            }
        }
        w = w_next.into_iter().map(|s| s.value()).collect();
        g = g_next.into_iter().map(|s| s.value()).collect();
    }
    let mut total = KahanSum::new();
    for gx in &g {
        total.add(*gx);
    }
    Ok(total.value())
}

/// The exact objective via the recursive divergence plus forward-propagated
/// expected costs. Agrees with [`objective`] to ~1e-12 but needs no
/// trajectory table, so it also serves large-horizon problems.
pub fn objective_recursive(spec: &ValidatedProblem, policies: &PolicySequence) -> Result<f64> {
    Ok(divergence_recursive(spec, policies)? + expected_cost(spec, policies)?)
}

/// All compositions of `denom` into `m` nonnegative parts, scaled to the
/// simplex, in lexicographic order.
fn simplex_grid(m: usize, denom: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut parts = vec![0usize; m];
    fn rec(parts: &mut Vec<usize>, slot: usize, left: usize, denom: usize, out: &mut Vec<Vec<f64>>) {
        if slot + 1 == parts.len() {
            parts[slot] = left;
            out.push(parts.iter().map(|&c| c as f64 / denom as f64).collect());
            return;
        }
        for c in 0..=left {
            parts[slot] = c;
            rec(parts, slot + 1, left - c, denom, out);
        }
    }
    rec(&mut parts, 0, denom, denom, &mut out);
    out
}

/// Exhaustive minimization of the exact objective over simplex-grid policy
/// rows with denominator round(1/grid_step). Rows placing mass outside a
/// reference row's support are pruned up front (they are infeasible).
/// Deterministic: ties break toward the lexicographically first candidate.
pub fn brute_force_minimize(
    spec: &ValidatedProblem,
    grid_step: f64,
) -> Result<(PolicySequence, f64)> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::Domain {
            op: "brute_force_minimize",
            value: grid_step,
        });
    }
    let denom = (1.0 / grid_step).round() as usize;
    let (n, m, big_n) = (spec.n_states(), spec.n_actions(), spec.horizon);
    let grid = simplex_grid(m, denom);

    // Per-slot candidate lists, slots ordered (k, x) row-major, k outermost.
    let mut slot_rows: Vec<Vec<Pmf>> = Vec::with_capacity(big_n * n);
    for k in 1..=big_n {
        for x in 0..n {
            let qrow = spec.ref_policy_stage(k).row(x);
            let rows: Vec<Pmf> = grid
                .iter()
                .filter(|cand| (0..m).all(|u| cand[u] == 0.0 || qrow.get(u) > 0.0))
                .map(|cand| Pmf::new(cand.clone()))
                .collect::<Result<_>>()?;
            if rows.is_empty() {
                return Err(Error::SupportViolation {
                    stage: k,
                    row: x,
                    action: 0,
                    mass: 0.0,
                });
            }
            slot_rows.push(rows);
        }
    }
    let mut combos: u128 = 1;
    for rows in &slot_rows {
        combos = combos.saturating_mul(rows.len() as u128);
        if combos > SEARCH_GUARD {
            return Err(Error::SizeGuard {
                what: "brute-force search space".into(),
                size: combos,
                limit: SEARCH_GUARD,
            });
        }
    }

    let decode = |mut idx: usize| -> PolicySequence {
        // Mixed-radix decode, last slot fastest, so increasing idx walks the
        // candidate space lexicographically by (k, x).
        let mut choices = vec![0usize; slot_rows.len()];
        for slot in (0..slot_rows.len()).rev() {
            let radix = slot_rows[slot].len();
            choices[slot] = idx % radix;
            idx /= radix;
        }
        let mut stages = Vec::with_capacity(big_n);
        for k in 0..big_n {
            let rows: Vec<Pmf> = (0..n)
                .map(|x| slot_rows[k * n + x][choices[k * n + x]].clone())
                .collect();
            stages.push(crate::divergence::ConditionalPmf::new(rows).expect("grid rows validated"));
        }
        PolicySequence::new(stages)
    };

    let total = combos as usize;
    let best = (0..total)
        .into_par_iter()
        .map(|idx| {
            let pols = decode(idx);
            let val = objective_recursive(spec, &pols).unwrap_or(f64::INFINITY);
            (val, idx)
        })
        .reduce(
            || (f64::INFINITY, usize::MAX),
            |a, b| {
                if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );
    if best.1 == usize::MAX {
        return Err(Error::DegenerateKernel);
    }
    Ok((decode(best.1), best.0))
}

/// Classical KL (r = 1) fully probabilistic design, solved by its standard
/// closed-form backward recursion. Written independently of the deformed
/// machinery so it can serve as an oracle for the r -> 1 limit.
pub fn kl_fpd_solve(spec: &ValidatedProblem) -> Result<PolicySequence> {
    let (n, m, big_n) = (spec.n_states(), spec.n_actions(), spec.horizon);
    let mut v_next = vec![0.0; n];
    let mut stages: Vec<crate::divergence::ConditionalPmf> = Vec::with_capacity(big_n);
    for k in (1..=big_n).rev() {
        let plant = spec.plant_stage(k);
        let ref_plant = spec.ref_plant_stage(k);
        let ref_policy = spec.ref_policy_stage(k);
        let costs = spec.costs_stage(k);
        let mut rows = Vec::with_capacity(n);
        let mut v_here = vec![0.0; n];
        for x in 0..n {
            let mut weights = vec![0.0; m];
            // Shift exponents by the max to keep exp() well-scaled.
            let mut exponents = vec![f64::NEG_INFINITY; m];
            for u in 0..m {
                let qu = ref_policy.row(x).get(u);
                if qu == 0.0 {
                    continue;
                }
                let srow = plant.row(spec.plant_row(x, u));
                let qrow = ref_plant.row(spec.plant_row(x, u));
                let mut a = KahanSum::new();
                for x_next in 0..n {
                    let s = srow.get(x_next);
                    if s == 0.0 {
                        continue;
                    }
                    let qs = qrow.get(x_next);
                    if qs == 0.0 {
                        return Err(Error::AbsoluteContinuity {
                            outcome: x_next,
                            condition: Some(x * m + u),
                        });
                    }
                    a.add(s * ((s / qs).ln() + costs[x_next] + v_next[x_next]));
                }
                exponents[u] = qu.ln() - a.value();
            }
            let peak = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !peak.is_finite() {
                return Err(Error::DegenerateKernel);
            }
            let mut z = KahanSum::new();
            for u in 0..m {
                if exponents[u].is_finite() {
                    weights[u] = (exponents[u] - peak).exp();
                    z.add(weights[u]);
                }
            }
            rows.push(Pmf::from_weights_normalized(weights, z.value()));
            // V(x) = -ln Z with the peak shift folded back in.
            v_here[x] = -(z.value().ln() + peak);
        }
        v_next = v_here;
        stages.insert(0, crate::divergence::ConditionalPmf::new(rows)?);
    }
    Ok(PolicySequence::new(stages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::ConditionalPmf;
    use crate::model::validate;
    use crate::stage::{single_stage_solve, StageProblem};
    use crate::testutil;

    fn point_row(m: usize, u: usize) -> Vec<f64> {
        let mut row = vec![0.0; m];
        row[u] = 1.0;
        row
    }

    #[test]
    fn degenerate_product_is_a_single_trajectory() {
        let mut raw = testutil::matched_reference_spec(2, 2, 1, 2.0);
        raw.prior = vec![1.0, 0.0];
        raw.ref_prior = vec![1.0, 0.0];
        // Deterministic plant: every (x, u) row is a point mass on state 1.
        let det_plant = vec![point_row(2, 1); 4];
        raw.plant.insert("1".into(), det_plant.clone());
        raw.ref_plant.insert("1".into(), det_plant);
        let spec = validate(&raw).unwrap();
        let policy = PolicySequence::new(vec![ConditionalPmf::new(vec![
            Pmf::new(point_row(2, 0)).unwrap(),
            Pmf::new(point_row(2, 0)).unwrap(),
        ])
        .unwrap()]);
        // Reference policy may not cover the point mass; use a spec whose
        // reference is uniform (matched_reference_spec uses random rows with
        // a floor, so support is full and the point policy is feasible).
        let b = joint_behavior(&spec, &policy).unwrap();
        assert_eq!(b.trajectory(0, &[(0, 1)]), 1.0);
        let total: f64 = b.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn behavior_sums_to_one() {
        let mut rng = testutil::SplitMix64::new(7);
        for trial in 0..20 {
            let spec = testutil::random_mild_problem(&mut rng, 3, 2, 3, 1.5 + 0.05 * trial as f64);
            let pols = spec.reference_policies();
            let b = joint_behavior(&spec, &pols).unwrap();
            let total: f64 = b.probabilities().iter().sum();
            assert!((total - 1.0).abs() < 1e-10, "sum {total}");
        }
    }

    #[test]
    fn hand_multiplied_two_stage_table() {
        // 2 states, 2 actions, N=2: check a handful of entries against the
        // literal product of factors read straight from the tables.
        let mut rng = testutil::SplitMix64::new(99);
        let spec = testutil::random_mild_problem(&mut rng, 2, 2, 2, 2.0);
        let pols = spec.reference_policies();
        let b = joint_behavior(&spec, &pols).unwrap();
        assert_eq!(b.len(), 2 * 4 * 4);
        for x0 in 0..2 {
            for u1 in 0..2 {
                for x1 in 0..2 {
                    for u2 in 0..2 {
                        for x2 in 0..2 {
                            let expect = spec.prior.get(x0)
                                * pols.stage(1).row(x0).get(u1)
                                * spec.plant_stage(1).row(spec.plant_row(x0, u1)).get(x1)
                                * pols.stage(2).row(x1).get(u2)
                                * spec.plant_stage(2).row(spec.plant_row(x1, u2)).get(x2);
                            let got = b.trajectory(x0, &[(u1, x1), (u2, x2)]);
                            assert!((got - expect).abs() < 1e-15);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn marginals_match_forward_propagation() {
        let mut rng = testutil::SplitMix64::new(13);
        let spec = testutil::random_mild_problem(&mut rng, 2, 2, 3, 0.7);
        let pols = spec.reference_policies();
        let b = joint_behavior(&spec, &pols).unwrap();
        // Forward-propagated (x_{k-1}, u_k) marginal.
        let mut w: Vec<f64> = spec.prior.weights().to_vec();
        for k in 1..=3 {
            let marg = b.stage_input_marginal(k);
            for x in 0..2 {
                for u in 0..2 {
                    let expect = w[x] * pols.stage(k).row(x).get(u);
                    assert!(
                        (marg[x * 2 + u] - expect).abs() < 1e-12,
                        "k={k} x={x} u={u}: {} vs {expect}",
                        marg[x * 2 + u]
                    );
                }
            }
            let mut w_next = vec![0.0; 2];
            for x in 0..2 {
                for u in 0..2 {
                    let mass = w[x] * pols.stage(k).row(x).get(u);
                    for x2 in 0..2 {
                        w_next[x2] += mass * spec.plant_stage(k).row(spec.plant_row(x, u)).get(x2);
                    }
                }
            }
            w = w_next;
        }
    }

    #[test]
    fn matched_reference_zero_cost_objective_is_zero() {
        let raw = testutil::matched_reference_spec(2, 2, 2, 2.0);
        let spec = validate(&raw).unwrap();
        let pols = spec.reference_policies();
        let val = objective(&spec, &pols).unwrap();
        assert!(val.abs() < 1e-12, "objective {val}");
    }

    #[test]
    fn zero_cost_objective_is_nonnegative() {
        let mut rng = testutil::SplitMix64::new(21);
        for trial in 0..20 {
            let mut raw =
                testutil::random_problem_spec(&mut rng, 2, 2, 2, 0.5 + 0.1 * trial as f64);
            for k in 1..=2usize {
                raw.costs.insert(k.to_string(), vec![0.0, 0.0]);
            }
            let spec = validate(&raw).unwrap();
            let pols = spec.reference_policies();
            let val = objective(&spec, &pols).unwrap();
            assert!(val >= -1e-13, "objective {val}");
        }
    }

    #[test]
    fn recursive_divergence_matches_enumeration() {
        let mut rng = testutil::SplitMix64::new(35);
        for r in [0.5, 0.99, 1.5, 2.0, 3.5] {
            for _ in 0..10 {
                let spec = testutil::random_mild_problem(&mut rng, 3, 2, 3, r);
                let pols = spec.reference_policies();
                let full = objective(&spec, &pols).unwrap();
                let rec = objective_recursive(&spec, &pols).unwrap();
                assert!(
                    (full - rec).abs() < 1e-12,
                    "r={r}: enumerated {full} vs recursive {rec}"
                );
            }
        }
    }

    #[test]
    fn recursive_divergence_matches_on_non_reference_policies() {
        let mut rng = testutil::SplitMix64::new(36);
        for _ in 0..10 {
            let spec = testutil::random_mild_problem(&mut rng, 2, 3, 2, 2.5);
            let stages = (0..2)
                .map(|_| {
                    ConditionalPmf::new((0..2).map(|_| rng.random_pmf(3, 0.05)).collect()).unwrap()
                })
                .collect();
            let pols = PolicySequence::new(stages);
            let full = objective(&spec, &pols).unwrap();
            let rec = objective_recursive(&spec, &pols).unwrap();
            assert!((full - rec).abs() < 1e-12, "{full} vs {rec}");
        }
    }

    #[test]
    fn enumeration_guard_trips() {
        let raw = testutil::matched_reference_spec(3, 3, 12, 2.0);
        let spec = validate(&raw).unwrap();
        let pols = spec.reference_policies();
        match joint_behavior(&spec, &pols) {
            Err(Error::SizeGuard { .. }) => {}
            other => panic!("expected size guard, got {other:?}"),
        }
    }

    #[test]
    fn grid_combinatorics() {
        // denominator 2 over 2 actions: (0,1), (0.5,0.5), (1,0).
        let rows = simplex_grid(2, 2);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0], vec![0.0, 1.0]);
        assert_eq!(rows[1], vec![0.5, 0.5]);
        assert_eq!(rows[2], vec![1.0, 0.0]);
    }

    #[test]
    fn brute_force_finds_reference_on_matched_zero_cost() {
        let raw = testutil::matched_reference_spec(2, 2, 1, 2.0);
        let mut raw = raw;
        // Make the reference policy itself a grid point so the optimum is
        // exactly representable.
        raw.ref_policy
            .insert("1".into(), vec![vec![0.5, 0.5], vec![0.25, 0.75]]);
        let spec = validate(&raw).unwrap();
        let (pols, val) = brute_force_minimize(&spec, 0.25).unwrap();
        assert!(val.abs() < 1e-12, "objective {val}");
        for x in 0..2 {
            let got = pols.stage(1).row(x);
            let want = spec.ref_policy_stage(1).row(x);
            assert!(got.l1_distance(want) < 1e-12);
        }
    }

    #[test]
    fn brute_force_nested_grid_refinement() {
        let mut rng = testutil::SplitMix64::new(77);
        let spec = testutil::random_mild_problem(&mut rng, 2, 2, 1, 2.0);
        let (_, coarse) = brute_force_minimize(&spec, 0.25).unwrap();
        let (_, fine) = brute_force_minimize(&spec, 0.125).unwrap();
        assert!(fine <= coarse + 1e-14, "coarse {coarse} fine {fine}");
    }

    #[test]
    fn brute_force_guard_trips() {
        let raw = testutil::matched_reference_spec(3, 3, 4, 2.0);
        let spec = validate(&raw).unwrap();
        match brute_force_minimize(&spec, 0.02) {
            Err(Error::SizeGuard { .. }) => {}
            other => panic!("expected size guard, got {:?}", other.map(|(_, v)| v)),
        }
    }

    #[test]
    fn kl_solver_returns_reference_on_matched_zero_cost() {
        let raw = testutil::matched_reference_spec(3, 2, 3, 1.0);
        let spec = validate(&raw).unwrap();
        let pols = kl_fpd_solve(&spec).unwrap();
        let refs = spec.reference_policies();
        for k in 1..=3 {
            for x in 0..3 {
                assert!(pols.stage(k).row(x).l1_distance(refs.stage(k).row(x)) < 1e-12);
            }
        }
    }

    #[test]
    fn kl_single_stage_matches_deformed_solver_near_one() {
        let mut rng = testutil::SplitMix64::new(55);
        for _ in 0..10 {
            let spec = testutil::random_mild_problem(&mut rng, 2, 3, 1, 1.0);
            let kl = kl_fpd_solve(&spec).unwrap();
            // Cross-check against the deformed stage solver at r within the
            // KL-limit threshold: build the stage problem by hand. With N=1,
            // J(x, u) = D(s||q^s)(x,u)... the deformed base terms at r=1
            // collapse to Ds + E[c]; reproduce that directly.
            for x in 0..2 {
                let mut j = vec![0.0; 3];
                for u in 0..3 {
                    let srow = spec.plant_stage(1).row(spec.plant_row(x, u));
                    let qrow = spec.ref_plant_stage(1).row(spec.plant_row(x, u));
                    let mut a = 0.0;
                    for x2 in 0..2 {
                        let s = srow.get(x2);
                        if s > 0.0 {
                            a += s * ((s / qrow.get(x2)).ln() + spec.costs_stage(1)[x2]);
                        }
                    }
                    j[u] = a;
                }
                let sp = StageProblem::new(
                    j,
                    spec.ref_policy_stage(1).row(x).clone(),
                    1.0,
                    spec.r,
                )
                .unwrap();
                let p = single_stage_solve(&sp).unwrap();
                assert!(
                    p.l1_distance(kl.stage(1).row(x)) < 1e-8,
                    "state {x}: {:?} vs {:?}",
                    p.weights(),
                    kl.stage(1).row(x).weights()
                );
            }
        }
    }

    #[test]
    fn kl_solution_beats_grid_at_near_kl_r() {
        let mut rng = testutil::SplitMix64::new(61);
        let mut spec = testutil::random_mild_problem(&mut rng, 2, 2, 2, 1.0 + 1e-6);
        // `random_mild_problem` validated at the given r already; keep it.
        spec.solver.tol = 1e-10;
        let kl = kl_fpd_solve(&spec).unwrap();
        let kl_val = objective_recursive(&spec, &kl).unwrap();
        let (_, grid_val) = brute_force_minimize(&spec, 0.02).unwrap();
        assert!(
            kl_val <= grid_val + 1e-4,
            "closed form {kl_val} vs grid {grid_val}"
        );
    }
}
