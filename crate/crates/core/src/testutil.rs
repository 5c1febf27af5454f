//! Deterministic instance generators shared by the unit, integration, and
//! acceptance suites. Not part of the supported API surface.
#![doc(hidden)]

use std::collections::BTreeMap;

use crate::model::{ProblemSpec, SolverOptions, ValidatedProblem};
use crate::divergence::Pmf;

/// SplitMix64: tiny, seedable, and stable across platforms, which keeps the
/// frozen expected values in the test suites reproducible.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// A strictly positive pmf: every weight at least `floor` after
    /// normalization is approximated by mixing with the uniform pmf.
    pub fn random_pmf(&mut self, n: usize, floor: f64) -> Pmf {
        let raw: Vec<f64> = (0..n).map(|_| self.next_f64() + 1e-12).collect();
        let sum: f64 = raw.iter().sum();
        let mix = floor * n as f64;
        let weights: Vec<f64> = raw
            .iter()
            .map(|w| (1.0 - mix) * w / sum + floor)
            .collect();
        Pmf::new(weights).expect("generated weights are stochastic")
    }

    pub fn random_rows(&mut self, rows: usize, cols: usize, floor: f64) -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| self.random_pmf(cols, floor).weights().to_vec())
            .collect()
    }
}

fn labels(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|i| format!("{prefix}{i}")).collect()
}

/// A matched-reference, zero-cost instance: plant = ref_plant, prior =
/// ref_prior, and every divergence at the reference policy is zero, so the
/// reference is a fixed point of the sweep operator.
pub fn matched_reference_spec(n: usize, m: usize, horizon: usize, r: f64) -> ProblemSpec {
    let mut rng = SplitMix64::new(0x51a7ed);
    let mut plant = BTreeMap::new();
    let mut ref_policy = BTreeMap::new();
    let mut costs = BTreeMap::new();
    for k in 1..=horizon {
        let rows = rng.random_rows(n * m, n, 0.05);
        plant.insert(k.to_string(), rows);
        ref_policy.insert(k.to_string(), rng.random_rows(n, m, 0.05));
        costs.insert(k.to_string(), vec![0.0; n]);
    }
    let prior = rng.random_pmf(n, 0.05).weights().to_vec();
    ProblemSpec {
        r,
        horizon,
        states: labels("s", n),
        actions: labels("a", m),
        prior: prior.clone(),
        ref_prior: prior,
        ref_plant: plant.clone(),
        plant,
        ref_policy,
        costs,
        solver: None,
    }
}

/// A fully random instance with strictly positive tables (so absolute
/// continuity holds everywhere) and bounded costs.
pub fn random_problem_spec(
    rng: &mut SplitMix64,
    n: usize,
    m: usize,
    horizon: usize,
    r: f64,
) -> ProblemSpec {
    let mut plant = BTreeMap::new();
    let mut ref_plant = BTreeMap::new();
    let mut ref_policy = BTreeMap::new();
    let mut costs = BTreeMap::new();
    for k in 1..=horizon {
        plant.insert(k.to_string(), rng.random_rows(n * m, n, 0.08));
        ref_plant.insert(k.to_string(), rng.random_rows(n * m, n, 0.08));
        ref_policy.insert(k.to_string(), rng.random_rows(n, m, 0.08));
        costs.insert(
            k.to_string(),
            (0..n).map(|_| rng.uniform(0.0, 1.0)).collect(),
        );
    }
    ProblemSpec {
        r,
        horizon,
        states: labels("s", n),
        actions: labels("a", m),
        prior: rng.random_pmf(n, 0.08).weights().to_vec(),
        ref_prior: rng.random_pmf(n, 0.08).weights().to_vec(),
        plant,
        ref_plant,
        ref_policy,
        costs,
        solver: Some(SolverOptions {
            omega: Some(0.4),
            tol: Some(1e-10),
            max_outer: Some(10_000),
            init_mode: Some("reference".into()),
            seed: Some(0),
        }),
    }
}

/// Random instances kept mild: references close to the plant/policies so the
/// stage scale stays positive at moderate r > 1.
pub fn random_mild_problem(
    rng: &mut SplitMix64,
    n: usize,
    m: usize,
    horizon: usize,
    r: f64,
) -> ValidatedProblem {
    let mut spec = random_problem_spec(rng, n, m, horizon, r);
    // Pull references toward the plant so prefix/suffix divergences stay small.
    for k in 1..=horizon {
        let p = spec.plant.get(&k.to_string()).unwrap().clone();
        let q = spec.ref_plant.get_mut(&k.to_string()).unwrap();
        for (qrow, prow) in q.iter_mut().zip(&p) {
            for (qe, pe) in qrow.iter_mut().zip(prow) {
                *qe = 0.8 * pe + 0.2 * *qe;
            }
        }
        for c in spec.costs.get_mut(&k.to_string()).unwrap() {
            *c *= 0.5;
        }
    }
    let p0 = spec.prior.clone();
    for (qe, pe) in spec.ref_prior.iter_mut().zip(&p0) {
        *qe = 0.8 * pe + 0.2 * *qe;
    }
    crate::model::validate(&spec).expect("generated problem is valid")
}
