//! Deformed logarithm/exponential and Tsallis divergence over finite pmfs.
//!
//! The deformed pair is `log_r(v) = (v^(r-1) - 1)/(r - 1)` and
//! `exp_r(v) = [1 + (r-1) v]_+^(1/(r-1))`, mutually inverse wherever the
//! clamp `[.]_+` is inactive. As `r -> 1` both collapse to the natural
//! log/exp and the Tsallis divergence collapses to Kullback-Leibler.
//! Near `r = 1` the closed forms suffer catastrophic cancellation, so a
//! dedicated KL-limit flag dispatches to the natural-log forms outright.

use crate::error::{Error, Result};

/// Threshold on |r - 1| below which all deformed operations dispatch to
/// their natural-log limits.
pub const KL_LIMIT_THRESHOLD: f64 = 1e-9;

/// Tolerance accepted when normalizing externally supplied probability rows.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// The deformation parameter `r > 0` of the Tsallis divergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformParam {
    r: f64,
    kl_limit: bool,
}

impl DeformParam {
    pub fn new(r: f64) -> Result<Self> {
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::InvalidDeformation { r });
        }
        Ok(DeformParam {
            r,
            kl_limit: (r - 1.0).abs() < KL_LIMIT_THRESHOLD,
        })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// True when this parameter dispatches to the natural-log (KL) forms.
    pub fn is_kl_limit(&self) -> bool {
        self.kl_limit
    }
}

/// Deformed logarithm `log_r(v)`.
pub fn log_r(v: f64, r: DeformParam) -> Result<f64> {
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::Domain { op: "log_r", value: v });
    }
    if r.kl_limit {
        Ok(v.ln())
    } else {
        Ok((v.powf(r.r - 1.0) - 1.0) / (r.r - 1.0))
    }
}

/// Deformed exponential `exp_r(v)`; returns exactly 0 when the clamp activates.
pub fn exp_r(v: f64, r: DeformParam) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::Domain { op: "exp_r", value: v });
    }
    if r.kl_limit {
        Ok(v.exp())
    } else {
        let base = 1.0 + (r.r - 1.0) * v;
        if base <= 0.0 {
            Ok(0.0)
        } else {
            Ok(base.powf(1.0 / (r.r - 1.0)))
        }
    }
}

/// Compensated (Kahan) accumulator. All divergence sums run through this in
/// a summation order fixed by outcome index, so diagnostics are
/// bit-reproducible across runs and thread schedules.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// A pmf over an indexed finite outcome set.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Pmf {
    weights: Vec<f64>,
}

impl Pmf {
    /// Builds a pmf from weights, requiring nonnegative entries summing to 1
    /// within [`ROW_SUM_TOLERANCE`]; the row is renormalized so downstream
    /// arithmetic does not accumulate the input noise. Rows already summing
    /// to 1 at ulp level are kept bit-for-bit (renormalization is not
    /// idempotent, and save/load cycles must be exact).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let mut sum = KahanSum::new();
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Parse {
                    context: None,
                    message: format!("pmf weight {i} is {w}, expected a finite nonnegative real"),
                });
            }
            sum.add(w);
        }
        let s = sum.value();
        if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::Parse {
                context: None,
                message: format!("pmf weights sum to {s:.17e}, expected 1 within {ROW_SUM_TOLERANCE:e}"),
            });
        }
        if (s - 1.0).abs() <= 1e-14 {
            return Ok(Pmf { weights });
        }
        Ok(Self::from_weights_normalized(weights, s))
    }

    /// Normalizes arbitrary nonnegative weights with the given positive sum.
    pub(crate) fn from_weights_normalized(mut weights: Vec<f64>, sum: f64) -> Self {
        if sum != 1.0 {
            for w in &mut weights {
                *w /= sum;
            }
        }
        Pmf { weights }
    }

    pub fn uniform(n: usize) -> Self {
        Pmf {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, outcome: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[outcome] = 1.0;
        Pmf { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn l1_distance(&self, other: &Pmf) -> f64 {
        let mut acc = KahanSum::new();
        for (a, b) in self.weights.iter().zip(&other.weights) {
            acc.add((a - b).abs());
        }
        acc.value()
    }

    /// Rowwise convex combination `t * self + (1 - t) * other`.
    pub fn lerp(&self, other: &Pmf, t: f64) -> Pmf {
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| t * a + (1.0 - t) * b)
            .collect();
        Pmf { weights }
    }
}

/// A row-stochastic table: one pmf per conditioning outcome.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct ConditionalPmf {
    rows: Vec<Pmf>,
}

impl ConditionalPmf {
    pub fn new(rows: Vec<Pmf>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::ShapeMismatch("conditional pmf has no rows".into()));
        }
        let width = rows[0].len();
        if rows.iter().any(|row| row.len() != width) {
            return Err(Error::ShapeMismatch(
                "conditional pmf rows have differing outcome counts".into(),
            ));
        }
        Ok(ConditionalPmf { rows })
    }

    pub fn n_conditions(&self) -> usize {
        self.rows.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, condition: usize) -> &Pmf {
        &self.rows[condition]
    }

    pub fn rows(&self) -> &[Pmf] {
        &self.rows
    }
}

/// Tsallis divergence over raw weight slices, summed in index order.
///
/// Terms with `p[i] = 0` contribute 0 by continuity (this also covers the
/// 0/0 case inside a zero-probability outcome). Mass of `p` on an outcome
/// where `q` vanishes makes the divergence infinite and is reported as an
/// error carrying the offending index. Tiny negative totals from roundoff
/// are clamped to 0.
pub(crate) fn tsallis_div_weights(p: &[f64], q: &[f64], r: DeformParam) -> Result<f64> {
    debug_assert_eq!(p.len(), q.len());
    let mut acc = KahanSum::new();
    for i in 0..p.len() {
        let pi = p[i];
        if pi == 0.0 {
            continue;
        }
        if q[i] <= 0.0 {
            return Err(Error::AbsoluteContinuity {
                outcome: i,
                condition: None,
            });
        }
        acc.add(pi * log_r(pi / q[i], r)?);
    }
    Ok(acc.value().max(0.0))
}

/// Tsallis divergence `D_r(p || q) = E_p[log_r(p/q)]`.
pub fn tsallis_div(p: &Pmf, q: &Pmf, r: DeformParam) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!(
            "tsallis_div: p has {} outcomes, q has {}",
            p.len(),
            q.len()
        )));
    }
    tsallis_div_weights(p.weights(), q.weights(), r)
}

/// Total conditional Tsallis divergence
/// `E_weight[D_r(p_cond(.|z) || q)]`.
pub fn total_conditional_tsallis_div(
    p_cond: &ConditionalPmf,
    weight: &Pmf,
    q: &Pmf,
    r: DeformParam,
) -> Result<f64> {
    if weight.len() != p_cond.n_conditions() {
        return Err(Error::ShapeMismatch(format!(
            "total conditional divergence: weight has {} outcomes, table has {} conditions",
            weight.len(),
            p_cond.n_conditions()
        )));
    }
    let mut acc = KahanSum::new();
    for z in 0..weight.len() {
        let w = weight.get(z);
        if w == 0.0 {
            continue;
        }
        let d =
            tsallis_div(p_cond.row(z), q, r).map_err(|e| annotate_condition(e, z))?;
        acc.add(w * d);
    }
    Ok(acc.value().max(0.0))
}

fn annotate_condition(e: Error, z: usize) -> Error {
    match e {
        Error::AbsoluteContinuity { outcome, .. } => Error::AbsoluteContinuity {
            outcome,
            condition: Some(z),
        },
        other => other,
    }
}

/// Non-additivity decomposition of a chained joint against a factored
/// reference: returns the divergence of the assembled joints (LHS) minus the
/// three-term expansion (RHS). The expansion is
///
/// `E_{p_z}[D_r(p(.|z) || q_v)] + D_r(p_z || q_z)
///    + (r - 1) * E_{p_z}[log_r(p_z/q_z) * D_r(p(.|z) || q_v)]`
///
/// which is an exact arithmetic identity, so the residual is 0 up to
/// roundoff; the cross term vanishes in the KL limit, recovering the chain
/// rule. (The product-form cross term `(1-r) E[D] * D` seen in derivations
/// is the decoupled special case where the conditional divergence does not
/// depend on `z`.)
pub fn non_additivity_residual(
    p_cond: &ConditionalPmf,
    p_z: &Pmf,
    q_v: &Pmf,
    q_z: &Pmf,
    r: DeformParam,
) -> Result<f64> {
    let nz = p_z.len();
    let nv = q_v.len();
    if p_cond.n_conditions() != nz || p_cond.n_outcomes() != nv || q_z.len() != nz {
        return Err(Error::ShapeMismatch(
            "non_additivity_residual: inconsistent outcome/condition counts".into(),
        ));
    }

    // LHS: divergence of the assembled joints, flattened z-major.
    let mut pj = Vec::with_capacity(nz * nv);
    let mut qj = Vec::with_capacity(nz * nv);
    for z in 0..nz {
        for v in 0..nv {
            pj.push(p_cond.row(z).get(v) * p_z.get(z));
            qj.push(q_v.get(v) * q_z.get(z));
        }
    }
    let lhs = tsallis_div_weights(&pj, &qj, r)?;

    // RHS: three-term expansion.
    let mut cond_term = KahanSum::new();
    let mut cross_term = KahanSum::new();
    for z in 0..nz {
        let wz = p_z.get(z);
        if wz == 0.0 {
            continue;
        }
        if q_z.get(z) <= 0.0 {
            return Err(Error::AbsoluteContinuity {
                outcome: z,
                condition: None,
            });
        }
        let d_cond =
            tsallis_div(p_cond.row(z), q_v, r).map_err(|e| annotate_condition(e, z))?;
        cond_term.add(wz * d_cond);
        cross_term.add(wz * log_r(wz / q_z.get(z), r)? * d_cond);
    }
    let d_z = tsallis_div(p_z, q_z, r)?;
    let rhs = cond_term.value() + d_z + (r.r() - 1.0) * cross_term.value();
    Ok(lhs - rhs)
}
