//! Single-stage Tsallis-regularized minimizer.
//!
//! The stage problem is `min_p (1/rho) E_p[J] + D_r(p || q)` over pmfs `p`
//! on the action set. Its unique optimum lies in the deformed-Gibbs family
//! `p ∝ exp_r(-J/rho_bar) q`, indexed by the resolved scale `rho_bar`
//! (which absorbs the Lagrange multiplier of the normalization constraint).
//!
//! No closed form for the multiplier is available, but stationarity pins the
//! scale down exactly: with costs shifted so the support minimum is zero and
//! `Z(rho_bar) = sum_u q(u) exp_r(-J(u)/rho_bar)`, the optimal scale is the
//! unique root of
//!
//! `h(rho_bar) = rho_bar - r * rho * Z(rho_bar)^(1-r)`.
//!
//! `Z` is monotone increasing in `rho_bar` and bounded by 1, so `h` is
//! strictly increasing and bisection resolves the root to machine precision
//! (a comparison-based search over the family cannot do better than the
//! square root of machine epsilon near the flat minimum, which is far too
//! coarse for the outer fixed-point loop's tolerance).

use crate::divergence::{exp_r, tsallis_div, DeformParam, KahanSum, Pmf};
use crate::error::{Error, Result};

/// Bracket searched for the resolved scale.
pub const SCALE_BRACKET: (f64, f64) = (1e-6, 1e6);
/// Log-space bracket width at which the bisection stops.
pub const SCALE_REFINE_REL_WIDTH: f64 = 1e-15;

/// One single-stage subproblem: effective action costs `J`, a reference row,
/// and the stage scaling parameter.
#[derive(Debug, Clone)]
pub struct StageProblem {
    pub j: Vec<f64>,
    pub q_row: Pmf,
    pub rho: f64,
    pub r: DeformParam,
}

impl StageProblem {
    pub fn new(j: Vec<f64>, q_row: Pmf, rho: f64, r: DeformParam) -> Result<Self> {
        if j.len() != q_row.len() {
            return Err(Error::ShapeMismatch(format!(
                "stage problem has {} costs but {} reference weights",
                j.len(),
                q_row.len()
            )));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::NonPositiveScale {
                rho,
                r: r.r(),
                prefix_divergence: f64::NAN,
                stage: 0,
                state: 0,
            });
        }
        for (u, &cost) in j.iter().enumerate() {
            if q_row.get(u) > 0.0 && !cost.is_finite() {
                return Err(Error::Domain { op: "stage cost", value: cost });
            }
        }
        Ok(StageProblem { j, q_row, rho, r })
    }

    /// The stage objective `(1/rho) E_p[J] + D_r(p || q_row)` at a candidate.
    pub fn objective(&self, p: &Pmf) -> Result<f64> {
        let mut expect = KahanSum::new();
        for u in 0..p.len() {
            let w = p.get(u);
            if w > 0.0 {
                expect.add(w * self.j[u]);
            }
        }
        Ok(expect.value() / self.rho + tsallis_div(p, &self.q_row, self.r)?)
    }
}

/// Outcome of the one-dimensional scale search.
#[derive(Debug, Clone)]
pub struct ScaleResolution {
    /// Resolved scale `rho_bar`.
    pub rho_bar: f64,
    /// Search interval that was scanned.
    pub bracket: (f64, f64),
    /// Stage objective attained by the resolved family member.
    pub surrogate_value: f64,
    /// Constant subtracted from the costs before exponentiation (the row
    /// minimum over the reference support); widens the clamp-free region.
    pub cost_shift: f64,
}

/// The deformed-Gibbs family member
/// `p(u) = exp_r(-J(u)/rho_bar) q(u) / normalizer`.
///
/// The clamp inside `exp_r` may zero out high-cost actions; an all-zero
/// normalizer is a `DegenerateKernel` error.
pub fn deformed_gibbs(j: &[f64], q_row: &Pmf, rho_bar: f64, r: DeformParam) -> Result<Pmf> {
    debug_assert_eq!(j.len(), q_row.len());
    let mut weights = vec![0.0; j.len()];
    let mut norm = KahanSum::new();
    for u in 0..j.len() {
        let q = q_row.get(u);
        if q == 0.0 {
            continue;
        }
        let w = exp_r(-j[u] / rho_bar, r)? * q;
        weights[u] = w;
        norm.add(w);
    }
    let total = norm.value();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateKernel);
    }
    Ok(Pmf::from_weights_normalized(weights, total))
}

fn shifted_costs(sp: &StageProblem) -> (Vec<f64>, f64) {
    let shift = sp
        .j
        .iter()
        .zip(sp.q_row.weights())
        .filter(|(_, &q)| q > 0.0)
        .map(|(&c, _)| c)
        .fold(f64::INFINITY, f64::min);
    let shifted = sp.j.iter().map(|c| c - shift).collect();
    (shifted, shift)
}

/// The deformed-Gibbs normalizer `Z(rho_bar)` over the reference support.
fn kernel_normalizer(js: &[f64], q_row: &Pmf, rho_bar: f64, r: DeformParam) -> Result<f64> {
    let mut z = KahanSum::new();
    for u in 0..js.len() {
        let q = q_row.get(u);
        if q > 0.0 {
            z.add(q * exp_r(-js[u] / rho_bar, r)?);
        }
    }
    Ok(z.value())
}

/// Resolves `rho_bar` as the unique root of the stationarity equation
/// `rho_bar = r * rho * Z(rho_bar)^(1-r)` (see the module docs), by
/// bisection on log `rho_bar` over [`SCALE_BRACKET`].
pub fn resolve_scale(sp: &StageProblem) -> Result<ScaleResolution> {
    let (js, cost_shift) = shifted_costs(sp);
    let r = sp.r;

    if r.is_kl_limit() {
        // At r = 1 the equation degenerates to rho_bar = rho, the classical
        // exponential-kernel scale.
        let rho_bar = sp.rho;
        let p = deformed_gibbs(&js, &sp.q_row, rho_bar, r)?;
        return Ok(ScaleResolution {
            rho_bar,
            bracket: SCALE_BRACKET,
            surrogate_value: sp.objective(&p)?,
            cost_shift,
        });
    }

    let h = |rho_bar: f64| -> Result<f64> {
        let z = kernel_normalizer(&js, &sp.q_row, rho_bar, r)?;
        if !(z > 0.0) {
            // Unreachable with shifted costs (the support minimum
            // contributes exp_r(0) = 1), kept as a hard stop.
            return Err(Error::DegenerateKernel);
        }
        Ok(rho_bar - r.r() * sp.rho * z.powf(1.0 - r.r()))
    };

    let (lo, hi) = SCALE_BRACKET;
    let (h_lo, h_hi) = (h(lo)?, h(hi)?);
    if !(h_lo < 0.0 && h_hi >= 0.0) {
        return Err(Error::ScaleBracket {
            profile: vec![(lo, h_lo), (hi, h_hi)],
        });
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    while (b - a) > SCALE_REFINE_REL_WIDTH {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break; // bracket is down to adjacent floats
        }
        if h(mid.exp())? < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let rho_bar = (0.5 * (a + b)).exp();
    let p = deformed_gibbs(&js, &sp.q_row, rho_bar, r)?;
    Ok(ScaleResolution {
        rho_bar,
        bracket: SCALE_BRACKET,
        surrogate_value: sp.objective(&p)?,
        cost_shift,
    })
}

/// Full single-stage solve: resolve the scale, then return the deformed-Gibbs
/// member at the resolved scale (re-derived from the same shifted costs the
/// search used).
pub fn single_stage_solve(sp: &StageProblem) -> Result<Pmf> {
    let (js, _) = shifted_costs(sp);
    let resolution = resolve_scale(sp)?;
    deformed_gibbs(&js, &sp.q_row, resolution.rho_bar, sp.r)
}
