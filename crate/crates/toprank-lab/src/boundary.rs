//! Confidence-radius rules for the pairwise click statistics.
//!
//! Four boundaries are supported:
//!
//! * `Baseline` — the original TopRank radius `sqrt(2N log(c sqrt(N)/delta))`
//!   with `c = 4 sqrt(2/pi) / erf(sqrt(2))`.
//! * `MixtureExact` — the exact mixture boundary `beta_F(N, 1/(2 delta))`,
//!   where `Psi(u, v) = integral exp(lambda u - lambda^2 v / 2) dF(lambda)`
//!   is mixed against the Robbins–Siegmund measure
//!   `dF = d lambda / (lambda log(1/lambda) (log log(1/lambda))^2)` on
//!   `(0, e^{-e})` and `beta_F` is the unique root in `u` of `Psi(u, v) = c`.
//! * `AsymptoticC1` — the closed-form expansion
//!   `sqrt(2N [log log N + 5/2 log log log N + C1(delta)])`.
//! * `SimpleLIL` — the iterated-logarithm envelope
//!   `sqrt((2 + C2(delta)) N log log N)`.
//!
//! `C1(delta)` and `C2(delta)` have no known closed form; [`estimate_c0`]
//! and [`estimate_c2`] compute grid-sup envelopes over a caller-supplied
//! `v` grid. Values are only valid on the grid range they were estimated on.
//!
//! Numerically, all mixture integrals use the substitution
//! `s = log log(1/lambda)`, which maps the singular density to the smooth
//! weight `1/s^2` on `[1, inf)`; a second substitution `r = 1/s` maps that
//! to the unit interval with no truncation error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper end of the mixing measure's support, `e^{-e} ~ 0.06599`.
pub fn lambda_max() -> f64 {
    (-std::f64::consts::E).exp()
}

/// `e^e ~ 15.154`, the floor below which `log log` is not positive.
pub fn e_to_e() -> f64 {
    std::f64::consts::E.exp()
}

#[derive(Debug, Error)]
pub enum BoundaryError {
    #[error("quadrature failed to converge: {0}")]
    QuadratureFailure(String),
    #[error("integrand overflow: {0}")]
    Overflow(String),
    #[error("bracket search failed: {0}")]
    BracketFailure(String),
    #[error("domain error: {0}")]
    DomainError(String),
}

/// Numerical controls for the mixture integral.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureParams {
    /// Truncation point in `s`-space for the density-mass integral.
    pub s_max: f64,
    /// Target relative error.
    pub rel_tol: f64,
    /// Cap on adaptive panel splits.
    pub max_subdivisions: usize,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        QuadratureParams {
            s_max: 1e10,
            rel_tol: 1e-10,
            max_subdivisions: 1 << 20,
        }
    }
}

impl QuadratureParams {
    pub fn validate(&self) -> Result<(), BoundaryError> {
        if !(self.s_max > 1.0) {
            return Err(BoundaryError::DomainError("s_max must exceed 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-6) {
            return Err(BoundaryError::DomainError(
                "rel_tol must lie in (0, 1e-6]".into(),
            ));
        }
        Ok(())
    }
}

/// Maclaurin series for erf; converges to machine precision for |x| <= 3.
pub fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    for n in 1..200 {
        let n = n as f64;
        term *= -x2 / n;
        let contrib = term / (2.0 * n + 1.0);
        sum += contrib;
        if contrib.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

/// The constant `c = 4 sqrt(2/pi) / erf(sqrt(2)) ~ 3.34368` of the
/// baseline boundary, computed rather than hard-coded.
pub fn mixture_constant() -> f64 {
    4.0 * (2.0 / std::f64::consts::PI).sqrt() / erf_series(std::f64::consts::SQRT_2)
}

// ---------------------------------------------------------------------------
// Adaptive quadrature
// ---------------------------------------------------------------------------

/// Adaptive Simpson over `[a, b]`, absolute tolerance `tol`.
/// `budget` counts panel splits across an entire composite integral.
fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    budget: &mut usize,
) -> Result<f64, BoundaryError> {
    struct Panel {
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
    }
    let simpson = |a: f64, fa: f64, fm: f64, fb: f64, b: f64| (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let mut stack = vec![Panel {
        a,
        b,
        fa,
        fm,
        fb,
        whole: simpson(a, fa, fm, fb, b),
        tol,
    }];
    let mut total = 0.0;
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(p.a, p.fa, flm, p.fm, m);
        let right = simpson(m, p.fm, frm, p.fb, p.b);
        let err = left + right - p.whole;
        if err.abs() <= 15.0 * p.tol || (p.b - p.a) < 1e-14 * (b - a).abs().max(1.0) {
            total += left + right + err / 15.0;
        } else {
            if *budget == 0 {
                return Err(BoundaryError::QuadratureFailure(format!(
                    "subdivision budget exhausted on [{}, {}]",
                    p.a, p.b
                )));
            }
            *budget -= 1;
            stack.push(Panel {
                a: p.a,
                b: m,
                fa: p.fa,
                fm: flm,
                fb: p.fm,
                whole: left,
                tol: 0.5 * p.tol,
            });
            stack.push(Panel {
                a: m,
                b: p.b,
                fa: p.fm,
                fm: frm,
                fb: p.fb,
                whole: right,
                tol: 0.5 * p.tol,
            });
        }
    }
    Ok(total)
}

/// Composite adaptive integral over consecutive breakpoints.
fn integrate_panels<F: Fn(f64) -> f64>(
    f: &F,
    breaks: &[f64],
    rel_tol: f64,
    max_subdivisions: usize,
) -> Result<f64, BoundaryError> {
    // Coarse pass to scale the absolute tolerance.
    let mut coarse = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = 0.5 * (a + b);
        coarse += (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
    }
    let scale = coarse.abs().max(f64::MIN_POSITIVE);
    let span: f64 = breaks.last().unwrap() - breaks.first().unwrap();
    let mut budget = max_subdivisions;
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let tol = rel_tol * scale * ((b - a) / span).max(1e-6);
        total += adaptive_simpson(f, a, b, tol, &mut budget)?;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Mixture integrals
// ---------------------------------------------------------------------------

/// `lambda(r) = exp(-exp(1/r))` for `r in (0, 1]`; the `r = 1/s` image of
/// the mixing variable. Underflows to exactly 0 for small `r`, which is the
/// correct limit of the integrand weight.
#[inline]
fn lambda_of_r(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    (-(1.0 / r).exp()).exp()
}

/// Total mass of the Robbins–Siegmund density on `(0, e^{-e})`, integrated
/// in `s`-space as `integral_1^{s_max} ds / s^2`. The untruncated mass is 1;
/// truncation at `s_max` loses exactly `1/s_max`.
pub fn mixture_density_mass(q: &QuadratureParams) -> Result<f64, BoundaryError> {
    q.validate()?;
    // Geometric breakpoints track the 1/s^2 decay.
    let mut breaks = vec![1.0];
    let mut s = 2.0;
    while s < q.s_max {
        breaks.push(s);
        s *= 4.0;
    }
    breaks.push(q.s_max);
    integrate_panels(&|s: f64| 1.0 / (s * s), &breaks, q.rel_tol, q.max_subdivisions)
}

/// `Psi(u, v) = integral exp(lambda u - lambda^2 v / 2) dF(lambda)` over the
/// Robbins–Siegmund measure, computed on the unit interval via `r = 1/s`.
/// The map absorbs the entire tail, so no truncation error is incurred.
pub fn psi(u: f64, v: f64, q: &QuadratureParams) -> Result<f64, BoundaryError> {
    q.validate()?;
    if v < 0.0 {
        return Err(BoundaryError::DomainError(format!("v = {v} < 0")));
    }
    let lam_max = lambda_max();
    // Largest exponent over lambda in (0, lam_max]: at the saddle u/v when
    // it lies inside the support, else at lam_max.
    let max_exp = if u > 0.0 && v > 0.0 && u / v <= lam_max {
        0.5 * u * u / v
    } else {
        lam_max * u - 0.5 * lam_max * lam_max * v
    };
    if max_exp > 690.0 {
        return Err(BoundaryError::Overflow(format!(
            "psi({u}, {v}) exceeds the floating-point range"
        )));
    }
    let g = move |r: f64| {
        let lam = lambda_of_r(r);
        (lam * u - 0.5 * lam * lam * v).exp()
    };
    // Seed the panel list with the saddle of the exponent when it exists:
    // the integrand peaks at lambda* = u/v, a possibly very narrow feature.
    let mut breaks: Vec<f64> = (0..=16).map(|i| i as f64 / 16.0).collect();
    if u > 0.0 && v > 0.0 {
        let lam_star = (u / v).min(lam_max * 0.999_999);
        let s_star = (1.0 / lam_star).ln().ln();
        if s_star >= 1.0 {
            let r_star = 1.0 / s_star;
            // d lambda / d r at the peak; sigma_lambda = 1/sqrt(v).
            let dlam_dr = lam_star * (1.0 / lam_star).ln() * s_star * s_star;
            let sigma_r = (1.0 / v.sqrt()) / dlam_dr.max(f64::MIN_POSITIVE);
            for k in [-16.0, -8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0, 16.0] {
                let p = r_star + k * sigma_r;
                if p > 0.0 && p < 1.0 {
                    breaks.push(p);
                }
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    integrate_panels(&g, &breaks, q.rel_tol, q.max_subdivisions)
}

/// Solves `Psi(u, v) = c` for `u` by bracket doubling and bisection.
/// `Psi` is strictly increasing in `u`, so the root is unique.
pub fn beta_f(v: f64, c: f64, q: &QuadratureParams, tol: f64) -> Result<f64, BoundaryError> {
    beta_f_from(v, c, q, tol, 1.0)
}

/// As [`beta_f`] but with a caller-supplied initial upper guess, used to
/// march along increasing `v` without re-expanding the bracket from scratch.
pub fn beta_f_from(
    v: f64,
    c: f64,
    q: &QuadratureParams,
    tol: f64,
    hint: f64,
) -> Result<f64, BoundaryError> {
    if !(v > 0.0) {
        return Err(BoundaryError::DomainError(format!("v = {v} must be > 0")));
    }
    if !(c > 0.0) {
        return Err(BoundaryError::DomainError(format!("c = {c} must be > 0")));
    }
    // Largest u at which psi can still be evaluated without overflow,
    // mirroring the guard inside `psi`.
    let lam_max = lambda_max();
    let u_cap = {
        let saddle_cap = (1360.0 * v).sqrt();
        if saddle_cap <= lam_max * v {
            saddle_cap
        } else {
            (680.0 + 0.5 * lam_max * lam_max * v) / lam_max
        }
    };
    let psi_at = |u: f64| psi(u, v, q);
    let (mut lo, mut hi);
    if psi_at(0.0)? >= c {
        // Root is non-positive: expand downward.
        hi = 0.0;
        lo = -1.0;
        while psi_at(lo)? > c {
            lo *= 2.0;
            if lo < -1e12 {
                return Err(BoundaryError::BracketFailure(
                    "no negative bracket found above -1e12".into(),
                ));
            }
        }
    } else {
        lo = 0.0;
        hi = hint.max(1.0);
        while psi_at(hi)? < c {
            lo = hi;
            hi *= 2.0;
            if hi > u_cap {
                return Err(BoundaryError::BracketFailure(format!(
                    "c = {c} too large for the supported u range (cap {u_cap:.1})"
                )));
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol * hi.abs().max(lo.abs()).max(1.0) {
            return Ok(mid);
        }
        if psi_at(mid)? < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form expansion of `beta_F(v, c)` for large `v`:
/// `sqrt(2v [log log v + 5/2 log log log v + log(c / (2 sqrt(pi)))])`,
/// with the bracket clamped at zero.
pub fn asymptotic_beta(v: f64, c: f64) -> Result<f64, BoundaryError> {
    if v <= e_to_e() {
        return Err(BoundaryError::DomainError(format!(
            "v = {v} must exceed e^e for iterated logarithms"
        )));
    }
    let llv = v.ln().ln();
    let lllv = llv.ln();
    let bracket = llv + 2.5 * lllv + (c / (2.0 * std::f64::consts::PI.sqrt())).ln();
    Ok((2.0 * v * bracket.max(0.0)).sqrt())
}

// ---------------------------------------------------------------------------
// Boundary specifications
// ---------------------------------------------------------------------------

/// Which confidence-radius rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryVariant {
    /// `sqrt(2N log(c sqrt(N) / delta))`.
    Baseline,
    /// Exact `beta_F(N, 1/(2 delta))`.
    MixtureExact,
    /// `sqrt(2N [log log N + 5/2 log log log N + c1])`, mixture fallback
    /// below `n_min`.
    AsymptoticC1 { c1: f64, n_min: u64 },
    /// `sqrt((2 + c2) N log log N)`, mixture fallback below `n_min`.
    SimpleLIL { c2: f64, n_min: u64 },
}

/// A fully specified confidence boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub variant: BoundaryVariant,
    pub delta: f64,
    pub quadrature: QuadratureParams,
}

const BETA_TOL: f64 = 1e-12;

impl BoundarySpec {
    pub fn new(variant: BoundaryVariant, delta: f64) -> Result<Self, BoundaryError> {
        let spec = BoundarySpec {
            variant,
            delta,
            quadrature: QuadratureParams::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BoundaryError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BoundaryError::DomainError(format!(
                "delta = {} must lie in (0, 1)",
                self.delta
            )));
        }
        self.quadrature.validate()?;
        match self.variant {
            BoundaryVariant::AsymptoticC1 { c1, n_min } => {
                if !c1.is_finite() {
                    return Err(BoundaryError::DomainError("c1 must be finite".into()));
                }
                if n_min < 16 {
                    return Err(BoundaryError::DomainError(
                        "n_min must be >= 16 so that log log N is positive".into(),
                    ));
                }
            }
            BoundaryVariant::SimpleLIL { c2, n_min } => {
                if !c2.is_finite() {
                    return Err(BoundaryError::DomainError("c2 must be finite".into()));
                }
                if n_min < 16 {
                    return Err(BoundaryError::DomainError(
                        "n_min must be >= 16 so that log log N is positive".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Confidence radius as a function of the pair count `N`.
    pub fn threshold(&self, n_obs: u64) -> Result<f64, BoundaryError> {
        if n_obs == 0 {
            return Err(BoundaryError::DomainError("N must be >= 1".into()));
        }
        let n = n_obs as f64;
        match self.variant {
            BoundaryVariant::Baseline => {
                let c = mixture_constant();
                Ok((2.0 * n * (c * n.sqrt() / self.delta).ln()).sqrt())
            }
            BoundaryVariant::MixtureExact => self.mixture_threshold(n),
            BoundaryVariant::AsymptoticC1 { c1, n_min } => {
                if n_obs < n_min {
                    return self.mixture_threshold(n);
                }
                let llv = n.ln().ln();
                let bracket = llv + 2.5 * llv.ln() + c1;
                Ok((2.0 * n * bracket.max(0.0)).sqrt())
            }
            BoundaryVariant::SimpleLIL { c2, n_min } => {
                if n_obs < n_min {
                    return self.mixture_threshold(n);
                }
                Ok(((2.0 + c2) * n * n.ln().ln()).sqrt())
            }
        }
    }

    fn mixture_threshold(&self, v: f64) -> Result<f64, BoundaryError> {
        beta_f(v, 1.0 / (2.0 * self.delta), &self.quadrature, BETA_TOL)
    }

    /// Precomputes thresholds for `N = 1..=n_max`. Index 0 is infinity
    /// (the criterion requires `N > 0`). The mixture values are computed in
    /// fixed chunks, in parallel, with the root for each `N` marched from
    /// the previous one; chunk boundaries are deterministic, so the table
    /// does not depend on the thread count.
    pub fn threshold_table(&self, n_max: u64) -> Result<ThresholdTable, BoundaryError> {
        let c = 1.0 / (2.0 * self.delta);
        let mixture_upto = match self.variant {
            BoundaryVariant::MixtureExact => n_max,
            BoundaryVariant::AsymptoticC1 { n_min, .. }
            | BoundaryVariant::SimpleLIL { n_min, .. } => n_min.saturating_sub(1).min(n_max),
            BoundaryVariant::Baseline => 0,
        };
        let mut values = Vec::with_capacity(n_max as usize + 1);
        values.push(f64::INFINITY);
        if mixture_upto > 0 {
            const CHUNK: u64 = 256;
            let starts: Vec<u64> = (1..=mixture_upto).step_by(CHUNK as usize).collect();
            let computed: Result<Vec<Vec<f64>>, BoundaryError> = starts
                .par_iter()
                .map(|&lo| {
                    let hi_n = (lo + CHUNK - 1).min(mixture_upto);
                    let mut hint = 1.0;
                    let mut out = Vec::with_capacity((hi_n - lo + 1) as usize);
                    for n_obs in lo..=hi_n {
                        let b = beta_f_from(n_obs as f64, c, &self.quadrature, BETA_TOL, hint)?;
                        hint = b.max(1.0);
                        out.push(b);
                    }
                    Ok(out)
                })
                .collect();
            for chunk in computed? {
                values.extend(chunk);
            }
        }
        for n_obs in (mixture_upto + 1)..=n_max {
            values.push(self.threshold(n_obs)?);
        }
        Ok(ThresholdTable { values })
    }
}

/// Precomputed radii indexed by the pair count `N`.
#[derive(Debug, Clone)]
pub struct ThresholdTable {
    values: Vec<f64>,
}

impl ThresholdTable {
    #[inline]
    pub fn get(&self, n_obs: u64) -> f64 {
        self.values[n_obs as usize]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Constant estimation
// ---------------------------------------------------------------------------

/// Grid-sup estimates of the expansion constants, valid on the grid only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsEstimate {
    pub delta: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub grid_points: usize,
    /// Grid point at which the C0 envelope is attained.
    pub c0_argmax: f64,
    /// Grid point at which the C2 envelope is attained.
    pub c2_argmax: f64,
}

fn validate_grid(v_grid: &[f64]) -> Result<(), BoundaryError> {
    if v_grid.is_empty() {
        return Err(BoundaryError::DomainError("empty v grid".into()));
    }
    for &v in v_grid {
        if v <= e_to_e() {
            return Err(BoundaryError::DomainError(format!(
                "grid point {v} must exceed e^e"
            )));
        }
    }
    Ok(())
}

/// Envelope of the `o(1)` term of the expansion: the maximum over the grid of
/// `beta_F(v, 1/(2 delta))^2 / (2v) - log log v - 5/2 log log log v
///  - log(1/(4 delta sqrt(pi)))`. Returns `(C0, C1 = log(1/(4 delta sqrt(pi))) + C0)`
/// together with the attaining grid point.
pub fn estimate_c0(
    delta: f64,
    v_grid: &[f64],
    q: &QuadratureParams,
) -> Result<(f64, f64, f64), BoundaryError> {
    validate_grid(v_grid)?;
    let c = 1.0 / (2.0 * delta);
    let log_term = (1.0 / (4.0 * delta * std::f64::consts::PI.sqrt())).ln();
    let mut c0 = f64::NEG_INFINITY;
    let mut argmax = v_grid[0];
    let mut hint = 1.0;
    for &v in v_grid {
        let b = beta_f_from(v, c, q, BETA_TOL, hint)?;
        hint = b.max(1.0);
        let llv = v.ln().ln();
        let term = b * b / (2.0 * v) - llv - 2.5 * llv.ln() - log_term;
        if term > c0 {
            c0 = term;
            argmax = v;
        }
    }
    Ok((c0, log_term + c0, argmax))
}

/// Smallest `C2 >= 0` with `beta_F(v, 1/(2 delta)) <= sqrt((2 + C2) v log log v)`
/// on the whole grid. Returns `(C2, argmax)`.
pub fn estimate_c2(
    delta: f64,
    v_grid: &[f64],
    q: &QuadratureParams,
) -> Result<(f64, f64), BoundaryError> {
    validate_grid(v_grid)?;
    let c = 1.0 / (2.0 * delta);
    let mut c2 = 0.0_f64;
    let mut argmax = v_grid[0];
    let mut hint = 1.0;
    for &v in v_grid {
        let b = beta_f_from(v, c, q, BETA_TOL, hint)?;
        hint = b.max(1.0);
        let term = b * b / (v * v.ln().ln()) - 2.0;
        if term > c2 {
            c2 = term;
            argmax = v;
        }
    }
    Ok((c2.max(0.0), argmax))
}

/// Estimates all three constants on a log-spaced grid.
pub fn estimate_constants(
    delta: f64,
    v_min: f64,
    v_max: f64,
    grid_points: usize,
    q: &QuadratureParams,
) -> Result<ConstantsEstimate, BoundaryError> {
    let grid = log_spaced_grid(v_min, v_max, grid_points)?;
    let (c0, c1, c0_argmax) = estimate_c0(delta, &grid, q)?;
    let (c2, c2_argmax) = estimate_c2(delta, &grid, q)?;
    Ok(ConstantsEstimate {
        delta,
        c0,
        c1,
        c2,
        v_min,
        v_max,
        grid_points,
        c0_argmax,
        c2_argmax,
    })
}

/// Log-spaced grid, inclusive of both ends.
pub fn log_spaced_grid(v_min: f64, v_max: f64, points: usize) -> Result<Vec<f64>, BoundaryError> {
    if !(v_min > 0.0 && v_max > v_min) || points < 2 {
        return Err(BoundaryError::DomainError(
            "need 0 < v_min < v_max and >= 2 points".into(),
        ));
    }
    let lmin = v_min.ln();
    let lmax = v_max.ln();
    Ok((0..points)
        .map(|i| (lmin + (lmax - lmin) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

/// Smallest grid `N*` such that the refined threshold stays strictly below
/// the baseline for every grid point `>= N*`. `None` if no such point exists.
pub fn crossover_point(
    refined: &BoundarySpec,
    baseline: &BoundarySpec,
    n_grid: &[u64],
) -> Result<Option<u64>, BoundaryError> {
    let mut crossover = None;
    for &n in n_grid {
        if refined.threshold(n)? < baseline.threshold(n)? {
            if crossover.is_none() {
                crossover = Some(n);
            }
        } else {
            crossover = None;
        }
    }
    Ok(crossover)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn psi_monotone_in_u(u1 in -50.0..200.0_f64, du in 0.1..100.0_f64, v in 0.0..1e4_f64) {
            let q = QuadratureParams::default();
            let a = psi(u1, v, &q).unwrap();
            let b = psi(u1 + du, v, &q).unwrap();
            prop_assert!(b > a);
        }

        #[test]
        fn psi_antitone_in_v(u in -50.0..200.0_f64, v1 in 0.0..1e4_f64, dv in 1.0..1e4_f64) {
            let q = QuadratureParams::default();
            let a = psi(u, v1, &q).unwrap();
            let b = psi(u, v1 + dv, &q).unwrap();
            prop_assert!(b < a);
        }

        #[test]
        fn beta_f_identity(v in 1.0..1e5_f64, c in 1.5..500.0_f64) {
            let q = QuadratureParams::default();
            let u = beta_f(v, c, &q, 1e-12).unwrap();
            let back = psi(u, v, &q).unwrap();
            prop_assert!((back - c).abs() / c < 1e-7);
        }
    }
}
