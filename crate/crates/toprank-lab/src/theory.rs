//! Closed-form regret and per-pair bounds, in the original
//! log-of-horizon form and the two iterated-logarithm refinements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{e_to_e, mixture_constant};
use crate::env::ItemCatalog;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("alpha must be strictly decreasing (tie or increase at index {0})")]
    TiedAlphas(usize),
    #[error("delta = {0} must lie in (0, 1)")]
    BadDelta(f64),
    #[error("horizon n = {0} too small: iterated logarithms need n > e^e")]
    HorizonTooSmall(u64),
    #[error("n must be >= 1")]
    ZeroHorizon,
    #[error("pair ({0}, {1}) has nonpositive gap")]
    NonpositiveGap(usize, usize),
}

/// Which bound family to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundVariant {
    /// `log(c sqrt(n) / delta)` terms.
    Original,
    /// `log log n + 5/2 log log log n + C1(delta)` terms.
    RefinedC1 { c1: f64 },
    /// `(2 + C2(delta)) log log n`-style terms.
    RefinedC2 { c2: f64 },
}

fn check_common(n: u64, delta: f64, variant: BoundVariant) -> Result<(), TheoryError> {
    if n == 0 {
        return Err(TheoryError::ZeroHorizon);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TheoryError::BadDelta(delta));
    }
    if !matches!(variant, BoundVariant::Original) && (n as f64) <= e_to_e() {
        return Err(TheoryError::HorizonTooSmall(n));
    }
    Ok(())
}

fn check_sorted(catalog: &ItemCatalog) -> Result<(), TheoryError> {
    if let Some(i) = catalog
        .alphas()
        .windows(2)
        .position(|w| w[0] <= w[1])
    {
        return Err(TheoryError::TiedAlphas(i));
    }
    Ok(())
}

/// The per-horizon log factor of each bound family. The triple-log term of
/// the refined-C1 variant is nonnegative throughout the valid domain
/// (`n > e^e`); the clamp is purely defensive.
fn log_factor(n: u64, delta: f64, variant: BoundVariant) -> f64 {
    let nf = n as f64;
    match variant {
        BoundVariant::Original => (mixture_constant() * nf.sqrt() / delta).ln(),
        BoundVariant::RefinedC1 { c1 } => {
            let lln = nf.ln().ln();
            lln + 2.5 * lln.ln().max(0.0) + c1
        }
        BoundVariant::RefinedC2 { .. } => nf.ln().ln(),
    }
}

/// Gap-dependent regret bound:
/// `delta n K L^2 + sum_j sum_{i <= min(K, j-1)} (1 + coeff_ij)`.
pub fn regret_bound_gapped(
    catalog: &ItemCatalog,
    n: u64,
    delta: f64,
    variant: BoundVariant,
) -> Result<f64, TheoryError> {
    check_common(n, delta, variant)?;
    check_sorted(catalog)?;
    let l = catalog.len();
    let k = catalog.display_len();
    let factor = log_factor(n, delta, variant);
    let mut sum = 0.0;
    for j in 0..l {
        for i in 0..k.min(j) {
            let pair_sum = catalog.alpha(i) + catalog.alpha(j);
            let gap = catalog.gap(i, j);
            let coeff = match variant {
                BoundVariant::Original | BoundVariant::RefinedC1 { .. } => {
                    6.0 * pair_sum * factor / gap
                }
                BoundVariant::RefinedC2 { c2 } => {
                    (1.0 + 2.0 * (2.0 + c2).sqrt()) * pair_sum * factor / gap
                }
            };
            sum += 1.0 + coeff;
        }
    }
    Ok(delta * n as f64 * k as f64 * (l * l) as f64 + sum)
}

/// Gap-free regret bound:
/// `delta n K L^2 + K L + sqrt(scale * K^3 L n * factor)`.
pub fn regret_bound_gapfree(
    k: usize,
    l: usize,
    n: u64,
    delta: f64,
    variant: BoundVariant,
) -> Result<f64, TheoryError> {
    check_common(n, delta, variant)?;
    let nf = n as f64;
    let kl3 = (k * k * k * l) as f64;
    let factor = log_factor(n, delta, variant);
    let sqrt_term = match variant {
        BoundVariant::Original | BoundVariant::RefinedC1 { .. } => {
            (4.0 * kl3 * nf * factor).sqrt()
        }
        BoundVariant::RefinedC2 { c2 } => (2.0 * (2.0 + c2) * kl3 * nf * factor).sqrt(),
    };
    Ok(delta * nf * k as f64 * (l * l) as f64 + (k * l) as f64 + sqrt_term)
}

/// Per-pair bound on the final statistic `S_nij` (items 0-based, `i < j`).
pub fn pair_statistic_bound(
    i: usize,
    j: usize,
    catalog: &ItemCatalog,
    n: u64,
    delta: f64,
    variant: BoundVariant,
) -> Result<f64, TheoryError> {
    check_common(n, delta, variant)?;
    let gap = catalog.gap(i, j);
    if gap <= 0.0 {
        return Err(TheoryError::NonpositiveGap(i, j));
    }
    let pair_sum = catalog.alpha(i) + catalog.alpha(j);
    let factor = log_factor(n, delta, variant);
    let coeff = match variant {
        BoundVariant::Original | BoundVariant::RefinedC1 { .. } => 6.0 * pair_sum / gap,
        BoundVariant::RefinedC2 { c2 } => (1.0 + 2.0 * (2.0 + c2).sqrt()) * pair_sum / gap,
    };
    Ok(1.0 + coeff * factor)
}

/// The `delta = 1/n` preset.
pub fn delta_one_over_n(n: u64) -> f64 {
    1.0 / n as f64
}
