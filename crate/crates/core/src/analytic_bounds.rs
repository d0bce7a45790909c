//! Closed-form evaluation of the lower bound on `K_G(n → m)` and the Gamma
//! function machinery behind it.
//!
//! Everything is computed in the log domain. `Γ((n+1)/2)` overflows an `f64`
//! long before `n = 10⁶`, and the quantities of interest are ratios of such
//! values that are close to 1, so the ratios are formed from differences of
//! logarithms. The half-step difference `ln Γ(x+½) − ln Γ(x)` has its own
//! evaluation path ([`log_gamma_half_step`]) which keeps absolute accuracy
//! near machine epsilon for all `x`, instead of inheriting the rounding error
//! of two large `ln Γ` values.
//!
//! Sphere integrals use the normalized Haar measure (`∫ da = 1`). The
//! unnormalized `Y_k` of the textbook derivation equals the surface area of
//! `S^{n−1}` at `k = n`; [`y_closed_form`] returns `Y_k / Y_n`, which is the
//! expectation of `(Σ_{i≤k} a_i²)^{1/2}` under the normalized measure.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// `½ ln(2π)`.
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Arguments at or above this use the Stirling series directly; smaller
/// arguments are shifted up with the recurrence `Γ(x+1) = xΓ(x)`.
const STIRLING_MIN: f64 = 15.0;

/// `B_{2k} / (2k(2k−1))` for k = 1..=8.
const STIRLING_COEFFS: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// `(n−1)!` for n = 1..=21, exact in f64 up to 22!.
const FACTORIALS: [f64; 21] = [
    1.0,
    1.0,
    2.0,
    6.0,
    24.0,
    120.0,
    720.0,
    5040.0,
    40320.0,
    362_880.0,
    3_628_800.0,
    39_916_800.0,
    479_001_600.0,
    6_227_020_800.0,
    87_178_291_200.0,
    1_307_674_368_000.0,
    20_922_789_888_000.0,
    355_687_428_096_000.0,
    6_402_373_705_728_000.0,
    121_645_100_408_832_000.0,
    2_432_902_008_176_640_000.0,
];

/// Stirling correction `ln Γ(x) − [(x−½) ln x − x + ½ ln 2π]` for `x ≥ 15`.
fn stirling_tail(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in STIRLING_COEFFS.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

/// Stirling tail without its leading `1/(12x)` term.
fn stirling_tail_rest(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in STIRLING_COEFFS[1..].iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv2 * inv
}

fn log_gamma_stirling(x: f64) -> f64 {
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + stirling_tail(x)
}

/// Natural logarithm of the Gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(domain(format!("log_gamma requires x > 0, got {x}")));
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if x <= 21.0 && x.fract() == 0.0 {
        return Ok(FACTORIALS[x as usize - 1].ln());
    }
    if x >= STIRLING_MIN {
        return Ok(log_gamma_stirling(x));
    }
    let mut shifted = x;
    let mut product = 1.0;
    while shifted < STIRLING_MIN {
        product *= shifted;
        shifted += 1.0;
    }
    Ok(log_gamma_stirling(shifted) - product.ln())
}

/// `ln Γ(x + ½) − ln Γ(x)` for `x > 0`, accurate to a few ulps of the result.
pub fn log_gamma_half_step(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 || x.is_infinite() {
        return Err(domain(format!(
            "log_gamma_half_step requires finite x > 0, got {x}"
        )));
    }
    if x < STIRLING_MIN {
        return Ok(log_gamma(x + 0.5)? - log_gamma(x)?);
    }
    // x·ln(1 + 1/(2x)) − ½ ≈ −1/(8x); the subtraction is benign at this size.
    let bulk = x * (0.5 / x).ln_1p() - 0.5;
    Ok(bulk + 0.5 * x.ln() + (stirling_tail(x + 0.5) - stirling_tail(x)))
}

/// One evaluation of the lower bound on `K_G(n → m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub n: u64,
    pub m: u64,
    pub bound: f64,
    pub log_bound: f64,
    pub asymptotic_estimate: f64,
    pub f_n: f64,
    pub f_m: f64,
}

fn check_pair(n: u64, m: u64) -> Result<()> {
    if m < 1 {
        return Err(domain("m must satisfy m ≥ 1"));
    }
    if m > n {
        return Err(domain(format!(
            "m must satisfy m ≤ n (got n = {n}, m = {m})"
        )));
    }
    Ok(())
}

/// `ln f(n)` with `f(n) = Γ((n+1)/2) / (√n Γ(n/2))`.
pub fn log_f(n: u64) -> Result<f64> {
    if n < 1 {
        return Err(domain("f(n) requires n ≥ 1"));
    }
    let x = n as f64;
    Ok(log_gamma_half_step(0.5 * x)? - 0.5 * x.ln())
}

/// `f(n) = Γ((n+1)/2) / (√n Γ(n/2))`, strictly increasing towards `1/√2`.
pub fn f(n: u64) -> Result<f64> {
    Ok(log_f(n)?.exp())
}

/// The lower bound `(f(n)/f(m))²` on `K_G(n → m)`, with `m = n` mapped to 1.
pub fn kg_lower_bound(n: u64, m: u64) -> Result<LowerBoundReport> {
    check_pair(n, m)?;
    let log_f_n = log_f(n)?;
    let log_f_m = log_f(m)?;
    let log_bound = if n == m {
        0.0
    } else {
        2.0 * (log_f_n - log_f_m)
    };
    Ok(LowerBoundReport {
        n,
        m,
        bound: log_bound.exp(),
        log_bound,
        asymptotic_estimate: asymptotic_estimate(n, m)?,
        f_n: log_f_n.exp(),
        f_m: log_f_m.exp(),
    })
}

/// The same bound evaluated as `(m/n)·(Γ(m/2)Γ((n+1)/2) / (Γ((m+1)/2)Γ(n/2)))²`
/// from four independent `ln Γ` calls. Used to cross-check [`kg_lower_bound`].
pub fn kg_lower_bound_gamma_quotient(n: u64, m: u64) -> Result<f64> {
    check_pair(n, m)?;
    let (nf, mf) = (n as f64, m as f64);
    let log_quotient = log_gamma(0.5 * mf)? - log_gamma(0.5 * (mf + 1.0))?
        + log_gamma(0.5 * (nf + 1.0))?
        - log_gamma(0.5 * nf)?;
    Ok(((mf / nf).ln() + 2.0 * log_quotient).exp())
}

/// Leading-order expansion `1 + 1/(2m) − 1/(2n)` of the bound.
pub fn asymptotic_estimate(n: u64, m: u64) -> Result<f64> {
    check_pair(n, m)?;
    Ok(1.0 + 0.5 / m as f64 - 0.5 / n as f64)
}

/// Truncations of `Γ(k+½)/Γ(k) = √k (1 − 1/(8k) + 1/(128k²) + …)`.
///
/// `terms` counts the retained terms of the bracket (1, 2 or 3). The first
/// omitted term of the three-term truncation is `+5/(1024k³)`.
pub fn gamma_ratio_series(k: f64, terms: u32) -> Result<f64> {
    if k.is_nan() || k < 1.0 {
        return Err(domain(format!(
            "gamma_ratio_series requires k ≥ 1, got {k}"
        )));
    }
    let correction = match terms {
        1 => 1.0,
        2 => 1.0 - 1.0 / (8.0 * k),
        3 => 1.0 - 1.0 / (8.0 * k) + 1.0 / (128.0 * k * k),
        _ => return Err(domain(format!("terms must be 1, 2 or 3, got {terms}"))),
    };
    Ok(k.sqrt() * correction)
}

/// Outcome of checking that `f` is strictly increasing on `1..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub n_max: u64,
    pub holds: bool,
    /// Smallest `k` with `f(k+1) ≤ f(k)`.
    pub first_violation: Option<u64>,
    /// Smallest observed `ln f(k+1) − ln f(k)`.
    pub min_log_increment: f64,
}

/// Checks `ln f(k+1) − ln f(k) > 0` for `1 ≤ k < n_max`.
///
/// The increment is formed from half-step differences,
/// `H((k+1)/2) − H(k/2) − ½ ln(1 + 1/k)` with `H(x) = ln Γ(x+½) − ln Γ(x)`,
/// never from ratios of large Gamma values.
pub fn monotonicity_check(n_max: u64) -> Result<MonotonicityReport> {
    if n_max < 2 {
        return Err(domain("monotonicity_check requires n_max ≥ 2"));
    }
    let mut first_violation = None;
    let mut min_log_increment = f64::INFINITY;
    let mut h_prev = log_gamma_half_step(0.5)?;
    for k in 1..n_max {
        let h_next = log_gamma_half_step(0.5 * (k + 1) as f64)?;
        let increment = h_next - h_prev - 0.5 * (1.0 / k as f64).ln_1p();
        if increment <= 0.0 && first_violation.is_none() {
            first_violation = Some(k);
        }
        min_log_increment = min_log_increment.min(increment);
        h_prev = h_next;
    }
    Ok(MonotonicityReport {
        n_max,
        holds: first_violation.is_none(),
        first_violation,
        min_log_increment,
    })
}

fn robbins_main(x: f64) -> f64 {
    HALF_LN_2PI + (x + 0.5) * x.ln() - x
}

/// Robbins' bracket `ln lo < ln Γ(x+1) < ln hi`, valid for real `x ≥ 2`.
///
/// `lo = √(2π) x^{x+½} e^{−x + 1/(12x+1)}` and `hi` has `1/(12x)` in the
/// exponent. Both are returned as logarithms.
pub fn robbins_bounds(x: f64) -> Result<(f64, f64)> {
    if x.is_nan() || x < 2.0 || x.is_infinite() {
        return Err(domain(format!(
            "robbins_bounds requires finite x ≥ 2, got {x}"
        )));
    }
    let main = robbins_main(x);
    Ok((main + 1.0 / (12.0 * x + 1.0), main + 1.0 / (12.0 * x)))
}

/// Margins of `ln Γ(x+1)` inside Robbins' bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobbinsMargins {
    pub x: f64,
    /// `ln Γ(x+1) − ln lo`.
    pub above_lo: f64,
    /// `ln hi − ln Γ(x+1)`.
    pub below_hi: f64,
}

impl RobbinsMargins {
    pub fn holds(&self) -> bool {
        self.above_lo > 0.0 && self.below_hi > 0.0
    }
}

/// Evaluates both margins of Robbins' bracket in the remainder domain.
///
/// For large `x` the true margins (`≈ 1/(144x²)` and `≈ 1/(360x³)`) sit far
/// below the ulp of `ln Γ(x+1)`, so they are computed from the Stirling
/// remainder `ln Γ(x+1) − [½ ln 2π + (x+½) ln x − x]` directly.
pub fn robbins_margins(x: f64) -> Result<RobbinsMargins> {
    robbins_bounds(x)?;
    let (above_lo, below_hi) = if x >= STIRLING_MIN {
        let rest = stirling_tail_rest(x);
        let twelve_x = 12.0 * x;
        (1.0 / (twelve_x * (twelve_x + 1.0)) + rest, -rest)
    } else {
        let remainder = log_gamma(x + 1.0)? - robbins_main(x);
        (
            remainder - 1.0 / (12.0 * x + 1.0),
            1.0 / (12.0 * x) - remainder,
        )
    };
    Ok(RobbinsMargins {
        x,
        above_lo,
        below_hi,
    })
}

/// Bracket of `ln(1 + 1/n)` between its third- and fourth-order Taylor
/// polynomials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Log1pBracket {
    pub n: u64,
    /// `1/n − 1/(2n²) + 1/(3n³) − 1/(4n⁴)`.
    pub lo: f64,
    /// `1/n − 1/(2n²) + 1/(3n³)`.
    pub hi: f64,
    /// `ln(1 + 1/n) − lo`.
    pub above_lo: f64,
    /// `hi − ln(1 + 1/n)`.
    pub below_hi: f64,
}

impl Log1pBracket {
    pub fn holds(&self) -> bool {
        self.above_lo >= 0.0 && self.below_hi >= 0.0
    }
}

/// `Σ_{k ≥ start} (−1)^{k+1} t^k / k`, for `0 < t ≤ 0.1`.
fn log1p_series_tail(t: f64, start: u32) -> f64 {
    let mut power = t.powi(start as i32);
    let mut sum = 0.0;
    let mut k = start;
    while power > 1e-20 * t.powi(start as i32) {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * power / k as f64;
        power *= t;
        k += 1;
    }
    sum
}

/// Computes the bracket for `ln(1 + 1/n)` together with both margins.
pub fn log1p_bounds(n: u64) -> Result<Log1pBracket> {
    if n < 1 {
        return Err(domain("log1p_bounds requires n ≥ 1"));
    }
    let t = 1.0 / n as f64;
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t2 * t2;
    let hi = t - 0.5 * t2 + t3 / 3.0;
    let lo = hi - 0.25 * t4;
    let (above_lo, below_hi) = if t <= 0.1 {
        (log1p_series_tail(t, 5), -log1p_series_tail(t, 4))
    } else {
        let exact = t.ln_1p();
        (exact - lo, hi - exact)
    };
    Ok(Log1pBracket {
        n,
        lo,
        hi,
        above_lo,
        below_hi,
    })
}

/// `Ŷ_k = Γ((k+1)/2) Γ(n/2) / (Γ(k/2) Γ((n+1)/2))`, the normalized-measure
/// expectation of `(Σ_{i≤k} a_i²)^{1/2}` for uniform `a ∈ S^{n−1}`.
///
/// Multiply by the unnormalized `Y_n = 2π^{n/2} / Γ(n/2)` to recover `Y_k`.
pub fn y_closed_form(n: u64, k: u64) -> Result<f64> {
    if k < 1 || k > n {
        return Err(domain(format!(
            "y_closed_form requires 1 ≤ k ≤ n (got n = {n}, k = {k})"
        )));
    }
    if k == n {
        return Ok(1.0);
    }
    Ok((log_gamma_half_step(0.5 * k as f64)? - log_gamma_half_step(0.5 * n as f64)?).exp())
}
