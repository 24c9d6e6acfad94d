//! Sample-size dependent coefficient schedules.
//!
//! Each schedule turns a sample count `N` and risk level `α` into the scalars
//! that inflate a surrogate constraint:
//!
//! - `κ_N ≥ 1` multiplies the covariance term,
//! - `φ_N > 0` weights the support radius,
//! - `ν_N ≥ 0` widens the independent-coordinate constant.
//!
//! A small `N` is not an error: schedules report `feasible = false`
//! instead and leave the coefficient that would be undefined as `None`.

use crate::error::{invalid, Result};
use crate::math::{exp, ln, ln_1p, powf, sqrt};
use crate::quantile::inverse_normal_cdf;

/// Which schedule produced a [`ScheduleResult`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Covariance schedule with explicit exponent `p > 2`.
    Thm1 { p: f64 },
    /// Covariance schedule with `p` chosen from `N`.
    Cor1,
    /// Independent-mean schedule with explicit exponent `p > 0`.
    Prop2 { p: f64 },
    /// Independent-mean schedule with `p` chosen from `N`.
    Cor2,
    /// Independent-variance schedule; same coefficients as `Thm1`.
    Prop3 { p: f64 },
    /// Independent-variance schedule; same coefficients as `Cor1`.
    Cor3,
}

impl Method {
    /// Evaluates this schedule at `(n, alpha)`.
    pub fn evaluate(self, n: u64, alpha: f64) -> Result<ScheduleResult> {
        match self {
            Method::Thm1 { p } => thm1(n, alpha, p),
            Method::Cor1 => cor1(n, alpha),
            Method::Prop2 { p } => prop2(n, alpha, p),
            Method::Cor2 => cor2(n, alpha),
            Method::Prop3 { p } => prop3(n, alpha, p),
            Method::Cor3 => cor3(n, alpha),
        }
    }

    /// True for the schedules that feed the independent-mean surrogate.
    pub fn is_independent_mean(self) -> bool {
        matches!(self, Method::Prop2 { .. } | Method::Cor2)
    }
}

/// Risk level and optional support truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    pub alpha: f64,
    /// Probability mass allowed outside the estimated support.
    pub epsilon: f64,
}

impl ScheduleParams {
    pub fn new(alpha: f64, epsilon: f64) -> Result<Self> {
        alpha_tilde(alpha, epsilon)?;
        Ok(Self { alpha, epsilon })
    }

    /// The level the schedules should be evaluated at.
    pub fn effective_alpha(&self) -> f64 {
        (self.alpha - self.epsilon) / (1.0 - self.epsilon)
    }

    pub fn evaluate(&self, method: Method, n: u64) -> Result<ScheduleResult> {
        method.evaluate(n, self.effective_alpha())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleResult {
    pub method: Method,
    pub n: u64,
    pub alpha: f64,
    pub kappa: Option<f64>,
    pub phi: f64,
    pub nu: Option<f64>,
    /// Whether the sample-size condition of the schedule holds.
    pub feasible: bool,
}

impl ScheduleResult {
    /// `κ√φ`, the quantity traded off across exponents `p`.
    pub fn kappa_sqrt_phi(&self) -> Option<f64> {
        self.kappa.map(|k| k * sqrt(self.phi))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid!("alpha must lie in (0, 1), got {alpha}"))
    }
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(invalid!("sample count must be positive"));
    }
    Ok(())
}

/// `(2 + √(2 ln(c)))`, the recurring concentration factor.
fn concentration(c: f64) -> f64 {
    2.0 + sqrt(2.0 * ln(c))
}

/// Covariance schedule with exponent `p > 2`.
pub fn thm1(n: u64, alpha: f64, p: f64) -> Result<ScheduleResult> {
    check_alpha(alpha)?;
    check_n(n)?;
    if !(p > 2.0) || !p.is_finite() {
        return Err(invalid!("exponent p must exceed 2, got {p}"));
    }
    Ok(covariance_schedule(Method::Thm1 { p }, n, alpha, p))
}

/// Same coefficients as [`thm1`], tagged for the independent-variance surrogate.
pub fn prop3(n: u64, alpha: f64, p: f64) -> Result<ScheduleResult> {
    let mut r = thm1(n, alpha, p)?;
    r.method = Method::Prop3 { p };
    Ok(r)
}

fn covariance_schedule(method: Method, n: u64, alpha: f64, p: f64) -> ScheduleResult {
    let nf = n as f64;
    let feasible = nf > powf(concentration(4.0 / alpha), p);
    let root = powf(nf, 1.0 / p) - 2.0;
    let kappa = feasible.then(|| 1.0 / sqrt(1.0 - (4.0 / alpha) * exp(-root * root / 2.0)));
    let phi = powf(nf, 1.0 / p - 0.5);
    ScheduleResult { method, n, alpha, kappa, phi, nu: None, feasible }
}

/// Covariance schedule with the exponent chosen from `N`.
pub fn cor1(n: u64, alpha: f64) -> Result<ScheduleResult> {
    check_alpha(alpha)?;
    check_n(n)?;
    let nf = n as f64;
    let rn = sqrt(nf);
    // √(16N / exp((√N−2)²)) < α, in log space
    let feasible = 0.5 * (ln(16.0 * nf) - (rn - 2.0) * (rn - 2.0)) < ln(alpha);
    let kappa = (n >= 2).then(|| sqrt(rn / (rn - 1.0)));
    let phi = concentration(4.0 * rn / alpha) / rn;
    Ok(ScheduleResult { method: Method::Cor1, n, alpha, kappa, phi, nu: None, feasible })
}

/// Same coefficients as [`cor1`], tagged for the independent-variance surrogate.
pub fn cor3(n: u64, alpha: f64) -> Result<ScheduleResult> {
    let mut r = cor1(n, alpha)?;
    r.method = Method::Cor3;
    Ok(r)
}

/// The exponent at which [`thm1`] reproduces [`cor1`].
pub fn cor1_auto_p(n: u64, alpha: f64) -> f64 {
    let nf = n as f64;
    ln(nf) / ln(concentration(4.0 * sqrt(nf) / alpha))
}

/// The exponent at which [`prop2`] reproduces [`cor2`].
pub fn cor2_auto_p(n: u64, alpha: f64) -> f64 {
    let nf = n as f64;
    ln(nf) / ln(concentration(sqrt(nf) / alpha))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Whether [`thm1`] at [`cor1_auto_p`] reproduces `(κ, φ)` of [`cor1`] within
/// `1e-12` relative. Requires a feasible `cor1` schedule.
pub fn cor1_equals_thm1_at_autop(n: u64, alpha: f64) -> Result<bool> {
    let c = cor1(n, alpha)?;
    if !c.feasible {
        return Err(invalid!("cor1 schedule is infeasible at N = {n}"));
    }
    let p = cor1_auto_p(n, alpha);
    let nf = n as f64;
    // evaluate at p directly: the p > 2 bound is a validity condition, not part of the identity
    let root = powf(nf, 1.0 / p) - 2.0;
    let kappa = 1.0 / sqrt(1.0 - (4.0 / alpha) * exp(-root * root / 2.0));
    let phi = powf(nf, 1.0 / p - 0.5);
    Ok(rel_close(kappa, c.kappa.unwrap_or(f64::NAN), 1e-12) && rel_close(phi, c.phi, 1e-12))
}

/// Whether [`prop2`] at [`cor2_auto_p`] reproduces `(ν, φ)` of [`cor2`] within `1e-12` relative.
pub fn cor2_equals_prop2_at_autop(n: u64, alpha: f64) -> Result<bool> {
    let c = cor2(n, alpha)?;
    if !c.feasible {
        return Err(invalid!("cor2 schedule is infeasible at N = {n}"));
    }
    let p = prop2(n, alpha, cor2_auto_p(n, alpha))?;
    let nu_ok = match (p.nu, c.nu) {
        (Some(a), Some(b)) => rel_close(a, b, 1e-12),
        _ => false,
    };
    Ok(nu_ok && rel_close(p.phi, c.phi, 1e-12))
}

/// Independent-mean schedule with exponent `p > 0`.
pub fn prop2(n: u64, alpha: f64, p: f64) -> Result<ScheduleResult> {
    check_alpha(alpha)?;
    check_n(n)?;
    if !(p > 0.0) || !p.is_finite() {
        return Err(invalid!("exponent p must be positive, got {p}"));
    }
    let nf = n as f64;
    let feasible = nf > powf(concentration(1.0 / alpha), p);
    let root = powf(nf, 1.0 / p) - 2.0;
    // α·exp(root²/2) − 1
    let denom = libm::expm1(root * root / 2.0 + ln(alpha));
    let nu = (feasible && denom > 0.0).then(|| 0.5 * ln_1p((1.0 - alpha) / denom));
    let phi = powf(nf, 1.0 / p - 0.5);
    Ok(ScheduleResult { method: Method::Prop2 { p }, n, alpha, kappa: None, phi, nu, feasible: nu.is_some() })
}

/// Independent-mean schedule with the exponent chosen from `N`.
pub fn cor2(n: u64, alpha: f64) -> Result<ScheduleResult> {
    check_alpha(alpha)?;
    check_n(n)?;
    let rn = sqrt(n as f64);
    let feasible = n >= 2;
    let nu = feasible.then(|| 0.5 * ln_1p((1.0 - alpha) / (rn - 1.0)));
    let phi = concentration(rn / alpha) / rn;
    Ok(ScheduleResult { method: Method::Cor2, n, alpha, kappa: None, phi, nu, feasible })
}

/// Largest count scanned by [`min_samples_cor1`].
pub const MIN_SAMPLES_CAP: u64 = 1_000_000_000;

/// Smallest `N` for which [`cor1`] is feasible, by ascending scan.
pub fn min_samples_cor1(alpha: f64) -> Result<u64> {
    check_alpha(alpha)?;
    for n in 1..=MIN_SAMPLES_CAP {
        if cor1(n, alpha)?.feasible {
            return Ok(n);
        }
    }
    Err(invalid!("no feasible sample count up to {MIN_SAMPLES_CAP} for alpha = {alpha}"))
}

/// `α̃ = (α − ε)/(1 − ε)` for a support holding mass at least `1 − ε`.
pub fn alpha_tilde(alpha: f64, epsilon: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(epsilon >= 0.0 && epsilon < alpha) {
        return Err(invalid!("epsilon must lie in [0, alpha), got {epsilon}"));
    }
    Ok((alpha - epsilon) / (1.0 - epsilon))
}

/// Deterministic-equivalent multipliers of the standard deviation term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonConstants {
    /// Any distribution with the given mean and covariance.
    pub general: f64,
    /// Independent bounded coordinates.
    pub independent: f64,
    /// Gaussian distributions.
    pub gaussian: f64,
}

pub fn comparison_constants(alpha: f64) -> Result<ComparisonConstants> {
    check_alpha(alpha)?;
    Ok(ComparisonConstants {
        general: general_constant(alpha),
        independent: sqrt(0.5 * ln(1.0 / alpha)),
        gaussian: inverse_normal_cdf(1.0 - alpha),
    })
}

/// `√((1−α)/α)`.
pub fn general_constant(alpha: f64) -> f64 {
    sqrt((1.0 - alpha) / alpha)
}

/// High-probability estimation error radii of the sample moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceBounds {
    /// Bound on the mean error, with probability `1 − δ/2`.
    pub mean: f64,
    /// Bound on the covariance error, with probability `1 − δ/2`.
    pub covariance: f64,
    /// Mean bound for a single coordinate, with probability `1 − δ`.
    pub independent_mean: f64,
    /// `N ≥ (2 + √(2 ln(4/δ)))²`.
    pub condition_met: bool,
}

pub fn confidence_bounds(r: f64, n: u64, delta: f64) -> Result<ConfidenceBounds> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid!("delta must lie in (0, 1), got {delta}"));
    }
    if !(r >= 0.0) || !r.is_finite() {
        return Err(invalid!("radius must be finite and nonnegative, got {r}"));
    }
    check_n(n)?;
    let rn = sqrt(n as f64);
    let c4 = concentration(4.0 / delta);
    Ok(ConfidenceBounds {
        mean: r / rn * concentration(2.0 / delta),
        covariance: 2.0 * r * r / rn * c4,
        independent_mean: r / rn * concentration(1.0 / delta),
        condition_met: n as f64 >= c4 * c4,
    })
}
