//! Two-parameter Mittag-Leffler function `E_{α,β}(z)`.
//!
//! Four evaluation routes are provided and cross-checked against each other:
//!
//! * [`ml_series`]: the defining power series with compensated summation and an
//!   a-posteriori rounding estimate, usable for small `|z|`;
//! * [`ml_integral`]: the real-line integral representation (with the
//!   exponential term when `|arg z| < απ`), integrated by adaptive Gauss–Kronrod;
//! * [`ml_imaginary_axis`]: the same representation specialised to
//!   `z = -i t^α λ`, the only arguments the solution operators need;
//! * [`ml_contour`]: trapezoidal inversion of the Laplace transform
//!   `s^{α-β}/(s^α - z)` along a parabolic contour. This is the fallback where
//!   the integral's denominator nearly vanishes on the real axis (`α ≈ 1/2` on
//!   the imaginary axis) and for `α = 1`.
//!
//! [`ml_eval`] dispatches between them.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::quad::{self, QuadError, QuadOptions};
use crate::special::{ln_gamma, rgamma};

/// Largest `|z|` for which the series is attempted.
pub const SERIES_RADIUS: f64 = 5.0;
/// Margin kept below the `β < 1 + α` bound of the integral representation.
pub const PARAM_EPS: f64 = 1e-9;
pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_SERIES_TERMS: usize = 10_000;
/// Parameter window around `α = 1/2` in which the imaginary-axis formula may be near-singular.
pub const HALF_WINDOW: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlfError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("|z| = {modulus} exceeds the series radius {radius}")]
    OutsideSeriesRadius { modulus: f64, radius: f64 },
    #[error("series did not converge within {terms} terms")]
    NonConvergence { terms: usize },
    #[error("series is ill-conditioned: estimated rounding error {estimate:e} exceeds tolerance {tol:e}")]
    IllConditioned { estimate: f64, tol: f64 },
    #[error("integral representation needs z != 0")]
    ZeroArgument,
    #[error("integrand denominator |r^2 - 2rz cos(πα) + z^2| / |z|^2 = {relative:e} near r = {r} is below the guard {guard:e}")]
    Singularity { r: f64, relative: f64, guard: f64 },
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
    #[error("contour inversion is not defined for this argument: {0}")]
    ContourUnsupported(String),
    #[error("all evaluation routes failed: {0:?}")]
    AllBranchesFailed(Vec<MlfError>),
}

/// An evaluation request for `E_{α,β}(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlQuery {
    pub alpha: f64,
    pub beta: f64,
    pub z: Complex64,
    pub tol: f64,
}

impl MlQuery {
    /// Accepts `α ∈ (0, 1]` and `β > 0`. The tighter `β < 1 + α` bound is
    /// enforced by the routes that need it.
    pub fn new(alpha: f64, beta: f64, z: Complex64) -> Result<Self, MlfError> {
        Self::with_tol(alpha, beta, z, DEFAULT_TOL)
    }

    pub fn with_tol(alpha: f64, beta: f64, z: Complex64, tol: f64) -> Result<Self, MlfError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(MlfError::InvalidParameter(format!("alpha = {alpha} is outside (0, 1]")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(MlfError::InvalidParameter(format!("beta = {beta} must be positive")));
        }
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(MlfError::InvalidParameter(format!("z = {z} is not finite")));
        }
        if !(tol > 0.0 && tol < 1.0) {
            return Err(MlfError::InvalidParameter(format!("tol = {tol} must lie in (0, 1)")));
        }
        Ok(Self { alpha, beta, z, tol })
    }
}

/// Controls for the integral representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Budget of integrand evaluations (15 per Gauss–Kronrod panel).
    pub node_count: usize,
    /// Upper limit `U` in the variable `u = r^{1/α}`; the `r` integral stops at `U^α`.
    pub tail_cutoff: f64,
    /// Smallest admissible `|r² - 2rz cos(πα) + z²| / |z|²` on the real axis.
    pub singularity_guard: f64,
}

impl QuadratureSpec {
    pub fn for_tol(tol: f64) -> Self {
        Self { node_count: 30_000, tail_cutoff: -2.0 * tol.ln(), singularity_guard: 1e-2 }
    }

    fn validate(&self, tol: f64) -> Result<(), MlfError> {
        if self.node_count < 16 {
            return Err(MlfError::InvalidParameter(format!("node_count = {} is below 16", self.node_count)));
        }
        if (-self.tail_cutoff).exp() >= tol {
            return Err(MlfError::InvalidParameter(format!(
                "tail_cutoff = {} leaves an e^-u tail above tol = {tol:e}",
                self.tail_cutoff
            )));
        }
        Ok(())
    }
}

/// Which of the two solution-operator kernels to evaluate on the imaginary axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ImagKind {
    /// `E_{α,1}`
    E11,
    /// `E_{α,α}`
    Eaa,
}

impl ImagKind {
    pub fn beta(self, alpha: f64) -> f64 {
        match self {
            ImagKind::E11 => 1.0,
            ImagKind::Eaa => alpha,
        }
    }
}

/// Neumaier-compensated complex accumulator.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: Complex64,
    carry: Complex64,
}

impl CompensatedSum {
    fn add(&mut self, x: Complex64) {
        self.sum.re = two_sum(self.sum.re, x.re, &mut self.carry.re);
        self.sum.im = two_sum(self.sum.im, x.im, &mut self.carry.im);
    }

    fn value(&self) -> Complex64 {
        self.sum + self.carry
    }
}

fn two_sum(s: f64, x: f64, carry: &mut f64) -> f64 {
    let t = s + x;
    if s.abs() >= x.abs() {
        *carry += (s - t) + x;
    } else {
        *carry += (x - t) + s;
    }
    t
}

/// Power series `Σ zⁿ/Γ(αn+β)`.
///
/// Terms are formed in log space; the accumulated rounding error is estimated
/// from `Σ|termₙ|` and the call fails with [`MlfError::IllConditioned`] when that
/// estimate exceeds `tol·|E|`, which happens for moderate `|z|` once `α` is small.
pub fn ml_series(q: &MlQuery) -> Result<Complex64, MlfError> {
    let modulus = q.z.norm();
    if modulus > SERIES_RADIUS {
        return Err(MlfError::OutsideSeriesRadius { modulus, radius: SERIES_RADIUS });
    }
    if modulus == 0.0 {
        return Ok(Complex64::new(rgamma(q.beta), 0.0));
    }
    let ln_z = q.z.ln();
    // Terms decrease once (αn+β)^α exceeds |z|.
    let peak_arg = modulus.powf(1.0 / q.alpha) + 1.0;
    let mut acc = CompensatedSum::default();
    let mut rounding = 0.0;
    let mut quiet = 0;
    for n in 0..MAX_SERIES_TERMS {
        let nf = n as f64;
        let arg = q.alpha * nf + q.beta;
        let (term, magnitude_of_logs) = if arg > 150.0 {
            let lg = ln_gamma(arg);
            ((ln_z * nf - lg).exp(), (nf * ln_z).norm() + lg.abs())
        } else {
            (q.z.powu(n as u32) * rgamma(arg), nf)
        };
        acc.add(term);
        let mag = term.norm();
        rounding += f64::EPSILON * mag * (2.0 + magnitude_of_logs);
        let s = acc.value().norm();
        if arg > peak_arg && mag <= 0.5 * f64::EPSILON * s {
            quiet += 1;
            if quiet >= 2 {
                if rounding > q.tol * s {
                    return Err(MlfError::IllConditioned { estimate: rounding / s.max(f64::MIN_POSITIVE), tol: q.tol });
                }
                return Ok(acc.value());
            }
        } else {
            quiet = 0;
        }
    }
    Err(MlfError::NonConvergence { terms: MAX_SERIES_TERMS })
}

fn check_integral_params(alpha: f64, beta: f64) -> Result<(), MlfError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MlfError::InvalidParameter(format!(
            "integral representation needs alpha in (0, 1), got {alpha}"
        )));
    }
    if beta > 1.0 + alpha - PARAM_EPS {
        return Err(MlfError::InvalidParameter(format!(
            "integral representation needs beta < 1 + alpha, got beta = {beta}, alpha = {alpha}"
        )));
    }
    Ok(())
}

/// Checks the real-axis denominator `(r - z e^{iπα})(r - z e^{-iπα})` against
/// the guard and returns the positions of its near-real zeros as breakpoints.
fn denominator_breaks(alpha: f64, z: Complex64, r_max: f64, guard: f64) -> Result<Vec<f64>, MlfError> {
    let rot = Complex64::from_polar(1.0, PI * alpha);
    let zeros = [z * rot, z * rot.conj()];
    let scale = z.norm_sqr();
    let cos_pa = (PI * alpha).cos();
    let mut breaks = Vec::new();
    for zeta in zeros {
        if zeta.re > 0.0 && zeta.re < 1.5 * r_max {
            let r = zeta.re;
            let den = Complex64::new(r * r, 0.0) - z * (2.0 * r * cos_pa) + z * z;
            let relative = den.norm() / scale;
            if relative < guard {
                return Err(MlfError::Singularity { r, relative, guard });
            }
            if r < r_max {
                breaks.push(r);
                // resolve the peak of width ~|Im ζ| on either side
                let w = zeta.im.abs();
                for k in [0.25, 1.0, 4.0] {
                    breaks.push(r - k * w);
                    breaks.push(r + k * w);
                }
            }
        }
    }
    Ok(breaks)
}

fn quad_options(tol: f64, spec: &QuadratureSpec) -> QuadOptions {
    QuadOptions { rel_tol: 0.1 * tol, abs_tol: 1e-300, max_panels: (spec.node_count / 15).max(2) }
}

/// `(1/α) z^{(1-β)/α} exp(z^{1/α})`, the residue contribution present when `|arg z| < απ`.
fn exponential_term(alpha: f64, beta: f64, z: Complex64) -> Complex64 {
    let ln_z = z.ln();
    ((ln_z * ((1.0 - beta) / alpha)) + (ln_z / alpha).exp()).exp() / alpha
}

/// Integral representation on the positive real axis.
pub fn ml_integral(q: &MlQuery) -> Result<Complex64, MlfError> {
    ml_integral_with(q, &QuadratureSpec::for_tol(q.tol))
}

pub fn ml_integral_with(q: &MlQuery, spec: &QuadratureSpec) -> Result<Complex64, MlfError> {
    check_integral_params(q.alpha, q.beta)?;
    spec.validate(q.tol)?;
    let z = q.z;
    if z.norm() == 0.0 {
        return Err(MlfError::ZeroArgument);
    }
    let (alpha, beta) = (q.alpha, q.beta);
    let r_max = spec.tail_cutoff.powf(alpha);
    let breaks = denominator_breaks(alpha, z, r_max, spec.singularity_guard)?;

    let c0 = 1.0 / (PI * alpha);
    let power = (1.0 - beta) / alpha;
    let s1 = (PI * (1.0 - beta)).sin();
    let s2 = (PI * (1.0 - beta + alpha)).sin();
    let two_cos = 2.0 * (PI * alpha).cos();
    let z2 = z * z;
    let zs2 = z * s2;
    let kernel = |r: f64| -> Complex64 {
        let weight = c0 * r.powf(power) * (-r.powf(1.0 / alpha)).exp();
        if weight == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let num = Complex64::new(r * s1, 0.0) - zs2;
        let den = Complex64::new(r * r, 0.0) - z * (two_cos * r) + z2;
        num / den * weight
    };
    let res = quad::integrate(kernel, 0.0, r_max, &breaks, &quad_options(q.tol, spec))?;
    let mut value = res.value;
    if z.arg().abs() < alpha * PI {
        value += exponential_term(alpha, beta, z);
    }
    Ok(value)
}

/// `E_{α,1}(-i t^α λ)` or `E_{α,α}(-i t^α λ)` from the imaginary-axis forms of
/// the integral representation: the integral alone for `α ≤ 1/2`, plus a
/// decaying exponential term for `α > 1/2`.
pub fn ml_imaginary_axis(alpha: f64, t: f64, lambda: f64, kind: ImagKind) -> Result<Complex64, MlfError> {
    ml_imaginary_axis_with(alpha, t, lambda, kind, DEFAULT_TOL)
}

pub fn ml_imaginary_axis_with(
    alpha: f64,
    t: f64,
    lambda: f64,
    kind: ImagKind,
    tol: f64,
) -> Result<Complex64, MlfError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MlfError::InvalidParameter(format!("alpha = {alpha} is outside (0, 1)")));
    }
    if !(t >= 0.0) || !(lambda >= 0.0) {
        return Err(MlfError::InvalidParameter(format!("need t >= 0 and lambda >= 0, got t = {t}, lambda = {lambda}")));
    }
    let y = t.powf(alpha) * lambda;
    axis_value(alpha, y, kind, tol, &QuadratureSpec::for_tol(tol))
}

/// Imaginary-axis evaluation at `z = -iy`, `y ≥ 0`.
fn axis_value(alpha: f64, y: f64, kind: ImagKind, tol: f64, spec: &QuadratureSpec) -> Result<Complex64, MlfError> {
    if y == 0.0 {
        return Ok(Complex64::new(rgamma(kind.beta(alpha)), 0.0));
    }
    spec.validate(tol)?;
    let z = Complex64::new(0.0, -y);
    let r_max = spec.tail_cutoff.powf(alpha);
    let breaks = denominator_breaks(alpha, z, r_max, spec.singularity_guard)?;
    let inv_alpha = 1.0 / alpha;
    let two_i_y_cos = Complex64::new(0.0, 2.0 * y * (alpha * PI).cos());
    let den = |r: f64| Complex64::new(r * r - y * y, 0.0) + two_i_y_cos * r;
    let opts = quad_options(tol, spec);
    match kind {
        ImagKind::E11 => {
            let pref = Complex64::new(0.0, (alpha * PI).sin() / (alpha * PI));
            let integrand = |r: f64| {
                let w = (-r.powf(inv_alpha)).exp();
                if w == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(w * y, 0.0) / den(r)
                }
            };
            let mut value = pref * quad::integrate(integrand, 0.0, r_max, &breaks, &opts)?.value;
            if alpha > 0.5 {
                // (1/α) exp(cos(π/2α) y^{1/α} - i sin(π/2α) y^{1/α})
                let ya = y.powf(inv_alpha);
                let theta = PI / (2.0 * alpha);
                value += Complex64::new(theta.cos() * ya, -theta.sin() * ya).exp() / alpha;
            }
            Ok(value)
        }
        ImagKind::Eaa => {
            let pref = ((1.0 - alpha) * PI).sin() / (alpha * PI);
            let integrand = |r: f64| {
                let ra = r.powf(inv_alpha);
                let w = ra * (-ra).exp();
                if w == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(w, 0.0) / den(r)
                }
            };
            let mut value = quad::integrate(integrand, 0.0, r_max, &breaks, &opts)?.value * pref;
            if alpha > 0.5 {
                // (1/α) e^{-iπ(1-α)/(2α)} y^{(1-α)/α} exp(e^{-iπ/(2α)} y^{1/α})
                let ya = y.powf(inv_alpha);
                let phase = Complex64::from_polar(1.0, -PI * (1.0 - alpha) / (2.0 * alpha));
                let rot = Complex64::from_polar(1.0, -PI / (2.0 * alpha));
                value += phase * y.powf((1.0 - alpha) / alpha) * (rot * ya).exp() / alpha;
            }
            Ok(value)
        }
    }
}

/// Target log-accuracy of the contour sum: each error term is pushed below `e^{-36}`.
const CONTOUR_LOG_TARGET: f64 = 36.0;
/// Default parabola scale; small values keep the `e^μ` rounding factor modest.
const CONTOUR_MU: f64 = 2.0;

/// Inverse Laplace transform of `s^{α-β}/(s^α - z)` at unit time along the
/// parabola `s(u) = μ(1 + iu)²`, plus the residue at `s = z^{1/α}` when that
/// pole lies on the principal sheet inside the contour.
///
/// In the `u`-plane the branch cut sits on `Im u = 1` and the pole on
/// `Im u = 1 - Re √(s_p/μ)`; the step is chosen from the width of the
/// pole-free strip around the real axis.
pub fn ml_contour(q: &MlQuery) -> Result<Complex64, MlfError> {
    let (alpha, beta, z) = (q.alpha, q.beta, q.z);
    let arg_z = z.arg();
    let on_cut = arg_z.abs() >= PI * (1.0 - 1e-15);
    let beta_integer = beta == beta.round();
    let pole = if z.norm() == 0.0 {
        None
    } else if alpha < 1.0 && arg_z.abs() < alpha * PI {
        Some(Complex64::from_polar(z.norm().powf(1.0 / alpha), arg_z / alpha))
    } else if alpha == 1.0 {
        if on_cut && !beta_integer {
            return Err(MlfError::ContourUnsupported(format!(
                "alpha = 1 with non-integer beta = {beta} places the pole z = {z} on the branch cut"
            )));
        }
        Some(z)
    } else {
        None
    };

    let mut mu = CONTOUR_MU;
    let mut upper = 1.0_f64;
    let mut lower = 1.0_f64;
    if let Some(p) = pole {
        let c = p.norm().sqrt() * (p.arg() / 2.0).cos();
        if (c / mu.sqrt() - 1.0).abs() < 0.4 {
            // move the pole to Im u = -1 (inside) or Im u = 1/2 (outside)
            mu = if c * c / 4.0 >= 0.25 { c * c / 4.0 } else { 4.0 * c * c };
        }
        let y_pole = 1.0 - c / mu.sqrt();
        if y_pole > 0.0 {
            upper = upper.min(y_pole);
        } else {
            lower = lower.min(-y_pole);
        }
    }
    let upper = 0.8 * upper;
    let lower = 0.8 * lower;
    let t = CONTOUR_LOG_TARGET;
    let h = (2.0 * PI * upper / (mu + t)).min(2.0 * PI * lower / (mu * (1.0 + lower).powi(2) + t));
    let u_max = (1.0 + (t + beta.max(1.0)) / mu).sqrt();
    let n = (u_max / h).ceil() as usize;

    let exponent = alpha - beta;
    let mut acc = CompensatedSum::default();
    for k in 0..=2 * n {
        let u = (k as f64 - n as f64) * h;
        let w = Complex64::new(1.0, u);
        let s = w * w * mu;
        let ds = Complex64::new(0.0, 2.0 * mu) * w;
        let ln_s = s.ln();
        let f = (ln_s * exponent).exp() / ((ln_s * alpha).exp() - z);
        acc.add(s.exp() * f * ds);
    }
    let mut value = acc.value() * (h / (2.0 * PI)) * Complex64::new(0.0, -1.0);

    if let Some(p) = pole {
        if (p / mu).sqrt().re > 1.0 {
            value += (p.ln() * (1.0 - beta)).exp() * p.exp() / alpha;
        }
    }
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(MlfError::ContourUnsupported(format!("non-finite contour sum for z = {z}")));
    }
    Ok(value)
}

fn is_on_imaginary_axis(z: Complex64) -> bool {
    z.norm() > 0.0 && (z.arg().abs() - 0.5 * PI).abs() <= 1e-12
}

/// Dispatching evaluator: series for small `|z|`, the imaginary-axis forms on
/// `arg z = ±π/2`, the general integral elsewhere and the contour as last resort.
pub fn ml_eval(q: &MlQuery) -> Result<Complex64, MlfError> {
    let mut failures = Vec::new();
    if q.z.norm() <= SERIES_RADIUS {
        match ml_series(q) {
            Ok(v) => return Ok(v),
            Err(e) => failures.push(e),
        }
    }
    if q.alpha < 1.0 {
        let imag_kind = if q.beta == 1.0 {
            Some(ImagKind::E11)
        } else if q.beta == q.alpha {
            Some(ImagKind::Eaa)
        } else {
            None
        };
        if let (true, Some(kind)) = (is_on_imaginary_axis(q.z), imag_kind) {
            // E(conj z) = conj E(z) for real parameters
            let flip = q.z.im > 0.0;
            match axis_value(q.alpha, q.z.im.abs(), kind, q.tol, &QuadratureSpec::for_tol(q.tol)) {
                Ok(v) => return Ok(if flip { v.conj() } else { v }),
                Err(e) => failures.push(e),
            }
        } else {
            match ml_integral(q) {
                Ok(v) => return Ok(v),
                Err(e) => failures.push(e),
            }
        }
    }
    match ml_contour(q) {
        Ok(v) => Ok(v),
        Err(e) => {
            failures.push(e);
            Err(MlfError::AllBranchesFailed(failures))
        }
    }
}

/// Convenience wrapper for `E_{α,β}(z)` at the default tolerance.
pub fn mittag_leffler(alpha: f64, beta: f64, z: Complex64) -> Result<Complex64, MlfError> {
    ml_eval(&MlQuery::new(alpha, beta, z)?)
}

/// Relative deviation of `∫₀^∞ e^{-st} t^{β-1} E_{α,β}(-a t^α) dt` from `s^{α-β}/(s^α + a)`.
///
/// The integral is computed by adaptive quadrature in `v = t^β` (which absorbs
/// the `t^{β-1}` endpoint singularity) on a range where `e^{-st}` falls below
/// `1e-26`. Quadrature failures are returned as errors, distinct from a large
/// residual.
pub fn laplace_identity_residual(alpha: f64, beta: f64, a: Complex64, s: f64) -> Result<f64, MlfError> {
    if !(s > 0.0) {
        return Err(MlfError::InvalidParameter(format!("s = {s} must be positive")));
    }
    let denom = Complex64::new(s.powf(alpha), 0.0) + a;
    if denom.norm() < 1e-12 {
        return Err(MlfError::InvalidParameter(format!("s^alpha + a vanishes for s = {s}, a = {a}")));
    }
    MlQuery::new(alpha, beta, Complex64::new(0.0, 0.0))?;
    let expected = Complex64::new(s.powf(alpha - beta), 0.0) / denom;
    let t_max = 60.0 / s;
    let v_max = t_max.powf(beta);
    let inv_beta = 1.0 / beta;
    let ratio = alpha / beta;
    let mut failure = None;
    let integrand = |v: f64| -> Complex64 {
        if v == 0.0 {
            return Complex64::new(rgamma(beta), 0.0) * inv_beta;
        }
        let t = v.powf(inv_beta);
        let z = -a * v.powf(ratio);
        match MlQuery::with_tol(alpha, beta, z, 1e-12).and_then(|q| ml_eval(&q)) {
            Ok(e) => e * ((-s * t).exp() * inv_beta),
            Err(err) => {
                failure.get_or_insert(err);
                Complex64::new(f64::NAN, 0.0)
            }
        }
    };
    let opts = QuadOptions { rel_tol: 1e-10, abs_tol: 1e-300, max_panels: 4000 };
    let breaks: Vec<f64> = [1e-6, 1e-3, 0.05, 0.3].iter().map(|f| f * v_max).collect();
    let result = quad::integrate(integrand, 0.0, v_max, &breaks, &opts);
    if let Some(err) = failure {
        return Err(err);
    }
    let value = result?.value;
    Ok((value - expected).norm() / expected.norm())
}

/// Residual `max |∂ₜᵅf(tₙ) + iλ f(tₙ)|` over the nodes in `[T/2, T]` of the L1
/// product-integration discretisation of the Caputo derivative applied to
/// `f(t) = E_{α,1}(-iλt^α)`, where `T` is the last node.
pub fn caputo_mode_residual(alpha: f64, lambda: f64, t_grid: &[f64]) -> Result<f64, MlfError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MlfError::InvalidParameter(format!("alpha = {alpha} is outside (0, 1)")));
    }
    if !(lambda >= 0.0) {
        return Err(MlfError::InvalidParameter(format!("lambda = {lambda} must be nonnegative")));
    }
    if t_grid.len() < 2 || t_grid[0] != 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MlfError::InvalidParameter("time grid must start at 0 and increase strictly".into()));
    }
    let values = t_grid
        .iter()
        .map(|&t| {
            let z = Complex64::new(0.0, -lambda * t.powf(alpha));
            ml_eval(&MlQuery::with_tol(alpha, 1.0, z, 1e-12)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let slopes: Vec<Complex64> = (0..t_grid.len() - 1)
        .map(|k| (values[k + 1] - values[k]) / (t_grid[k + 1] - t_grid[k]))
        .collect();
    let one_minus = 1.0 - alpha;
    let scale = rgamma(2.0 - alpha);
    let mut worst: f64 = 0.0;
    let half = 0.5 * t_grid[t_grid.len() - 1];
    for n in 1..t_grid.len() {
        let tn = t_grid[n];
        if tn < half {
            continue;
        }
        let mut acc = CompensatedSum::default();
        for k in 0..n {
            let w = (tn - t_grid[k]).powf(one_minus) - (tn - t_grid[k + 1]).powf(one_minus);
            acc.add(slopes[k] * w);
        }
        let derivative = acc.value() * scale;
        let residual = (derivative + Complex64::new(0.0, lambda) * values[n]).norm();
        worst = worst.max(residual);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn series_trivial_values() {
        let q = MlQuery::new(0.5, 1.0, c(0.0, 0.0)).unwrap();
        assert_eq!(ml_series(&q).unwrap(), c(1.0, 0.0));
        let e = ml_series(&MlQuery::new(1.0, 1.0, c(1.0, 0.0)).unwrap()).unwrap();
        assert!((e.re - std::f64::consts::E).abs() < 1e-14, "{e}");
        let e = ml_series(&MlQuery::new(1.0, 2.0, c(1.0, 0.0)).unwrap()).unwrap();
        assert!((e.re - (std::f64::consts::E - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn series_rejects_large_argument() {
        let q = MlQuery::new(0.5, 1.0, c(0.0, -6.0)).unwrap();
        assert!(matches!(ml_series(&q), Err(MlfError::OutsideSeriesRadius { .. })));
    }

    #[test]
    fn series_flags_cancellation() {
        // terms reach ~1e24 before cancelling down to ~1e-2
        let q = MlQuery::new(0.4, 0.4, c(0.0, -5.0)).unwrap();
        assert!(matches!(ml_series(&q), Err(MlfError::IllConditioned { .. })));
    }

    #[test]
    fn query_validation() {
        assert!(MlQuery::new(0.0, 1.0, c(1.0, 0.0)).is_err());
        assert!(MlQuery::new(1.2, 1.0, c(1.0, 0.0)).is_err());
        assert!(MlQuery::new(0.5, -1.0, c(1.0, 0.0)).is_err());
        assert!(MlQuery::new(0.5, 1.0, c(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn integral_rejects_large_beta_and_zero() {
        let q = MlQuery::new(0.5, 1.6, c(0.0, -3.0)).unwrap();
        assert!(matches!(ml_integral(&q), Err(MlfError::InvalidParameter(_))));
        let q = MlQuery::new(0.5, 1.0, c(0.0, 0.0)).unwrap();
        assert_eq!(ml_integral(&q), Err(MlfError::ZeroArgument));
    }

    #[test]
    fn integral_guard_trips_near_half() {
        let q = MlQuery::new(0.5004, 1.0, c(0.0, -3.0)).unwrap();
        assert!(matches!(ml_integral(&q), Err(MlfError::Singularity { .. })));
        assert!(matches!(
            ml_imaginary_axis(0.4996, 1.0, 3.0, ImagKind::Eaa),
            Err(MlfError::Singularity { .. })
        ));
        // the dispatcher routes around it
        assert!(ml_eval(&q).is_ok());
    }

    #[test]
    fn imaginary_axis_at_zero_time() {
        for alpha in [0.2, 0.7, 0.9] {
            assert_eq!(ml_imaginary_axis(alpha, 0.0, 3.0, ImagKind::E11).unwrap(), c(1.0, 0.0));
            let v = ml_imaginary_axis(alpha, 1e-9, 3.0, ImagKind::E11).unwrap();
            let z = c(0.0, -3.0 * 1e-9f64.powf(alpha));
            let want = ml_series(&MlQuery::new(alpha, 1.0, z).unwrap()).unwrap();
            assert!(rel(v, want) < 1e-10, "{alpha}: {v} vs {want}");
        }
    }

    #[test]
    fn exponential_branch_presence() {
        // α = 0.6 has |arg z| = π/2 < 0.6π, so the integral alone is not the answer
        let z = c(0.0, -(2f64).powf(0.6));
        let q = MlQuery::new(0.6, 1.0, z).unwrap();
        let full = ml_integral(&q).unwrap();
        let axis = ml_imaginary_axis(0.6, 2.0, 1.0, ImagKind::E11).unwrap();
        assert!(rel(full, axis) < 1e-9);
        assert!((exponential_term(0.6, 1.0, z)).norm() > 1e-3);
    }

    #[test]
    fn alpha_one_is_exponential() {
        let v = ml_eval(&MlQuery::new(1.0, 1.0, c(0.0, 10.0)).unwrap()).unwrap();
        assert!(rel(v, c(10f64.cos(), 10f64.sin())) < 1e-10, "{v}");
        let v = ml_eval(&MlQuery::new(1.0, 1.0, c(-10.0, 0.0)).unwrap()).unwrap();
        assert!(rel(v, c((-10f64).exp(), 0.0)) < 1e-9, "{v}");
    }

    #[test]
    fn conjugate_symmetry() {
        for &(a, b, z) in &[(0.3, 1.0, c(1.0, -7.0)), (0.7, 0.7, c(-3.0, 2.0)), (0.55, 1.0, c(0.0, -9.0))] {
            let q1 = MlQuery::new(a, b, z).unwrap();
            let q2 = MlQuery::new(a, b, z.conj()).unwrap();
            let (v1, v2) = (ml_eval(&q1).unwrap(), ml_eval(&q2).unwrap());
            assert!((v1 - v2.conj()).norm() <= 1e-12 * v1.norm(), "{v1} vs {v2}");
        }
    }

    #[test]
    fn caputo_residual_of_constant_is_zero() {
        let grid: Vec<f64> = (0..=32).map(|k| (k as f64 / 32.0).powi(2)).collect();
        assert_eq!(caputo_mode_residual(0.5, 0.0, &grid).unwrap(), 0.0);
        assert!(caputo_mode_residual(0.5, 1.0, &[0.0, 0.5, 0.4]).is_err());
    }
}
