//! Closed-form Bernstein functions `φ` with derivative evaluators and an
//! empirical estimate of the lower scaling index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest order with closed-form derivatives; orders above use central
/// differences of the fourth derivative.
pub const ANALYTIC_ORDER: usize = 4;
/// Default sampling window for the scaling-index estimate.
pub const DEFAULT_SCALING_RANGE: (f64, f64) = (1e-6, 1e6);
const JET: usize = ANALYTIC_ORDER + 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BernsteinError {
    #[error("phi is defined for x > 0, got x = {x}")]
    Domain { x: f64 },
    #[error("derivative order {n} exceeds n_max = {n_max}")]
    Order { n: usize, n_max: usize },
    #[error("scaling range needs 0 < k_min < k_max, got ({k_min}, {k_max})")]
    Range { k_min: f64, k_max: f64 },
    #[error("invalid Bernstein parameter: {0}")]
    InvalidParameter(String),
    #[error("empty sample grid")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// `x^γ`
    Power { gamma: f64 },
    /// `x^{γ₁} + x^{γ₂}`
    PowerSum { gamma1: f64, gamma2: f64 },
    /// `(x + m^{1/γ})^γ − m`
    Relativistic { gamma: f64, m: f64 },
    /// `x / log(1 + x^{β/2})`
    LogDamped { beta: f64 },
}

impl Family {
    fn validate(&self) -> Result<(), BernsteinError> {
        let bad = |msg: String| Err(BernsteinError::InvalidParameter(msg));
        let unit = |g: f64| g > 0.0 && g <= 1.0;
        match *self {
            Family::Power { gamma } if !unit(gamma) => bad(format!("power needs gamma in (0, 1], got {gamma}")),
            Family::PowerSum { gamma1, gamma2 } if !(unit(gamma1) && unit(gamma2)) => {
                bad(format!("power_sum needs exponents in (0, 1], got {gamma1}, {gamma2}"))
            }
            Family::Relativistic { gamma, m } if !(gamma > 0.0 && gamma < 1.0 && m > 0.0) => {
                bad(format!("relativistic needs gamma in (0, 1) and m > 0, got gamma = {gamma}, m = {m}"))
            }
            Family::LogDamped { beta } if !(beta > 0.0 && beta <= 2.0) => {
                bad(format!("log_damped needs beta in (0, 2], got {beta}"))
            }
            _ => Ok(()),
        }
    }

    /// Lower scaling index declared for the family.
    pub fn declared_delta(&self) -> f64 {
        match *self {
            Family::Power { gamma } => gamma,
            Family::PowerSum { gamma1, gamma2 } => gamma1.min(gamma2),
            Family::Relativistic { gamma, .. } => gamma,
            Family::LogDamped { beta } => (1.0 - 0.5 * beta).clamp(f64::MIN_POSITIVE, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinFunction {
    pub family: Family,
    /// Linear drift `a` added to the family: `φ(x) = a·x + φ_family(x)`.
    pub drift_a: f64,
    pub delta: f64,
    pub n_max: usize,
}

impl BernsteinFunction {
    pub fn new(family: Family) -> Result<Self, BernsteinError> {
        family.validate()?;
        Ok(Self { family, drift_a: 0.0, delta: family.declared_delta(), n_max: 6 })
    }

    pub fn power(gamma: f64) -> Result<Self, BernsteinError> {
        Self::new(Family::Power { gamma })
    }

    pub fn power_sum(gamma1: f64, gamma2: f64) -> Result<Self, BernsteinError> {
        Self::new(Family::PowerSum { gamma1, gamma2 })
    }

    pub fn relativistic(gamma: f64, m: f64) -> Result<Self, BernsteinError> {
        Self::new(Family::Relativistic { gamma, m })
    }

    pub fn log_damped(beta: f64) -> Result<Self, BernsteinError> {
        Self::new(Family::LogDamped { beta })
    }

    pub fn with_drift(mut self, a: f64) -> Result<Self, BernsteinError> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(BernsteinError::InvalidParameter(format!("drift must be nonnegative, got {a}")));
        }
        self.drift_a = a;
        Ok(self)
    }

    pub fn with_n_max(mut self, n_max: usize) -> Result<Self, BernsteinError> {
        if n_max < ANALYTIC_ORDER {
            return Err(BernsteinError::InvalidParameter(format!("n_max must be at least 4, got {n_max}")));
        }
        self.n_max = n_max;
        Ok(self)
    }

    /// Re-validates a deserialized value.
    pub fn validate(&self) -> Result<(), BernsteinError> {
        self.family.validate()?;
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(BernsteinError::InvalidParameter(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if !(self.drift_a >= 0.0 && self.drift_a.is_finite()) {
            return Err(BernsteinError::InvalidParameter(format!("drift must be nonnegative, got {}", self.drift_a)));
        }
        if self.n_max < ANALYTIC_ORDER {
            return Err(BernsteinError::InvalidParameter(format!("n_max must be at least 4, got {}", self.n_max)));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> Result<f64, BernsteinError> {
        check_domain(x)?;
        Ok(self.eval_unchecked(x))
    }

    /// `φ(x)` without the domain check; `x ≤ 0` maps to `φ(0⁺)`.
    pub fn eval_unchecked(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return match self.family {
                Family::LogDamped { beta } if beta == 2.0 => 1.0,
                _ => 0.0,
            };
        }
        self.drift_a * x + family_value(&self.family, x)
    }

    pub fn eval_derivative(&self, n: usize, x: f64) -> Result<f64, BernsteinError> {
        check_domain(x)?;
        if n > self.n_max {
            return Err(BernsteinError::Order { n, n_max: self.n_max });
        }
        if n <= ANALYTIC_ORDER {
            return Ok(self.jet(x)[n] * factorial(n));
        }
        // k-th central difference of the fourth derivative
        let k = n - ANALYTIC_ORDER;
        let h = self.fd_step(k, x);
        let fourth = |y: f64| self.jet(y)[ANALYTIC_ORDER] * factorial(ANALYTIC_ORDER);
        let mut acc = 0.0;
        let mut binom = 1.0;
        for i in 0..=k {
            let offset = (0.5 * k as f64 - i as f64) * h;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * fourth(x + offset);
            binom *= (k - i) as f64 / (i + 1) as f64;
        }
        Ok(acc / h.powi(k as i32))
    }

    /// Estimated absolute error of [`Self::eval_derivative`]; zero for the
    /// closed-form orders.
    pub fn derivative_tolerance(&self, n: usize, x: f64) -> f64 {
        if n <= ANALYTIC_ORDER {
            return 0.0;
        }
        let k = n - ANALYTIC_ORDER;
        let h = self.fd_step(k, x);
        let fourth = (self.jet(x)[ANALYTIC_ORDER] * factorial(ANALYTIC_ORDER)).abs();
        let rounding = 16.0 * f64::EPSILON * 2f64.powi(k as i32) * fourth / h.powi(k as i32);
        let truncation = 1e-3 * fourth / analytic_radius(&self.family, x).powi(k as i32);
        rounding + truncation
    }

    /// Difference step balancing rounding against `O(h²)` truncation on the
    /// scale of the nearest singularity.
    fn fd_step(&self, k: usize, x: f64) -> f64 {
        let radius = analytic_radius(&self.family, x);
        (0.5 * x).min(f64::EPSILON.powf(1.0 / (k as f64 + 2.0)) * radius)
    }

    /// Taylor coefficients `φ^{(k)}(x)/k!` for `k ≤ 4`.
    fn jet(&self, x: f64) -> [f64; JET] {
        let mut c = family_jet(&self.family, x).0;
        c[0] += self.drift_a * x;
        c[1] += self.drift_a;
        c
    }

    /// `max |xⁿ φ⁽ⁿ⁾(x)| / φ(x)` over the grid, checked against `cap`
    /// (default `n!`).
    pub fn verify_derivative_bound(
        &self,
        n: usize,
        x_grid: &[f64],
        cap: Option<f64>,
    ) -> Result<DerivativeBoundReport, BernsteinError> {
        if x_grid.is_empty() {
            return Err(BernsteinError::EmptyGrid);
        }
        if n > self.n_max {
            return Err(BernsteinError::Order { n, n_max: self.n_max });
        }
        let cap = cap.unwrap_or_else(|| factorial(n));
        let mut max_ratio: f64 = 0.0;
        for &x in x_grid {
            let ratio = (x.powi(n as i32) * self.eval_derivative(n, x)?).abs() / self.eval(x)?;
            max_ratio = if ratio.is_nan() { f64::NAN } else { max_ratio.max(ratio) };
        }
        let pass = max_ratio.is_finite() && max_ratio <= cap * (1.0 + 1e-12);
        Ok(DerivativeBoundReport { max_ratio, cap, pass })
    }

    /// Infimum over log-spaced pairs `k < K` of `log(φ(K)/φ(k))/log(K/k)`,
    /// together with the H1 constant `min φ(K)/φ(k)·(k/K)^δ` for the declared `δ`.
    pub fn scaling_index_estimate(&self, k_min: f64, k_max: f64, samples: usize) -> Result<ScalingEstimate, BernsteinError> {
        if !(k_min > 0.0 && k_min < k_max && k_max.is_finite()) {
            return Err(BernsteinError::Range { k_min, k_max });
        }
        if samples < 2 {
            return Err(BernsteinError::InvalidParameter(format!("need at least 2 samples, got {samples}")));
        }
        let (l0, l1) = (k_min.ln(), k_max.ln());
        let pts: Vec<(f64, f64)> = (0..samples)
            .map(|i| {
                let lk = l0 + (l1 - l0) * i as f64 / (samples - 1) as f64;
                (lk, self.eval_unchecked(lk.exp()).ln())
            })
            .collect();
        let mut delta_hat = f64::INFINITY;
        let mut c_hat = f64::INFINITY;
        for (i, &(lk, lphi)) in pts.iter().enumerate() {
            for &(lk2, lphi2) in &pts[i + 1..] {
                let gain = lphi2 - lphi;
                let span = lk2 - lk;
                delta_hat = delta_hat.min(gain / span);
                c_hat = c_hat.min((gain - self.delta * span).exp());
            }
        }
        Ok(ScalingEstimate { delta_hat, c_hat })
    }
}

/// One representative instance per family.
pub fn catalog() -> Vec<BernsteinFunction> {
    [
        Family::Power { gamma: 0.5 },
        Family::Power { gamma: 1.0 },
        Family::PowerSum { gamma1: 1.0, gamma2: 0.5 },
        Family::Relativistic { gamma: 0.5, m: 1.0 },
        Family::LogDamped { beta: 1.0 },
    ]
    .into_iter()
    .map(|f| BernsteinFunction::new(f).expect("catalog parameters are valid"))
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeBoundReport {
    pub max_ratio: f64,
    pub cap: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingEstimate {
    pub delta_hat: f64,
    pub c_hat: f64,
}

fn check_domain(x: f64) -> Result<(), BernsteinError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(BernsteinError::Domain { x })
    }
}

/// Distance from `x` to the nearest singularity of the family in the complex plane,
/// up to a constant.
fn analytic_radius(family: &Family, x: f64) -> f64 {
    match *family {
        Family::Relativistic { gamma, m } => x + m.powf(1.0 / gamma),
        _ => x,
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn family_value(family: &Family, x: f64) -> f64 {
    match *family {
        Family::Power { gamma } => x.powf(gamma),
        Family::PowerSum { gamma1, gamma2 } => x.powf(gamma1) + x.powf(gamma2),
        Family::Relativistic { gamma, m } => {
            // (c + x)^γ − c^γ with c = m^{1/γ}, written to avoid cancellation
            let c = m.powf(1.0 / gamma);
            m * (gamma * (x / c).ln_1p()).exp_m1()
        }
        Family::LogDamped { beta } => x / x.powf(0.5 * beta).ln_1p(),
    }
}

/// Truncated Taylor series in `h` about a base point.
#[derive(Debug, Clone, Copy)]
struct Jet([f64; JET]);

impl Jet {
    fn variable(x: f64) -> Self {
        let mut c = [0.0; JET];
        c[0] = x;
        c[1] = 1.0;
        Jet(c)
    }

    fn add(self, other: Jet) -> Jet {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0) {
            *a += b;
        }
        Jet(c)
    }

    fn mul(self, other: Jet) -> Jet {
        let mut c = [0.0; JET];
        for i in 0..JET {
            for j in 0..JET - i {
                c[i + j] += self.0[i] * other.0[j];
            }
        }
        Jet(c)
    }

    fn div(self, other: Jet) -> Jet {
        let mut q = [0.0; JET];
        for k in 0..JET {
            let mut acc = self.0[k];
            for j in 0..k {
                acc -= q[j] * other.0[k - j];
            }
            q[k] = acc / other.0[0];
        }
        Jet(q)
    }

    /// `f(self)` given `f^{(k)}(self₀)/k!` for `k ≤ 4`.
    fn compose(self, outer: [f64; JET]) -> Jet {
        let mut shift = self;
        shift.0[0] = 0.0;
        let mut power = Jet([1.0, 0.0, 0.0, 0.0, 0.0]);
        let mut out = [0.0; JET];
        for &coef in outer.iter() {
            for (o, p) in out.iter_mut().zip(power.0) {
                *o += coef * p;
            }
            power = power.mul(shift);
        }
        Jet(out)
    }

    /// `self^γ`.
    fn powf(self, gamma: f64) -> Jet {
        let y = self.0[0];
        let mut outer = [0.0; JET];
        let mut binom = 1.0;
        for (k, o) in outer.iter_mut().enumerate() {
            *o = binom * y.powf(gamma - k as f64);
            binom *= (gamma - k as f64) / (k + 1) as f64;
        }
        self.compose(outer)
    }

    /// `log(1 + self)`.
    fn ln_1p(self) -> Jet {
        let y = self.0[0];
        let mut outer = [0.0; JET];
        outer[0] = y.ln_1p();
        for (k, o) in outer.iter_mut().enumerate().skip(1) {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            *o = sign / (k as f64 * (1.0 + y).powi(k as i32));
        }
        self.compose(outer)
    }
}

fn family_jet(family: &Family, x: f64) -> Jet {
    let v = Jet::variable(x);
    let mut jet = match *family {
        Family::Power { gamma } => v.powf(gamma),
        Family::PowerSum { gamma1, gamma2 } => v.powf(gamma1).add(v.powf(gamma2)),
        Family::Relativistic { gamma, m } => {
            let c = m.powf(1.0 / gamma);
            let mut shifted = v;
            shifted.0[0] += c;
            shifted.powf(gamma)
        }
        Family::LogDamped { beta } => v.div(v.powf(0.5 * beta).ln_1p()),
    };
    jet.0[0] = family_value(family, x);
    jet
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(BernsteinFunction::power(1.0).unwrap().eval(4.0).unwrap(), 4.0);
        assert_eq!(BernsteinFunction::power(0.5).unwrap().eval(4.0).unwrap(), 2.0);
        let e1 = std::f64::consts::E - 1.0;
        let v = BernsteinFunction::log_damped(2.0).unwrap().eval(e1).unwrap();
        assert!((v - e1).abs() < 1e-14);
        let r = BernsteinFunction::relativistic(0.5, 2.0).unwrap();
        assert!((r.eval(3.0).unwrap() - ((3.0 + 4.0f64).sqrt() - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn domain_and_order_errors() {
        let phi = BernsteinFunction::power(0.5).unwrap();
        assert!(matches!(phi.eval(0.0), Err(BernsteinError::Domain { .. })));
        assert!(matches!(phi.eval_derivative(7, 1.0), Err(BernsteinError::Order { n: 7, n_max: 6 })));
        assert!(BernsteinFunction::power(1.5).is_err());
        assert!(BernsteinFunction::relativistic(1.0, 1.0).is_err());
    }

    #[test]
    fn analytic_derivatives() {
        let p = BernsteinFunction::power(1.0).unwrap();
        assert_eq!(p.eval_derivative(1, 7.0).unwrap(), 1.0);
        assert_eq!(p.eval_derivative(2, 7.0).unwrap(), 0.0);
        let s = BernsteinFunction::power(0.5).unwrap();
        assert!((s.eval_derivative(1, 4.0).unwrap() - 0.25).abs() < 1e-15);
        let ps = BernsteinFunction::power_sum(1.0, 0.5).unwrap();
        assert!((ps.eval_derivative(2, 1.0).unwrap() + 0.25).abs() < 1e-15);
        // x^{1/2}: fourth derivative is -(15/16) x^{-7/2}
        assert!((s.eval_derivative(4, 1.0).unwrap() + 15.0 / 16.0).abs() < 1e-13);
    }

    #[test]
    fn finite_difference_orders_track_analytic() {
        let s = BernsteinFunction::power(0.5).unwrap();
        // (1/2)(-1/2)(-3/2)(-5/2)(-7/2) and one more factor (-9/2)
        let d5 = 0.5 * -0.5 * -1.5 * -2.5 * -3.5 * 2.0f64.powf(0.5 - 5.0);
        let d6 = d5 * -4.5 / 2.0;
        assert!((s.eval_derivative(5, 2.0).unwrap() / d5 - 1.0).abs() < 1e-6);
        assert!((s.eval_derivative(6, 2.0).unwrap() / d6 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn log_damped_jet_matches_differences() {
        let phi = BernsteinFunction::log_damped(1.0).unwrap();
        let x = 2.5;
        let h = 1e-4;
        let fd = (phi.eval(x + h).unwrap() - phi.eval(x - h).unwrap()) / (2.0 * h);
        assert!((phi.eval_derivative(1, x).unwrap() - fd).abs() < 1e-8);
        let fd2 = (phi.eval_derivative(1, x + h).unwrap() - phi.eval_derivative(1, x - h).unwrap()) / (2.0 * h);
        assert!((phi.eval_derivative(2, x).unwrap() - fd2).abs() < 1e-8);
    }

    #[test]
    fn derivative_bound_examples() {
        let grid: Vec<f64> = (-30..=30).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
        let r = BernsteinFunction::power(0.5).unwrap().verify_derivative_bound(1, &grid, None).unwrap();
        assert!((r.max_ratio - 0.5).abs() < 1e-15 && r.pass);
        let r = BernsteinFunction::power(1.0).unwrap().verify_derivative_bound(2, &grid, None).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        let r = BernsteinFunction::log_damped(1.0).unwrap().verify_derivative_bound(1, &grid, None).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn scaling_index_examples() {
        let e = BernsteinFunction::power(0.7).unwrap().scaling_index_estimate(1e-3, 1e3, 40).unwrap();
        assert!((e.delta_hat - 0.7).abs() < 1e-12);
        let e = BernsteinFunction::power(1.0).unwrap().scaling_index_estimate(1e-3, 1e3, 40).unwrap();
        assert!((e.delta_hat - 1.0).abs() < 1e-12);
        let e = BernsteinFunction::power_sum(1.0, 0.5).unwrap().scaling_index_estimate(1e-8, 1e8, 80).unwrap();
        assert!((e.delta_hat - 0.5).abs() < 1e-3, "{e:?}");
        assert!(matches!(
            BernsteinFunction::power(0.5).unwrap().scaling_index_estimate(2.0, 1.0, 10),
            Err(BernsteinError::Range { .. })
        ));
    }
}
