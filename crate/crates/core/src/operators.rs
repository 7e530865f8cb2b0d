//! Solution operators `S_{α,φ}(t)` and `t^{α−1}P_{α,φ}(t)` as radial Fourier
//! multipliers, admissible exponent triples, multiplier-boundedness probes and
//! decay-rate fits.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::BernsteinFunction;
use crate::grid::{self, GridError, SpectralField, SymbolTable, TorusGrid};
use crate::mlf::{self, MlQuery, MlfError};
use crate::spaces::{self, DyadicPartition, SpaceSpec, SpacesError};
use crate::special::rgamma;

/// Norms below this are treated as numerically zero by the decay fit.
pub const DEGENERATE_NORM: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("invalid propagator query: {0}")]
    InvalidQuery(String),
    #[error("not admissible: {0}")]
    Admissible(String),
    #[error("exponent constraint violated: {0}")]
    Constraint(String),
    #[error("Mittag-Leffler evaluation failed at |xi| = {xi}: {source}")]
    Symbol { xi: f64, source: MlfError },
    #[error("degenerate decay fit: {0}")]
    DegenerateFit(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spaces(#[from] SpacesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    S,
    P,
}

impl OperatorKind {
    fn beta(self, alpha: f64) -> f64 {
        match self {
            OperatorKind::S => 1.0,
            OperatorKind::P => alpha,
        }
    }

    /// Largest `σ` admitted by the boundedness statement for this kernel.
    pub fn sigma_max(self) -> f64 {
        match self {
            OperatorKind::S => 2.0,
            OperatorKind::P => 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorQuery {
    pub alpha: f64,
    pub phi: BernsteinFunction,
    pub t: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub a: f64,
}

impl PropagatorQuery {
    pub fn new(alpha: f64, phi: BernsteinFunction, t: f64) -> Self {
        Self { alpha, phi, t, sigma: 0.0, a: 0.0 }
    }

    pub fn with_weight(mut self, sigma: f64, a: f64) -> Self {
        self.sigma = sigma;
        self.a = a;
        self
    }

    pub fn at(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    /// `α = 1` is admitted as a boundary check; the kernels are then exponentials.
    pub fn validate(&self, kind: OperatorKind) -> Result<(), OperatorError> {
        let bad = |m: String| Err(OperatorError::InvalidQuery(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha = {} is outside (0, 1]", self.alpha));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return bad(format!("t = {} must be finite and nonnegative", self.t));
        }
        if !(self.sigma >= 0.0 && self.sigma <= kind.sigma_max()) {
            return bad(format!("sigma = {} is outside [0, {}] for {kind:?}", self.sigma, kind.sigma_max()));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return bad(format!("a = {} must be nonnegative", self.a));
        }
        self.phi.validate().map_err(|e| OperatorError::InvalidQuery(e.to_string()))
    }
}

/// `E_{α,1}(−i t^α λ)` for `S`, `E_{α,α}(−i t^α λ)` for `P` (unweighted).
pub fn kernel(kind: OperatorKind, alpha: f64, t: f64, lambda: f64) -> Result<Complex64, MlfError> {
    let beta = kind.beta(alpha);
    let y = t.powf(alpha) * lambda;
    if y == 0.0 {
        return Ok(Complex64::new(rgamma(beta), 0.0));
    }
    if alpha == 1.0 {
        return Ok(Complex64::from_polar(1.0, -y));
    }
    mlf::ml_eval(&MlQuery::new(alpha, beta, Complex64::new(0.0, -y))?)
}

/// Symbol table of `S(t)` or of the weighted `t^{α−1}P(t)`.
pub fn propagator_table(grid: &TorusGrid, kind: OperatorKind, q: &PropagatorQuery) -> Result<SymbolTable, OperatorError> {
    q.validate(kind)?;
    let weight = match kind {
        OperatorKind::S => 1.0,
        OperatorKind::P => {
            if !(q.t > 0.0) {
                return Err(OperatorError::InvalidQuery(format!("t^(alpha-1) P(t) needs t > 0, got t = {}", q.t)));
            }
            q.t.powf(q.alpha - 1.0)
        }
    };
    let table = SymbolTable::radial(grid, |x2| {
        let lambda = q.phi.eval_unchecked(x2);
        kernel(kind, q.alpha, q.t, lambda)
            .map(|v| v * weight)
            .map_err(|source| OperatorError::Symbol { xi: x2.sqrt(), source })
    })?;
    table.check_finite()?;
    Ok(table)
}

#[allow(non_snake_case)]
pub fn apply_S(f: &SpectralField, q: &PropagatorQuery) -> Result<SpectralField, OperatorError> {
    q.validate(OperatorKind::S)?;
    if q.t == 0.0 {
        return Ok(f.clone());
    }
    Ok(propagator_table(f.grid(), OperatorKind::S, q)?.apply(f)?)
}

#[allow(non_snake_case)]
pub fn apply_P_weighted(f: &SpectralField, q: &PropagatorQuery) -> Result<SpectralField, OperatorError> {
    Ok(propagator_table(f.grid(), OperatorKind::P, q)?.apply(f)?)
}

/// Lebesgue exponents linked by `1/q = (1/(2δ))(d/p − d/r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibleTriple {
    pub p: f64,
    pub r: f64,
    #[serde(with = "spaces::exponent")]
    pub q: f64,
    pub d: usize,
    pub delta: f64,
}

impl AdmissibleTriple {
    pub fn new(p: f64, r: f64, d: usize, delta: f64) -> Result<Self, OperatorError> {
        let q = admissible_q(p, r, d, delta)?;
        Ok(Self { p, r, q, d, delta })
    }

    /// Re-checks a deserialized triple, including the stored `q`.
    pub fn validate(&self) -> Result<(), OperatorError> {
        let q = admissible_q(self.p, self.r, self.d, self.delta)?;
        let consistent = if q.is_infinite() { self.q.is_infinite() } else { (q - self.q).abs() <= 1e-9 * q };
        if !consistent {
            return Err(OperatorError::Admissible(format!("stored q = {} but (p, r) give q = {q}", self.q)));
        }
        Ok(())
    }
}

/// Upper bound on `r` for given `(p, d)` and smoothing gap `gap` (`2δ` for the
/// plain estimate, `(2 − σ)δ` with a Bessel weight).
pub fn critical_r(p: f64, d: usize, gap: f64) -> f64 {
    let d = d as f64;
    if d > gap {
        d * p / (d - gap)
    } else {
        f64::INFINITY
    }
}

pub fn admissible_q(p: f64, r: f64, d: usize, delta: f64) -> Result<f64, OperatorError> {
    let bad = |m: String| Err(OperatorError::Admissible(m));
    if d == 0 {
        return bad("dimension must be positive".into());
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return bad(format!("delta = {delta} is outside (0, 1]"));
    }
    if !(p > 1.0 && p.is_finite()) {
        return bad(format!("need 1 < p, got p = {p}"));
    }
    if !(r >= p) {
        return bad(format!("need p <= r, got p = {p}, r = {r}"));
    }
    let bound = critical_r(p, d, 2.0 * delta);
    if !(r < bound) {
        return bad(format!("need r < dp/(d - 2 delta) = {bound}, got r = {r}"));
    }
    if r == p {
        return Ok(f64::INFINITY);
    }
    let d = d as f64;
    Ok(2.0 * delta / (d / p - d / r))
}

/// Scalar `(a + t^α λ)^{σ/2}·E(−i t^α λ)`; the `P` variant carries no `t^{α−1}`.
pub fn weighted_kernel(kind: OperatorKind, q: &PropagatorQuery, lambda: f64) -> Result<Complex64, MlfError> {
    let weight = (q.a + q.t.powf(q.alpha) * lambda).powf(0.5 * q.sigma);
    Ok(kernel(kind, q.alpha, q.t, lambda)? * weight)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRow {
    pub t: f64,
    pub sup_ratio: f64,
    pub min_ratio: f64,
    pub symbol_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierProbe {
    pub sup_ratio: f64,
    /// `max_t sup / min_t sup`.
    pub variation: f64,
    pub per_t: Vec<ProbeRow>,
}

/// Ratios `‖(a + t^αφ(−Δ))^{σ/2}K(t)g‖_p / ‖g‖_p` over a fixed family.
pub fn multiplier_bound_probe(
    kind: OperatorKind,
    q: &PropagatorQuery,
    p: f64,
    t_set: &[f64],
    family: &[SpectralField],
) -> Result<MultiplierProbe, OperatorError> {
    q.validate(kind)?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(OperatorError::InvalidQuery(format!("multiplier probe needs 1 < p < inf, got {p}")));
    }
    let Some(first) = family.first() else {
        return Err(OperatorError::InvalidQuery("empty test family".into()));
    };
    if t_set.is_empty() {
        return Err(OperatorError::InvalidQuery("empty t set".into()));
    }
    let grid = *first.grid();
    let denominators = family.par_iter().map(|g| grid::lp_norm(g, p)).collect::<Result<Vec<_>, _>>()?;
    let mut per_t = Vec::with_capacity(t_set.len());
    for &t in t_set {
        let qt = q.at(t);
        qt.validate(kind)?;
        let table = SymbolTable::radial(&grid, |x2| {
            weighted_kernel(kind, &qt, q.phi.eval_unchecked(x2)).map_err(|source| OperatorError::Symbol { xi: x2.sqrt(), source })
        })?;
        table.check_finite()?;
        let ratios = family
            .par_iter()
            .zip(&denominators)
            .map(|(g, &den)| Ok(ratio(grid::lp_norm(&table.apply(g)?, p)?, den)))
            .collect::<Result<Vec<f64>, OperatorError>>()?;
        per_t.push(ProbeRow {
            t,
            sup_ratio: ratios.iter().copied().fold(0.0, f64::max),
            min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            symbol_max: table.max_norm(),
        });
    }
    let sup_ratio = per_t.iter().map(|r| r.sup_ratio).fold(0.0, f64::max);
    let floor = per_t.iter().map(|r| r.sup_ratio).fold(f64::INFINITY, f64::min);
    Ok(MultiplierProbe { sup_ratio, variation: sup_ratio / floor, per_t })
}

/// Seeded probe family: complex Gaussian coefficients on random radial bands.
/// Members whose lower edge falls below the first nonzero frequency also
/// carry the zero mode. Each member has unit `L²` norm.
pub fn probe_family(grid: &TorusGrid, seed: u64, count: usize) -> Result<Vec<SpectralField>, OperatorError> {
    grid.validate()?;
    let lo_min = grid.xi_unit().log2() - 1.0;
    let top = grid.xi_max().log2();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let occupied = |lo: f64, hi: f64| {
        let lo = if lo < grid.xi_unit().log2() { 0.0 } else { 2f64.powf(lo) };
        let hi = 2f64.powf(hi);
        (0..grid.len()).any(|i| {
            let xi = grid.xi_sq(i).sqrt();
            xi >= lo && xi <= hi
        })
    };
    let bands: Vec<(f64, f64, u64)> = (0..count)
        .map(|_| loop {
            let lo = rng.random_range(lo_min..top - 0.5);
            let width = rng.random_range(0.5..3.0);
            let hi = (lo + width).min(top);
            if occupied(lo, hi) {
                break (lo, hi, rng.random());
            }
        })
        .collect();
    bands
        .par_iter()
        .map(|&(lo, hi, member_seed)| {
            let (lo, hi) = (if lo < grid.xi_unit().log2() { 0.0 } else { 2f64.powf(lo) }, 2f64.powf(hi));
            let mut rng = ChaCha8Rng::seed_from_u64(member_seed);
            let coeffs: Vec<Complex64> = (0..grid.len())
                .map(|i| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    let xi = grid.xi_sq(i).sqrt();
                    if xi >= lo && xi <= hi {
                        Complex64::new(re, im)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            let energy: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.cell_volume();
            let s = 1.0 / energy.sqrt();
            Ok(SpectralField::from_coefficients(*grid, coeffs.into_iter().map(|c| c * s).collect())?)
        })
        .collect()
}

/// Target norm of a decay experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "norm", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecayNorm {
    /// `‖·‖_{L^r}`
    Lp { r: f64 },
    /// `‖·‖_{B^{b,φ}_{r,κ}}`, source measured in `B^{a,φ}_{p,κ}`.
    Besov {
        b: f64,
        r: f64,
        #[serde(with = "spaces::exponent")]
        kappa: f64,
        #[serde(default)]
        homogeneous: bool,
    },
    /// `‖(I + φ(−Δ))^{σ/2}·‖_{L^r}`
    Sobolev { sigma: f64, r: f64 },
}

impl DecayNorm {
    pub fn r(&self) -> f64 {
        match *self {
            DecayNorm::Lp { r } | DecayNorm::Besov { r, .. } | DecayNorm::Sobolev { r, .. } => r,
        }
    }
}

/// Exponents of the source space: `L^p`, or `B^{a,φ}_{p,κ}` for Besov targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySource {
    pub p: f64,
    #[serde(default)]
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    pub kind: OperatorKind,
    pub alpha: f64,
    pub phi: BernsteinFunction,
    pub norm: DecayNorm,
    pub source: DecaySource,
    /// Width of the fitting window in decades, ending at the largest `t`.
    #[serde(default = "default_window")]
    pub window_decades: f64,
}

fn default_window() -> f64 {
    1.0
}

impl DecaySpec {
    pub fn new(kind: OperatorKind, alpha: f64, phi: BernsteinFunction, norm: DecayNorm, source: DecaySource) -> Self {
        Self { kind, alpha, phi, norm, source, window_decades: 1.0 }
    }

    /// Smoothing gap `b − a` carried by the target norm.
    fn gap(&self) -> f64 {
        match self.norm {
            DecayNorm::Lp { .. } => 0.0,
            DecayNorm::Besov { b, .. } => b - self.source.a,
            DecayNorm::Sobolev { sigma, .. } => sigma,
        }
    }

    /// Checks the hypotheses of the estimate the experiment instantiates.
    pub fn validate(&self, d: usize) -> Result<(), OperatorError> {
        let bad = |m: String| Err(OperatorError::Constraint(m));
        PropagatorQuery::new(self.alpha, self.phi, 1.0).validate(self.kind)?;
        let (p, r, delta) = (self.source.p, self.norm.r(), self.phi.delta);
        if !(p > 1.0 && r >= p && r.is_finite()) {
            return bad(format!("need 1 < p <= r < inf, got p = {p}, r = {r}"));
        }
        if !(self.window_decades > 0.0) {
            return bad(format!("window must be positive, got {} decades", self.window_decades));
        }
        match self.norm {
            DecayNorm::Lp { .. } => {
                let bound = critical_r(p, d, 2.0 * delta);
                if !(r < bound) {
                    return bad(format!("need r < dp/(d - 2 delta) = {bound}, got r = {r}"));
                }
            }
            DecayNorm::Sobolev { sigma, .. } => {
                if !(0.0..=2.0).contains(&sigma) {
                    return bad(format!("need sigma in [0, 2], got {sigma}"));
                }
                let bound = critical_r(p, d, (2.0 - sigma) * delta);
                if !(r < bound) {
                    return bad(format!("need r < dp/(d - (2 - sigma) delta) = {bound}, got r = {r}"));
                }
            }
            DecayNorm::Besov { b, kappa, .. } => {
                if !(b >= self.source.a) {
                    return bad(format!("need b >= a, got b = {b}, a = {}", self.source.a));
                }
                if !(kappa >= 1.0) {
                    return bad(format!("need kappa in [1, inf], got {kappa}"));
                }
                let limit = match self.kind {
                    OperatorKind::S => 1.0,
                    OperatorKind::P => 2.0,
                };
                let lhs = self.exponent(d);
                if !(lhs < limit) {
                    return bad(format!("need ((b - a) delta + d/p - d/r)/(2 delta) < {limit}, got {lhs}"));
                }
            }
        }
        Ok(())
    }

    /// `(1/(2δ))((b − a)δ + d/p − d/r)`
    fn exponent(&self, d: usize) -> f64 {
        let d = d as f64;
        let delta = self.phi.delta;
        (self.gap() * delta + d / self.source.p - d / self.norm.r()) / (2.0 * delta)
    }

    pub fn slope_theory(&self, d: usize) -> f64 {
        let base = -self.alpha * self.exponent(d);
        match self.kind {
            OperatorKind::S => base,
            OperatorKind::P => base + self.alpha - 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope_hat: f64,
    pub slope_theory: f64,
    /// `|slope_hat − slope_theory| / |slope_theory|`, or the absolute error when the theory slope is 0.
    pub rel_err: f64,
    pub window: (f64, f64),
    pub samples: Vec<(f64, f64)>,
}

impl DecayFit {
    pub fn within(&self, rel_tol: f64, abs_tol: f64) -> bool {
        if self.slope_theory == 0.0 {
            (self.slope_hat - self.slope_theory).abs() <= abs_tol
        } else {
            self.rel_err <= rel_tol
        }
    }
}

/// Norm of the propagated data at every `t` plus a least-squares slope of
/// `log norm` against `log t` on the top `window_decades` of the grid.
pub fn decay_fit(spec: &DecaySpec, data: &SpectralField, t_grid: &[f64]) -> Result<DecayFit, OperatorError> {
    let grid = *data.grid();
    spec.validate(grid.d)?;
    if t_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(OperatorError::InvalidQuery("decay t grid must be positive".into()));
    }
    let t_top = t_grid.iter().copied().fold(0.0, f64::max);
    let t_low = t_top * 10f64.powf(-spec.window_decades);
    let partition = match spec.norm {
        DecayNorm::Besov { .. } => Some(DyadicPartition::new(&grid)?),
        _ => None,
    };
    let samples = t_grid
        .par_iter()
        .map(|&t| {
            let q = PropagatorQuery::new(spec.alpha, spec.phi, t);
            let field = propagator_table(&grid, spec.kind, &q)?.apply(data)?;
            let norm = match spec.norm {
                DecayNorm::Lp { r } => grid::lp_norm(&field, r)?,
                DecayNorm::Sobolev { sigma, r } => spaces::sobolev_phi_norm(&field, sigma, r, &spec.phi)?,
                DecayNorm::Besov { b, r, kappa, homogeneous } => {
                    let target = SpaceSpec::besov(b, r, kappa, homogeneous, spec.phi)?;
                    spaces::besov_norm(&field, &target, partition.as_ref().expect("partition built for Besov"))?
                }
            };
            Ok((t, norm))
        })
        .collect::<Result<Vec<_>, OperatorError>>()?;
    let window: Vec<(f64, f64)> = samples.iter().copied().filter(|&(t, _)| t >= t_low * (1.0 - 1e-12)).collect();
    if window.len() < 2 {
        return Err(OperatorError::DegenerateFit(format!("fewer than two samples in [{t_low}, {t_top}]")));
    }
    if let Some(&(t, norm)) = window.iter().find(|&&(_, n)| !(n >= DEGENERATE_NORM)) {
        return Err(OperatorError::DegenerateFit(format!("norm {norm:e} at t = {t} is below {DEGENERATE_NORM:e}")));
    }
    let xs: Vec<f64> = window.iter().map(|&(t, _)| t.ln()).collect();
    let ys: Vec<f64> = window.iter().map(|&(_, n)| n.ln()).collect();
    let slope_hat = least_squares_slope(&xs, &ys);
    let slope_theory = spec.slope_theory(grid.d);
    let err = (slope_hat - slope_theory).abs();
    let rel_err = if slope_theory == 0.0 { err } else { err / slope_theory.abs() };
    Ok(DecayFit { slope_hat, slope_theory, rel_err, window: (t_low, t_top), samples })
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `n` points spaced evenly in `log t` on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        0.0
    } else {
        num / den
    }
}
