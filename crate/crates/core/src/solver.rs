//! Picard iteration for the mild formulation
//! `w(t) = S(t)w₀ + (1/i)∫₀ᵗ (t−τ)^{α−1} P(t−τ) g(w(τ)) dτ`.
//!
//! The Duhamel term is integrated by product integration: `g(w(τ))` is
//! replaced by its piecewise-linear interpolant on the mesh and each mode's
//! kernel `u^{α−1}E_{α,α}(−iλu^α)` is integrated exactly against it through the
//! antiderivatives
//!
//! * `K₀(u) = u^α E_{α,α+1}(−iλu^α)  = ∫₀ᵘ v^{α−1}E_{α,α}(−iλv^α) dv`,
//! * `K₁(u) = u^{α+1}E_{α,α+2}(−iλu^α) = ∫₀ᵘ K₀(v) dv`.
//!
//! For `λ = 0` these are the moments of `(t−τ)^{α−1}/Γ(α)`.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::BernsteinFunction;
use crate::grid::{self, GridError, RadialClasses, SpectralField, SymbolTable, TorusGrid};
use crate::mlf::{self, MlQuery, MlfError};
use crate::operators::{self, AdmissibleTriple, OperatorError, OperatorKind, PropagatorQuery};
use crate::spaces::{self, DyadicPartition, SpaceSpec, SpacesError, RELATION_TOL};
use crate::special::rgamma;

pub const DEFAULT_TOL_PICARD: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 60;
/// Iterate distances beyond this multiple of `‖w⁰‖` count as divergence.
const DIVERGENCE_GROWTH: f64 = 1e8;
/// Consecutive expanding steps that count as divergence.
const EXPANDING_STEPS: usize = 3;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("invalid Duhamel history: {0}")]
    History(String),
    #[error("run did not converge ({outcome:?} after {iterations} iterations)")]
    NotConverged { outcome: Outcome, iterations: usize },
    #[error("Mittag-Leffler evaluation failed at |xi| = {xi}: {source}")]
    Symbol { xi: f64, source: MlfError },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spaces(#[from] SpacesError),
}

/// Graded mesh `t_m = T (m/M)^γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeMesh {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub steps: usize,
    /// Defaults to `2/α`.
    #[serde(default)]
    pub grading: Option<f64>,
}

impl TimeMesh {
    pub fn new(horizon: f64, steps: usize) -> Self {
        Self { horizon, steps, grading: None }
    }

    pub fn with_grading(mut self, grading: f64) -> Self {
        self.grading = Some(grading);
        self
    }

    pub fn grading_for(&self, alpha: f64) -> f64 {
        self.grading.unwrap_or(2.0 / alpha)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon T = {} must be positive", self.horizon));
        }
        if self.steps == 0 {
            return bad("mesh needs at least one step".into());
        }
        if let Some(g) = self.grading {
            if !(g >= 1.0 && g.is_finite()) {
                return bad(format!("grading exponent must be at least 1, got {g}"));
            }
        }
        Ok(())
    }

    pub fn nodes(&self, alpha: f64) -> Result<Vec<f64>, SolverError> {
        self.validate()?;
        let g = self.grading_for(alpha);
        let m = self.steps as f64;
        Ok((0..=self.steps).map(|k| self.horizon * (k as f64 / m).powf(g)).collect())
    }
}

/// `g(w) = λ_g |w|^κ w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nonlinearity {
    pub kappa: f64,
    pub coeff: Complex64,
}

impl Nonlinearity {
    pub fn new(kappa: f64, coeff: Complex64) -> Self {
        Self { kappa, coeff }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.coeff.re.is_finite() && self.coeff.im.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("coefficient {} is not finite", self.coeff)));
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        self.coeff == Complex64::new(0.0, 0.0)
    }

    pub fn eval(&self, u: Complex64) -> Complex64 {
        if u == Complex64::new(0.0, 0.0) {
            return u;
        }
        self.coeff * u * u.norm().powf(self.kappa)
    }

    /// `|g(u) − g(w)| / ((|u|^κ + |w|^κ)|u − w|)`, 0 when `u = w`.
    pub fn h2_ratio(&self, u: Complex64, w: Complex64) -> f64 {
        let den = (u.norm().powf(self.kappa) + w.norm().powf(self.kappa)) * (u - w).norm();
        if den == 0.0 {
            return 0.0;
        }
        (self.eval(u) - self.eval(w)).norm() / den
    }
}

/// Sharp two-point constant of `|w|^κ w`: `max(1, (κ+1)/2)`.
pub fn h2_constant(kappa: f64) -> f64 {
    1f64.max(0.5 * (kappa + 1.0))
}

/// Pointwise `g(f)` followed by 2/3-rule dealiasing.
pub fn g_apply(f: &SpectralField, nl: &Nonlinearity) -> Result<SpectralField, SolverError> {
    let grid = *f.grid();
    let values: Vec<Complex64> = f.values().par_iter().map(|&u| nl.eval(u)).collect();
    let mut coeffs = SpectralField::from_values(grid, values)?.coefficients().to_vec();
    grid::dealias(&grid, &mut coeffs);
    Ok(SpectralField::from_coefficients(grid, coeffs)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub alpha: f64,
    pub phi: BernsteinFunction,
    pub triple: AdmissibleTriple,
    pub p0: f64,
    pub gamma0: f64,
    #[serde(default = "default_tol")]
    pub tol_picard: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub mesh: TimeMesh,
    pub nonlinearity: Nonlinearity,
}

fn default_tol() -> f64 {
    DEFAULT_TOL_PICARD
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

/// `γ₀ = (1/δ)(d/p₀ − d/p)`.
pub fn gamma0(d: usize, delta: f64, p: f64, p0: f64) -> f64 {
    (d as f64 / p0 - d as f64 / p) / delta
}

impl SolveConfig {
    pub fn new(
        alpha: f64,
        phi: BernsteinFunction,
        triple: AdmissibleTriple,
        p0: f64,
        mesh: TimeMesh,
        nonlinearity: Nonlinearity,
    ) -> Result<Self, SolverError> {
        let cfg = Self {
            alpha,
            phi,
            triple,
            p0,
            gamma0: gamma0(triple.d, triple.delta, triple.p, p0),
            tol_picard: DEFAULT_TOL_PICARD,
            max_iter: DEFAULT_MAX_ITER,
            mesh,
            nonlinearity,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_tolerance(mut self, tol_picard: f64, max_iter: usize) -> Self {
        self.tol_picard = tol_picard;
        self.max_iter = max_iter;
        self
    }

    pub fn with_mesh(mut self, mesh: TimeMesh) -> Self {
        self.mesh = mesh;
        self
    }

    pub fn with_coeff(mut self, coeff: Complex64) -> Self {
        self.nonlinearity.coeff = coeff;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} is outside (0, 1)", self.alpha));
        }
        self.phi.validate().map_err(|e| SolverError::InvalidConfig(e.to_string()))?;
        self.triple.validate()?;
        if (self.triple.delta - self.phi.delta).abs() > RELATION_TOL {
            return bad(format!("triple uses delta = {} but phi declares {}", self.triple.delta, self.phi.delta));
        }
        let (p, r) = (self.triple.p, self.triple.r);
        if !(p <= self.p0 && self.p0 <= r) {
            return bad(format!("need p <= p0 <= r, got p = {p}, p0 = {}, r = {r}", self.p0));
        }
        let expected = gamma0(self.triple.d, self.triple.delta, p, self.p0);
        if (expected - self.gamma0).abs() > RELATION_TOL {
            return bad(format!("gamma0 = {} but (1/delta)(d/p0 - d/p) = {expected}", self.gamma0));
        }
        if !(self.tol_picard > 0.0 && self.tol_picard < 1.0) {
            return bad(format!("tol_picard = {} must lie in (0, 1)", self.tol_picard));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        self.mesh.validate()?;
        self.nonlinearity.validate()
    }

    /// The homogeneous `Ḃ^{γ₀,φ}_{p₀,∞}` component of the `X^α` norm.
    pub fn besov_spec(&self) -> Result<SpaceSpec, SolverError> {
        Ok(SpaceSpec::besov(self.gamma0, self.p0, f64::INFINITY, true, self.phi)?)
    }
}

fn fail(condition: &str, detail: String) -> Result<(), SolverError> {
    Err(SolverError::Hypothesis(format!("{condition}: {detail}")))
}

/// The three exponent conditions shared by the local and global existence statements.
fn check_existence_common(triple: &AdmissibleTriple, p0: f64, kappa: f64) -> Result<(), SolverError> {
    let (p, r, d, delta) = (triple.p, triple.r, triple.d as f64, triple.delta);
    if !((1.0 + kappa).max(p) < r && r < p * (1.0 + kappa)) {
        return fail("(1+kappa) v p < r < p(1+kappa)", format!("p = {p}, r = {r}, kappa = {kappa}"));
    }
    if !(p < p0 && p0 <= r) {
        return fail("p < p0 <= r", format!("p = {p}, p0 = {p0}, r = {r}"));
    }
    let (lo, mid, hi) = (d / p - 2.0 * delta / (1.0 + kappa), d / r, 2.0 * delta / kappa);
    if !(lo < mid && mid < hi) {
        return fail("d/p - 2delta/(1+kappa) < d/r < 2delta/kappa", format!("{lo} < {mid} < {hi}"));
    }
    Ok(())
}

/// Hypotheses of local existence in `X^α_T`.
pub fn check_local_existence(triple: &AdmissibleTriple, p0: f64, kappa: f64) -> Result<(), SolverError> {
    triple.validate()?;
    let floor = 1f64.max(triple.d as f64 * kappa / (2.0 * triple.delta));
    if !(floor < triple.p) {
        return fail("1 v d kappa/(2 delta) < p", format!("{floor} < {}", triple.p));
    }
    check_existence_common(triple, p0, kappa)
}

/// Hypotheses of global existence in `X^α`: as local existence with `p = dκ/(2δ)`.
pub fn check_global_existence(triple: &AdmissibleTriple, p0: f64, kappa: f64) -> Result<(), SolverError> {
    triple.validate()?;
    let critical = triple.d as f64 * kappa / (2.0 * triple.delta);
    if !(critical > 1.0) {
        return fail("1 < d kappa/(2 delta)", format!("d kappa/(2 delta) = {critical}"));
    }
    if (critical - triple.p).abs() > RELATION_TOL {
        return fail("d kappa/(2 delta) = p", format!("{critical} != {}", triple.p));
    }
    check_existence_common(triple, p0, kappa)
}

/// The `κ` that makes `p = dκ/(2δ)`.
pub fn global_kappa(d: usize, delta: f64, p: f64) -> f64 {
    2.0 * delta * p / d as f64
}

/// Hypotheses of local well-posedness in `C([0,T]; H^{s,φ}_p) ∩ C_{α,q}((0,T]; H^{s,φ}_r)`.
pub fn check_sobolev_y_window(triple: &AdmissibleTriple, kappa: f64, s: f64) -> Result<(), SolverError> {
    triple.validate()?;
    let (p, d, delta) = (triple.p, triple.d as f64, triple.delta);
    if !(p > d / (2.0 * delta)) {
        return fail("p > d/(2 delta)", format!("p = {p}, d/(2 delta) = {}", d / (2.0 * delta)));
    }
    let lhs = d * (2.0 * kappa + 1.0) / (delta * p * (kappa + 1.0));
    if !(lhs < 2.0) {
        return fail("d(2kappa+1)/(delta p (kappa+1)) < 2", format!("lhs = {lhs}"));
    }
    let lo = 0f64.max((kappa + 1.0) * d / (kappa * delta * p) - 2.0 / kappa);
    let hi = d * kappa / (delta * p * (kappa + 1.0));
    if !(lo < s && s <= hi + RELATION_TOL) {
        return fail("max{0, (kappa+1)d/(kappa delta p) - 2/kappa} < s <= d kappa/(delta p (kappa+1))", format!("{lo} < {s} <= {hi}"));
    }
    Ok(())
}

/// Hypotheses of local well-posedness in `C([0,T]; H^{s,φ}_p)`.
pub fn check_sobolev_h_window(d: usize, delta: f64, p: f64, kappa: f64, s: f64) -> Result<(), SolverError> {
    let d = d as f64;
    if !(p > 1.0 && p.is_finite()) {
        return fail("1 < p < inf", format!("p = {p}"));
    }
    let lo = d * kappa / (delta * p * (kappa + 1.0));
    let hi = (d / (p * delta)).min(2.0);
    if !(lo - RELATION_TOL <= s && s < hi) {
        return fail("d kappa/(delta p (kappa+1)) <= s < min{d/(p delta), 2}", format!("{lo} <= {s} < {hi}"));
    }
    Ok(())
}

/// `T^{α − ακd/(2δp)} R^κ`, the quantity the contraction argument needs small.
pub fn contraction_surrogate(cfg: &SolveConfig, data_norm: f64) -> f64 {
    let t = &cfg.triple;
    let kappa = cfg.nonlinearity.kappa;
    let power = cfg.alpha - cfg.alpha * kappa * t.d as f64 / (2.0 * t.delta * t.p);
    cfg.mesh.horizon.powf(power) * data_norm.powf(kappa)
}

/// `(K₀(u), K₁(u))` for one mode.
fn antiderivatives(alpha: f64, lambda: f64, u: f64) -> Result<(Complex64, Complex64), MlfError> {
    let zero = Complex64::new(0.0, 0.0);
    if u <= 0.0 {
        return Ok((zero, zero));
    }
    let ua = u.powf(alpha);
    let (e1, e2) = if lambda == 0.0 {
        (Complex64::new(rgamma(alpha + 1.0), 0.0), Complex64::new(rgamma(alpha + 2.0), 0.0))
    } else {
        let z = Complex64::new(0.0, -lambda * ua);
        (mlf::ml_eval(&MlQuery::new(alpha, alpha + 1.0, z)?)?, mlf::ml_eval(&MlQuery::new(alpha, alpha + 2.0, z)?)?)
    };
    Ok((e1 * ua, e2 * (ua * u)))
}

/// Weights `w_k` with `∫₀ᵀ (T−τ)^{α−1}E_{α,α}(−iλ(T−τ)^α) ℓ(τ) dτ = Σ_k w_k ℓ(t_k)` for
/// every `ℓ` piecewise linear on `nodes`, where `T` is the last node.
fn node_weights(alpha: f64, lambda: f64, nodes: &[f64]) -> Result<Vec<Complex64>, MlfError> {
    let target = nodes[nodes.len() - 1];
    let k = nodes.iter().map(|&t| antiderivatives(alpha, lambda, target - t)).collect::<Result<Vec<_>, _>>()?;
    let mut w = vec![Complex64::new(0.0, 0.0); nodes.len()];
    for j in 0..nodes.len() - 1 {
        let h = nodes[j + 1] - nodes[j];
        let (k0a, k1a) = k[j];
        let (k0b, k1b) = k[j + 1];
        let dk1 = k1a - k1b;
        w[j] += (k0a * h - dk1) / h;
        w[j + 1] += (dk1 - k0b * h) / h;
    }
    Ok(w)
}

/// Per-node weight tables `[k][class]` for one target time.
#[derive(Debug, Clone)]
struct KernelWeights {
    per_node: Vec<Vec<Complex64>>,
}

fn kernel_weights(alpha: f64, lambdas: &[f64], xi_of: &[f64], nodes: &[f64]) -> Result<KernelWeights, SolverError> {
    let by_class = lambdas
        .par_iter()
        .zip(xi_of)
        .map(|(&l, &xi)| node_weights(alpha, l, nodes).map_err(|source| SolverError::Symbol { xi, source }))
        .collect::<Result<Vec<_>, _>>()?;
    let per_node = (0..nodes.len()).map(|k| by_class.iter().map(|w| w[k]).collect()).collect();
    Ok(KernelWeights { per_node })
}

/// `(1/i) Σ_k W_k ⊙ ĝ_k`.
fn apply_weights(w: &KernelWeights, classes: &RadialClasses, history: &[&[Complex64]]) -> Vec<Complex64> {
    let minus_i = Complex64::new(0.0, -1.0);
    (0..classes.class_of.len())
        .into_par_iter()
        .map(|i| {
            let c = classes.class_of[i] as usize;
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, g) in history.iter().enumerate() {
                acc += w.per_node[k][c] * g[i];
            }
            minus_i * acc
        })
        .collect()
}

fn validate_nodes(nodes: &[f64]) -> Result<(), SolverError> {
    if nodes.is_empty() {
        return Err(SolverError::History("empty history".into()));
    }
    if nodes[0] != 0.0 {
        return Err(SolverError::History(format!("history must start at t = 0, got {}", nodes[0])));
    }
    if let Some(w) = nodes.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(SolverError::History(format!("non-positive panel [{}, {}]", w[0], w[1])));
    }
    Ok(())
}

/// `(1/i)∫₀^{t_m}(t_m−τ)^{α−1}P(t_m−τ)g(τ)dτ` for `g` given at `nodes` (ending at `t_m`).
pub fn duhamel_convolve(history: &[SpectralField], nodes: &[f64], q: &PropagatorQuery) -> Result<SpectralField, SolverError> {
    q.validate(OperatorKind::P)?;
    if q.alpha >= 1.0 {
        return Err(SolverError::InvalidConfig("Duhamel quadrature needs alpha < 1".into()));
    }
    if history.len() != nodes.len() {
        return Err(SolverError::History(format!("{} fields for {} nodes", history.len(), nodes.len())));
    }
    validate_nodes(nodes)?;
    let grid = *history[0].grid();
    if history.iter().any(|h| *h.grid() != grid) {
        return Err(SolverError::History("history fields live on different grids".into()));
    }
    let classes = grid.radial_classes();
    let (lambdas, xi_of) = class_symbols(&grid, &classes, &q.phi);
    let weights = kernel_weights(q.alpha, &lambdas, &xi_of, nodes)?;
    let coeffs: Vec<&[Complex64]> = history.iter().map(|h| h.coefficients()).collect();
    Ok(SpectralField::from_coefficients(grid, apply_weights(&weights, &classes, &coeffs))?)
}

fn class_symbols(grid: &TorusGrid, classes: &RadialClasses, phi: &BernsteinFunction) -> (Vec<f64>, Vec<f64>) {
    let unit_sq = grid.xi_unit().powi(2);
    classes
        .k_sq
        .iter()
        .map(|&k| {
            let x2 = unit_sq * k as f64;
            (phi.eval_unchecked(x2), x2.sqrt())
        })
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    MaxIterations,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖w^{n+1} − w^n‖_{X^α_T}`
    pub distance: f64,
    /// `distance / ‖w^{n+1}‖_{X^α_T}`
    pub relative: f64,
    /// `distance_n / distance_{n−1}`
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolutionTrajectory {
    pub times: Vec<f64>,
    pub fields: Vec<SpectralField>,
    pub history: Vec<IterationRecord>,
    pub outcome: Outcome,
}

impl SolutionTrajectory {
    pub fn converged(&self) -> bool {
        self.outcome == Outcome::Converged
    }

    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.history.iter().filter_map(|r| r.ratio).collect()
    }
}

/// Precomputed propagators and Duhamel weights for one grid and configuration.
pub struct Solver {
    cfg: SolveConfig,
    grid: TorusGrid,
    times: Vec<f64>,
    classes: Arc<RadialClasses>,
    lambdas: Vec<f64>,
    xi_of: Vec<f64>,
    free: Vec<SymbolTable>,
    weights: OnceLock<Vec<KernelWeights>>,
    partition: DyadicPartition,
    besov: SpaceSpec,
}

impl Solver {
    pub fn new(grid: &TorusGrid, cfg: &SolveConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        if grid.d != cfg.triple.d {
            return Err(SolverError::InvalidConfig(format!("grid has d = {} but the triple uses d = {}", grid.d, cfg.triple.d)));
        }
        let times = cfg.mesh.nodes(cfg.alpha)?;
        let classes = grid.radial_classes();
        let (lambdas, xi_of) = class_symbols(grid, &classes, &cfg.phi);
        let base = PropagatorQuery::new(cfg.alpha, cfg.phi, 0.0);
        let free = times
            .iter()
            .map(|&t| operators::propagator_table(grid, OperatorKind::S, &base.at(t)))
            .collect::<Result<Vec<_>, _>>()?;
        let partition = DyadicPartition::new(grid)?;
        Ok(Self {
            cfg: *cfg,
            grid: *grid,
            times,
            classes,
            lambdas,
            xi_of,
            free,
            weights: OnceLock::new(),
            partition,
            besov: cfg.besov_spec()?,
        })
    }

    pub fn config(&self) -> &SolveConfig {
        &self.cfg
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn weights(&self) -> Result<&[KernelWeights], SolverError> {
        if let Some(w) = self.weights.get() {
            return Ok(w);
        }
        let built = (0..self.times.len())
            .map(|m| kernel_weights(self.cfg.alpha, &self.lambdas, &self.xi_of, &self.times[..=m]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.weights.get_or_init(|| built))
    }

    fn check_field(&self, f: &SpectralField) -> Result<(), SolverError> {
        if *f.grid() != self.grid {
            return Err(SolverError::InvalidConfig("field lives on a different grid than the solver".into()));
        }
        Ok(())
    }

    /// `S(t_m)w₀` at every node; the first entry is `w₀` itself.
    pub fn free_evolution(&self, w0: &SpectralField) -> Result<Vec<SpectralField>, SolverError> {
        self.check_field(w0)?;
        let mut out = Vec::with_capacity(self.times.len());
        out.push(w0.clone());
        for table in &self.free[1..] {
            out.push(table.apply(w0)?);
        }
        Ok(out)
    }

    fn nonlinear_history(&self, fields: &[SpectralField]) -> Result<Vec<Vec<Complex64>>, SolverError> {
        fields
            .iter()
            .map(|f| Ok(g_apply(f, &self.cfg.nonlinearity)?.coefficients().to_vec()))
            .collect()
    }

    /// `Θw` at every node for the trajectory `fields`.
    fn theta(&self, free: &[SpectralField], fields: &[SpectralField]) -> Result<Vec<SpectralField>, SolverError> {
        if self.cfg.nonlinearity.is_linear() {
            return Ok(free.to_vec());
        }
        let weights = self.weights()?;
        let g_hat = self.nonlinear_history(fields)?;
        let mut out = Vec::with_capacity(free.len());
        out.push(free[0].clone());
        for m in 1..free.len() {
            let history: Vec<&[Complex64]> = g_hat[..=m].iter().map(|v| v.as_slice()).collect();
            let duhamel = SpectralField::from_coefficients(self.grid, apply_weights(&weights[m], &self.classes, &history))?;
            out.push(free[m].axpy(Complex64::new(1.0, 0.0), &duhamel)?);
        }
        Ok(out)
    }

    pub fn solve(&self, w0: &SpectralField) -> Result<SolutionTrajectory, SolverError> {
        let free = self.free_evolution(w0)?;
        let start = self.xalpha_norm_fields(&free)?;
        let mut current = free.clone();
        let mut history: Vec<IterationRecord> = Vec::new();
        let mut outcome = Outcome::MaxIterations;
        let mut expanding = 0;
        for iteration in 1..=self.cfg.max_iter {
            let next = self.theta(&free, &current)?;
            let diff: Vec<SpectralField> = next.iter().zip(&current).map(|(a, b)| a.sub(b)).collect::<Result<_, _>>()?;
            let distance = self.xalpha_norm_fields(&diff)?;
            let norm = self.xalpha_norm_fields(&next)?;
            let relative = if norm > 0.0 { distance / norm } else { distance };
            let ratio = history.last().map(|r| if r.distance > 0.0 { distance / r.distance } else { 0.0 });
            history.push(IterationRecord { iteration, distance, relative, ratio });
            current = next;
            if !distance.is_finite() || distance > DIVERGENCE_GROWTH * start.max(f64::MIN_POSITIVE) {
                outcome = Outcome::Diverged;
                break;
            }
            if relative <= self.cfg.tol_picard {
                outcome = Outcome::Converged;
                break;
            }
            expanding = if ratio.is_some_and(|r| r > 1.0) { expanding + 1 } else { 0 };
            if expanding >= EXPANDING_STEPS {
                outcome = Outcome::Diverged;
                break;
            }
        }
        Ok(SolutionTrajectory { times: self.times.clone(), fields: current, history, outcome })
    }

    fn check_trajectory(&self, traj: &SolutionTrajectory) -> Result<(), SolverError> {
        if traj.times != self.times || traj.fields.len() != self.times.len() {
            return Err(SolverError::InvalidConfig("trajectory was produced on a different mesh".into()));
        }
        traj.fields.iter().try_for_each(|f| self.check_field(f))
    }

    /// `sup_m ‖w_m‖_{Ḃ^{γ₀,φ}_{p₀,∞}}` and `sup_{m≥1} t_m^{α/q}‖w_m‖_{L^r}`.
    pub fn xalpha_components(&self, fields: &[SpectralField]) -> Result<(f64, f64), SolverError> {
        let power = self.cfg.alpha / self.cfg.triple.q;
        let per_node = fields
            .iter()
            .zip(&self.times)
            .map(|(f, &t)| {
                let b = spaces::besov_norm(f, &self.besov, &self.partition)?;
                let l = if t > 0.0 { t.powf(power) * grid::lp_norm(f, self.cfg.triple.r)? } else { 0.0 };
                Ok((b, l))
            })
            .collect::<Result<Vec<_>, SolverError>>()?;
        Ok(per_node.iter().fold((0.0, 0.0), |(b, l), &(x, y)| (f64::max(b, x), f64::max(l, y))))
    }

    pub fn xalpha_norm_fields(&self, fields: &[SpectralField]) -> Result<f64, SolverError> {
        let (b, l) = self.xalpha_components(fields)?;
        Ok(b + l)
    }

    pub fn xalpha_norm(&self, traj: &SolutionTrajectory) -> Result<f64, SolverError> {
        self.check_trajectory(traj)?;
        self.xalpha_norm_fields(&traj.fields)
    }

    /// `Θw(t)` at an arbitrary `t ∈ [0, T]` from the nodal history, with `g`
    /// interpolated linearly inside the panel containing `t`.
    pub fn evaluate_at(&self, traj: &SolutionTrajectory, t: f64) -> Result<SpectralField, SolverError> {
        self.check_trajectory(traj)?;
        let g_hat = if self.cfg.nonlinearity.is_linear() { Vec::new() } else { self.nonlinear_history(&traj.fields)? };
        self.evaluate_with(traj, &g_hat, t)
    }

    fn evaluate_with(&self, traj: &SolutionTrajectory, g_hat: &[Vec<Complex64>], t: f64) -> Result<SpectralField, SolverError> {
        let horizon = self.cfg.mesh.horizon;
        if !(t >= 0.0 && t <= horizon) {
            return Err(SolverError::InvalidConfig(format!("t = {t} is outside [0, {horizon}]")));
        }
        if let Some(m) = self.times.iter().position(|&s| s == t) {
            return Ok(traj.fields[m].clone());
        }
        let q = PropagatorQuery::new(self.cfg.alpha, self.cfg.phi, t);
        let free = operators::apply_S(&traj.fields[0], &q)?;
        if self.cfg.nonlinearity.is_linear() {
            return Ok(free);
        }
        let j = self.times.iter().rposition(|&s| s < t).expect("t > 0 lies after the first node");
        let theta = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        let mut nodes = self.times[..=j].to_vec();
        nodes.push(t);
        let mid: Vec<Complex64> = g_hat[j].iter().zip(&g_hat[j + 1]).map(|(a, b)| a * (1.0 - theta) + b * theta).collect();
        let mut history: Vec<&[Complex64]> = g_hat[..=j].iter().map(|v| v.as_slice()).collect();
        history.push(&mid);
        let weights = kernel_weights(self.cfg.alpha, &self.lambdas, &self.xi_of, &nodes)?;
        let duhamel = SpectralField::from_coefficients(self.grid, apply_weights(&weights, &self.classes, &history))?;
        Ok(free.axpy(Complex64::new(1.0, 0.0), &duhamel)?)
    }

    /// Fixed-point defect on a mesh with every panel bisected: `g` at the new
    /// midpoints is recomputed from `Θw` there, then
    /// `max_m ‖w(t_m) − S(t_m)w₀ − D_fine(t_m)‖_{L²} / max_m ‖w(t_m)‖_{L²}`.
    pub fn mild_residual(&self, traj: &SolutionTrajectory) -> Result<f64, SolverError> {
        self.check_trajectory(traj)?;
        let free = self.free_evolution(&traj.fields[0])?;
        let scale = traj.fields.iter().map(|f| grid::lp_norm(f, 2.0)).collect::<Result<Vec<_>, _>>()?;
        let scale = scale.into_iter().fold(0.0, f64::max);
        let mut defect = 0.0_f64;
        if self.cfg.nonlinearity.is_linear() {
            for (w, s) in traj.fields.iter().zip(&free) {
                defect = defect.max(grid::lp_norm(&w.sub(s)?, 2.0)?);
            }
        } else {
            let g_hat = self.nonlinear_history(&traj.fields)?;
            let mut fine_nodes = vec![0.0];
            let mut fine_g = vec![g_hat[0].clone()];
            for j in 0..self.times.len() - 1 {
                let mid = 0.5 * (self.times[j] + self.times[j + 1]);
                let w_mid = self.evaluate_with(traj, &g_hat, mid)?;
                fine_nodes.push(mid);
                fine_g.push(g_apply(&w_mid, &self.cfg.nonlinearity)?.coefficients().to_vec());
                fine_nodes.push(self.times[j + 1]);
                fine_g.push(g_hat[j + 1].clone());
            }
            for m in 1..self.times.len() {
                let nodes = &fine_nodes[..=2 * m];
                let weights = kernel_weights(self.cfg.alpha, &self.lambdas, &self.xi_of, nodes)?;
                let history: Vec<&[Complex64]> = fine_g[..=2 * m].iter().map(|v| v.as_slice()).collect();
                let duhamel = SpectralField::from_coefficients(self.grid, apply_weights(&weights, &self.classes, &history))?;
                let theta = free[m].axpy(Complex64::new(1.0, 0.0), &duhamel)?;
                defect = defect.max(grid::lp_norm(&traj.fields[m].sub(&theta)?, 2.0)?);
            }
        }
        Ok(if scale > 0.0 { defect / scale } else { defect })
    }

    /// `‖w − w'‖_{X^α_T} / ‖w₀ − w₀'‖_{Ḃ^{γ₀,φ}_{p₀,∞}}`; errors if either run fails to converge.
    pub fn lipschitz_ratio(&self, w0: &SpectralField, w0p: &SpectralField) -> Result<f64, SolverError> {
        let a = self.converged(w0)?;
        let b = self.converged(w0p)?;
        let diff: Vec<SpectralField> = a.fields.iter().zip(&b.fields).map(|(x, y)| x.sub(y)).collect::<Result<_, _>>()?;
        let num = self.xalpha_norm_fields(&diff)?;
        let den = spaces::besov_norm(&w0.sub(w0p)?, &self.besov, &self.partition)?;
        Ok(if num == 0.0 && den == 0.0 { 0.0 } else { num / den })
    }

    fn converged(&self, w0: &SpectralField) -> Result<SolutionTrajectory, SolverError> {
        let traj = self.solve(w0)?;
        if !traj.converged() {
            return Err(SolverError::NotConverged { outcome: traj.outcome, iterations: traj.iterations() });
        }
        Ok(traj)
    }
}

pub fn picard_solve(w0: &SpectralField, cfg: &SolveConfig) -> Result<SolutionTrajectory, SolverError> {
    Solver::new(w0.grid(), cfg)?.solve(w0)
}

pub fn mild_residual(traj: &SolutionTrajectory, cfg: &SolveConfig) -> Result<f64, SolverError> {
    let grid = *traj.fields.first().ok_or_else(|| SolverError::History("empty trajectory".into()))?.grid();
    Solver::new(&grid, cfg)?.mild_residual(traj)
}

pub fn xalpha_norm(traj: &SolutionTrajectory, cfg: &SolveConfig) -> Result<f64, SolverError> {
    let grid = *traj.fields.first().ok_or_else(|| SolverError::History("empty trajectory".into()))?.grid();
    Solver::new(&grid, cfg)?.xalpha_norm(traj)
}

pub fn data_lipschitz_probe(w0: &SpectralField, w0p: &SpectralField, cfg: &SolveConfig) -> Result<f64, SolverError> {
    Solver::new(w0.grid(), cfg)?.lipschitz_ratio(w0, w0p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticRow {
    pub t: f64,
    pub besov: f64,
    pub weighted_lr: f64,
    pub j: f64,
}

/// `J(t) = ‖u(t) − w(t)‖_{Ḃ^{γ₀,φ}_{p₀,∞}} + t^{α/q}‖u(t) − w(t)‖_{L^r}` on `t_grid ⊂ (0, T]`.
pub fn asymptotic_difference_probe(
    u0: &SpectralField,
    w0: &SpectralField,
    cfg: &SolveConfig,
    t_grid: &[f64],
) -> Result<Vec<AsymptoticRow>, SolverError> {
    check_global_existence(&cfg.triple, cfg.p0, cfg.nonlinearity.kappa)?;
    let solver = Solver::new(u0.grid(), cfg)?;
    let u = solver.converged(u0)?;
    let w = solver.converged(w0)?;
    let power = cfg.alpha / cfg.triple.q;
    t_grid
        .iter()
        .map(|&t| {
            let diff = solver.evaluate_at(&u, t)?.sub(&solver.evaluate_at(&w, t)?)?;
            let besov = spaces::besov_norm(&diff, &solver.besov, &solver.partition)?;
            let weighted_lr = t.powf(power) * grid::lp_norm(&diff, cfg.triple.r)?;
            Ok(AsymptoticRow { t, besov, weighted_lr, j: besov + weighted_lr })
        })
        .collect()
}

/// Which well-posedness window `sobolev_track` enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SobolevTheorem {
    /// `C([0,T]; H^{s,φ}_p) ∩ C_{α,q}((0,T]; H^{s,φ}_r)` with the configured triple.
    Mixed,
    /// `C([0,T]; H^{s,φ}_p)`.
    Continuous,
}

/// `‖w(t_m)‖_{H^{s,φ}_p}` at every node after checking the window on `s`.
pub fn sobolev_track(
    traj: &SolutionTrajectory,
    cfg: &SolveConfig,
    s: f64,
    p: f64,
    theorem: SobolevTheorem,
) -> Result<Vec<(f64, f64)>, SolverError> {
    let kappa = cfg.nonlinearity.kappa;
    match theorem {
        SobolevTheorem::Mixed => {
            if (cfg.triple.p - p).abs() > RELATION_TOL {
                return fail("p matches the admissible triple", format!("p = {p}, triple p = {}", cfg.triple.p)).map(|_| Vec::new());
            }
            check_sobolev_y_window(&cfg.triple, kappa, s)?;
        }
        SobolevTheorem::Continuous => check_sobolev_h_window(cfg.triple.d, cfg.phi.delta, p, kappa, s)?,
    }
    traj.times
        .iter()
        .zip(&traj.fields)
        .map(|(&t, f)| Ok((t, spaces::sobolev_phi_norm(f, s, p, &cfg.phi)?)))
        .collect()
}
