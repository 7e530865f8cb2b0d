use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::bernstein::{BernsteinFunction, Family};
use crate::grid::{InitialData, TorusGrid};
use crate::mlf::MlQuery;
use crate::operators::{
    log_grid, AdmissibleTriple, DecayNorm, DecaySource, DecaySpec, OperatorKind, PropagatorQuery,
};
use crate::solver::{Nonlinearity, SolveConfig, TimeMesh, DEFAULT_MAX_ITER, DEFAULT_TOL_PICARD};
use crate::spaces::{self, gn_relation, embedding_relation, Scale, SpaceSpec};

/// Top-level experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlf: Option<MlfSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spaces: Option<SpacesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub box_len: f64,
    /// Serial summation order for bitwise-reproducible norms.
    #[serde(default = "yes")]
    pub deterministic: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSection {
    pub function: Family,
    #[serde(default)]
    pub drift_a: f64,
    #[serde(default)]
    pub experiments: Vec<BernsteinExperiment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum BernsteinExperiment {
    DerivativeBound {
        #[serde(default = "default_orders")]
        orders: Vec<usize>,
        #[serde(default = "default_x_lo")]
        x_lo: f64,
        #[serde(default = "default_x_hi")]
        x_hi: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    ScalingIndex {
        #[serde(default = "default_x_lo")]
        k_min: f64,
        #[serde(default = "default_x_hi")]
        k_max: f64,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_delta_tol")]
        delta_tol: f64,
    },
}

fn default_orders() -> Vec<usize> {
    vec![1, 2, 3, 4]
}
fn default_x_lo() -> f64 {
    1e-6
}
fn default_x_hi() -> f64 {
    1e6
}
fn default_samples() -> usize {
    121
}
fn default_delta_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlfSection {
    #[serde(default)]
    pub experiments: Vec<MlfExperiment>,
}

/// `β` given as a number or as the word `"alpha"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaChoice {
    Value(f64),
    Word(BetaWord),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaWord {
    Alpha,
}

impl BetaChoice {
    pub fn resolve(self, alpha: f64) -> f64 {
        match self {
            BetaChoice::Value(b) => b,
            BetaChoice::Word(BetaWord::Alpha) => alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPoint {
    pub alpha: f64,
    pub beta: f64,
    pub z: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum MlfExperiment {
    Eval {
        points: Vec<EvalPoint>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    LaplaceCheck {
        #[serde(default = "laplace_alphas")]
        alphas: Vec<f64>,
        #[serde(default = "one_and_alpha")]
        betas: Vec<BetaChoice>,
        #[serde(default = "laplace_a")]
        a: Vec<Complex64>,
        #[serde(default = "laplace_s")]
        s: Vec<f64>,
        #[serde(default = "laplace_limit")]
        max_residual: f64,
    },
    Caputo {
        #[serde(default = "caputo_alphas")]
        alphas: Vec<f64>,
        #[serde(default = "caputo_lambdas")]
        lambdas: Vec<f64>,
        #[serde(default = "caputo_meshes")]
        meshes: Vec<usize>,
        #[serde(default = "unit")]
        horizon: f64,
        /// Mesh grading exponent; uniform when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grading: Option<f64>,
        #[serde(default = "unit")]
        min_order: f64,
    },
}

impl MlfExperiment {
    /// The Laplace sweep over the default parameter grid.
    pub fn default_laplace() -> Self {
        MlfExperiment::LaplaceCheck {
            alphas: laplace_alphas(),
            betas: one_and_alpha(),
            a: laplace_a(),
            s: laplace_s(),
            max_residual: laplace_limit(),
        }
    }
}

fn laplace_alphas() -> Vec<f64> {
    vec![0.3, 0.5, 0.7]
}
fn one_and_alpha() -> Vec<BetaChoice> {
    vec![BetaChoice::Value(1.0), BetaChoice::Word(BetaWord::Alpha)]
}
fn laplace_a() -> Vec<Complex64> {
    vec![Complex64::new(0.5, 0.0), Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0), Complex64::new(0.0, 1.0)]
}
fn laplace_s() -> Vec<f64> {
    vec![1.0, 2.0, 5.0, 10.0]
}
fn laplace_limit() -> f64 {
    1e-6
}
fn caputo_alphas() -> Vec<f64> {
    vec![0.4, 0.7]
}
fn caputo_lambdas() -> Vec<f64> {
    vec![1.0, 4.0]
}
fn caputo_meshes() -> Vec<usize> {
    vec![64, 128, 256, 512]
}
fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacesSection {
    /// Transition width of the Littlewood–Paley bump.
    #[serde(default = "unit")]
    pub lp_width: f64,
    #[serde(default)]
    pub experiments: Vec<SpacesExperiment>,
}

/// A φ-Besov or φ-Triebel–Lizorkin space; `φ` comes from the `phi` section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    pub scale: Scale,
    pub s: f64,
    pub p: f64,
    #[serde(with = "spaces::exponent")]
    pub q: f64,
    #[serde(default)]
    pub homogeneous: bool,
}

impl NormSpec {
    fn build(&self, phi: BernsteinFunction) -> Result<SpaceSpec, spaces::SpacesError> {
        match self.scale {
            Scale::Besov => SpaceSpec::besov(self.s, self.p, self.q, self.homogeneous, phi),
            Scale::Triebel => SpaceSpec::triebel(self.s, self.p, self.q, self.homogeneous, phi),
        }
    }
}

/// Seeded family of band-limited fields on dyadic levels `[j_lo, j_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub seed: u64,
    pub count: usize,
    pub j_lo: f64,
    pub j_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpacesExperiment {
    Embedding {
        source: NormSpec,
        target: NormSpec,
        family: FamilySpec,
        #[serde(default = "default_slack")]
        slack: f64,
    },
    GagliardoNirenberg {
        target: NormSpec,
        end0: NormSpec,
        end1: NormSpec,
        theta: f64,
        family: FamilySpec,
        #[serde(default = "default_slack")]
        slack: f64,
    },
}

fn default_slack() -> f64 {
    1.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    #[serde(default)]
    pub experiments: Vec<OperatorExperiment>,
}

/// `samples` log-spaced times in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeRange {
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
}

impl TimeRange {
    fn grid(&self) -> Result<Vec<f64>, String> {
        if !(self.lo > 0.0 && self.lo < self.hi && self.hi.is_finite() && self.samples >= 2) {
            return Err(format!("need 0 < lo < hi and samples >= 2, got {self:?}"));
        }
        Ok(log_grid(self.lo, self.hi, self.samples))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeFamilySpec {
    pub seed: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorExperiment {
    Decay {
        kind: OperatorKind,
        alpha: f64,
        norm: DecayNorm,
        source: DecaySource,
        data: InitialData,
        times: TimeRange,
        #[serde(default = "unit")]
        window_decades: f64,
        #[serde(default = "decay_rel_tol")]
        rel_tol: f64,
        #[serde(default = "decay_abs_tol")]
        abs_tol: f64,
    },
    BoundProbe {
        kind: OperatorKind,
        alpha: f64,
        #[serde(default)]
        sigma: f64,
        #[serde(default)]
        a: f64,
        p: f64,
        times: TimeRange,
        family: ProbeFamilySpec,
        #[serde(default = "probe_variation")]
        max_variation: f64,
    },
}

fn decay_rel_tol() -> f64 {
    0.15
}
fn decay_abs_tol() -> f64 {
    0.02
}
fn probe_variation() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub experiments: Vec<SolverExperiment>,
}

/// One mild-solution problem; `d` comes from the grid and `δ` from `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub alpha: f64,
    pub p: f64,
    pub r: f64,
    pub p0: f64,
    pub kappa: f64,
    #[serde(default = "unit_coeff")]
    pub coeff: Complex64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grading: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol_picard: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub data: InitialData,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit_coeff() -> Complex64 {
    Complex64::new(1.0, 0.0)
}
fn default_tol() -> f64 {
    DEFAULT_TOL_PICARD
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

impl Problem {
    fn build(&self, d: usize, phi: BernsteinFunction) -> Result<SolveConfig, String> {
        let triple = AdmissibleTriple::new(self.p, self.r, d, phi.delta).map_err(|e| e.to_string())?;
        let mut mesh = TimeMesh::new(self.horizon, self.steps);
        if let Some(g) = self.grading {
            mesh = mesh.with_grading(g);
        }
        let cfg = SolveConfig::new(self.alpha, phi, triple, self.p0, mesh, Nonlinearity::new(self.kappa, self.coeff))
            .map_err(|e| e.to_string())?
            .with_tolerance(self.tol_picard, self.max_iter);
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverExperiment {
    Solve {
        problem: Problem,
        #[serde(default = "yes")]
        residual: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        residual_limit: Option<f64>,
        #[serde(default = "yes")]
        snapshots: bool,
    },
    Lipschitz {
        problem: Problem,
        perturbation: InitialData,
        scales: Vec<f64>,
        #[serde(default = "lipschitz_spread")]
        max_spread: f64,
    },
}

fn lipschitz_spread() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parses a config document, or the `config` member of a run manifest.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let schema = |e: serde_json::Error| CliError::Schema { origin: "config".into(), message: e.to_string() };
        let value: serde_json::Value = serde_json::from_str(text).map_err(schema)?;
        if let Some(config) = value.get("manifest_version").and(value.get("config")) {
            return serde_json::from_value(config.clone()).map_err(schema);
        }
        serde_json::from_str(text).map_err(schema)
    }

    /// Config holding nothing but the given mlf experiments.
    pub fn mlf_only(id: &str, experiments: Vec<MlfExperiment>) -> Self {
        RunConfig {
            grid: None,
            phi: None,
            mlf: Some(MlfSection { experiments }),
            spaces: None,
            operator: None,
            solver: None,
            output: OutputSection { id: id.into(), dir: None },
        }
    }

    pub fn deterministic(&self) -> bool {
        self.grid.map(|g| g.deterministic).unwrap_or(true)
    }

    /// Validates every selected experiment and resolves it into a [`Job`].
    pub fn plan(&self, selection: Selection) -> Result<Vec<Planned>, CliError> {
        let mut out = Vec::new();
        let grid = || -> Result<TorusGrid, CliError> {
            let g = self.grid.ok_or_else(|| schema("grid", "section required by the selected experiments".into()))?;
            TorusGrid::new(g.d, g.n, g.box_len).map_err(|e| schema("grid", e.to_string()))
        };
        let phi = || -> Result<BernsteinFunction, CliError> {
            let p = self.phi.as_ref().ok_or_else(|| schema("phi", "section required by the selected experiments".into()))?;
            BernsteinFunction::new(p.function)
                .and_then(|f| f.with_drift(p.drift_a))
                .map_err(|e| schema("phi", e.to_string()))
        };
        if let Some(sec) = self.mlf.as_ref().filter(|_| selection.takes(Section::Mlf)) {
            for (i, e) in sec.experiments.iter().enumerate() {
                let origin = format!("mlf.experiments[{i}]");
                out.push(plan_mlf(e).map_err(|m| schema(&origin, m))?.named("mlf", i));
            }
        }
        if let Some(sec) = self.phi.as_ref().filter(|_| selection.takes(Section::Bernstein)) {
            for (i, e) in sec.experiments.iter().enumerate() {
                let origin = format!("phi.experiments[{i}]");
                out.push(plan_bernstein(e, phi()?).map_err(|m| schema(&origin, m))?.named("phi", i));
            }
        }
        if let Some(sec) = self.spaces.as_ref().filter(|_| selection.takes(Section::Spaces)) {
            for (i, e) in sec.experiments.iter().enumerate() {
                let origin = format!("spaces.experiments[{i}]");
                let job = plan_spaces(e, grid()?, phi()?, sec.lp_width).map_err(|m| schema(&origin, m))?;
                out.push(job.named("spaces", i));
            }
        }
        if let Some(sec) = &self.operator {
            for (i, e) in sec.experiments.iter().enumerate() {
                let wanted = match e {
                    OperatorExperiment::Decay { .. } => Section::Decay,
                    OperatorExperiment::BoundProbe { .. } => Section::BoundProbe,
                };
                if !selection.takes(wanted) {
                    continue;
                }
                let origin = format!("operator.experiments[{i}]");
                let job = plan_operator(e, grid()?, phi()?).map_err(|m| schema(&origin, m))?;
                out.push(job.named("operator", i));
            }
        }
        if let Some(sec) = self.solver.as_ref().filter(|_| selection.takes(Section::Solver)) {
            for (i, e) in sec.experiments.iter().enumerate() {
                let origin = format!("solver.experiments[{i}]");
                let job = plan_solver(e, grid()?, phi()?).map_err(|m| schema(&origin, m))?;
                out.push(job.named("solver", i));
            }
        }
        Ok(out)
    }
}

fn schema(origin: &str, message: String) -> CliError {
    CliError::Schema { origin: origin.into(), message }
}

/// Experiment groups addressable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Mlf,
    Bernstein,
    Spaces,
    Decay,
    BoundProbe,
    Solver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    All,
    Only(Section),
}

impl Selection {
    fn takes(self, s: Section) -> bool {
        match self {
            Selection::All => true,
            Selection::Only(t) => t == s,
        }
    }
}

/// A validated experiment ready to run.
#[derive(Debug, Clone)]
pub struct Planned {
    pub name: String,
    pub job: Job,
}

#[derive(Debug, Clone)]
pub enum Job {
    MlfEval { points: Vec<MlQuery> },
    Laplace { cases: Vec<(f64, f64, Complex64, f64)>, max_residual: f64 },
    Caputo { cases: Vec<(f64, f64)>, meshes: Vec<usize>, horizon: f64, grading: Option<f64>, min_order: f64 },
    DerivativeBound { phi: BernsteinFunction, orders: Vec<usize>, x_grid: Vec<f64> },
    ScalingIndex { phi: BernsteinFunction, k_min: f64, k_max: f64, samples: usize, delta_tol: f64 },
    Embedding { grid: TorusGrid, source: SpaceSpec, target: SpaceSpec, family: FamilySpec, slack: f64, lp_width: f64 },
    GagliardoNirenberg {
        grid: TorusGrid,
        target: SpaceSpec,
        end0: SpaceSpec,
        end1: SpaceSpec,
        theta: f64,
        family: FamilySpec,
        slack: f64,
        lp_width: f64,
    },
    Decay { grid: TorusGrid, spec: DecaySpec, data: InitialData, times: Vec<f64>, rel_tol: f64, abs_tol: f64 },
    BoundProbe {
        grid: TorusGrid,
        kind: OperatorKind,
        query: PropagatorQuery,
        p: f64,
        times: Vec<f64>,
        family: ProbeFamilySpec,
        max_variation: f64,
    },
    Solve { grid: TorusGrid, cfg: SolveConfig, data: InitialData, amplitude: f64, residual: bool, residual_limit: Option<f64>, snapshots: bool },
    Lipschitz { grid: TorusGrid, cfg: SolveConfig, data: InitialData, amplitude: f64, perturbation: InitialData, scales: Vec<f64>, max_spread: f64 },
}

impl Job {
    fn named(self, section: &str, index: usize) -> Planned {
        Planned { name: format!("{section}-{index:02}-{}", self.kind()), job: self }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Job::MlfEval { .. } => "eval",
            Job::Laplace { .. } => "laplace_check",
            Job::Caputo { .. } => "caputo",
            Job::DerivativeBound { .. } => "derivative_bound",
            Job::ScalingIndex { .. } => "scaling_index",
            Job::Embedding { .. } => "embedding",
            Job::GagliardoNirenberg { .. } => "gagliardo_nirenberg",
            Job::Decay { .. } => "decay",
            Job::BoundProbe { .. } => "bound_probe",
            Job::Solve { .. } => "solve",
            Job::Lipschitz { .. } => "lipschitz",
        }
    }

    /// `module.operation` exercised by the job.
    pub fn target(&self) -> &'static str {
        match self {
            Job::MlfEval { .. } => "mlf.ml_eval",
            Job::Laplace { .. } => "mlf.laplace_identity_residual",
            Job::Caputo { .. } => "mlf.caputo_mode_residual",
            Job::DerivativeBound { .. } => "bernstein.verify_derivative_bound",
            Job::ScalingIndex { .. } => "bernstein.scaling_index_estimate",
            Job::Embedding { .. } => "spaces.check_embedding",
            Job::GagliardoNirenberg { .. } => "spaces.check_gn",
            Job::Decay { .. } => "operators.decay_fit",
            Job::BoundProbe { .. } => "operators.multiplier_bound_probe",
            Job::Solve { .. } => "solver.picard_solve",
            Job::Lipschitz { .. } => "solver.data_lipschitz_probe",
        }
    }

    /// Seeds of every randomized family the job draws.
    pub fn seeds(&self) -> Vec<u64> {
        let data_seed = |d: &InitialData| match d {
            InitialData::RandomBand { seed, .. } => Some(*seed),
            _ => None,
        };
        match self {
            Job::Embedding { family, .. } | Job::GagliardoNirenberg { family, .. } => vec![family.seed],
            Job::BoundProbe { family, .. } => vec![family.seed],
            Job::Decay { data, .. } | Job::Solve { data, .. } => data_seed(data).into_iter().collect(),
            Job::Lipschitz { data, perturbation, .. } => data_seed(data).into_iter().chain(data_seed(perturbation)).collect(),
            _ => Vec::new(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive and finite, got {v}"))
    }
}

fn plan_mlf(e: &MlfExperiment) -> Result<Job, String> {
    match e {
        MlfExperiment::Eval { points, tol } => {
            let points = points
                .iter()
                .map(|p| match tol {
                    Some(t) => MlQuery::with_tol(p.alpha, p.beta, p.z, *t),
                    None => MlQuery::new(p.alpha, p.beta, p.z),
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            Ok(Job::MlfEval { points })
        }
        MlfExperiment::LaplaceCheck { alphas, betas, a, s, max_residual } => {
            positive("max_residual", *max_residual)?;
            let mut cases = Vec::new();
            for &alpha in alphas {
                for b in betas {
                    let beta = b.resolve(alpha);
                    MlQuery::new(alpha, beta, Complex64::new(0.0, 0.0)).map_err(|e| e.to_string())?;
                    for &av in a {
                        for &sv in s {
                            positive("s", sv)?;
                            cases.push((alpha, beta, av, sv));
                        }
                    }
                }
            }
            Ok(Job::Laplace { cases, max_residual: *max_residual })
        }
        MlfExperiment::Caputo { alphas, lambdas, meshes, horizon, grading, min_order } => {
            positive("horizon", *horizon)?;
            if let Some(g) = grading {
                positive("grading", *g)?;
            }
            if meshes.len() < 2 || meshes.windows(2).any(|w| w[1] <= w[0]) || meshes[0] < 2 {
                return Err("meshes must be at least two increasing sizes >= 2".into());
            }
            let mut cases = Vec::new();
            for &alpha in alphas {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(format!("alpha = {alpha} is outside (0, 1)"));
                }
                for &lambda in lambdas {
                    if !(lambda >= 0.0 && lambda.is_finite()) {
                        return Err(format!("lambda = {lambda} must be nonnegative"));
                    }
                    cases.push((alpha, lambda));
                }
            }
            Ok(Job::Caputo { cases, meshes: meshes.clone(), horizon: *horizon, grading: *grading, min_order: *min_order })
        }
    }
}

fn plan_bernstein(e: &BernsteinExperiment, phi: BernsteinFunction) -> Result<Job, String> {
    match e {
        BernsteinExperiment::DerivativeBound { orders, x_lo, x_hi, samples } => {
            positive("x_lo", *x_lo)?;
            if !(x_lo < x_hi && *samples >= 2) {
                return Err(format!("need x_lo < x_hi and samples >= 2, got [{x_lo}, {x_hi}] x {samples}"));
            }
            if let Some(&n) = orders.iter().find(|&&n| n == 0 || n > phi.n_max) {
                return Err(format!("order {n} outside 1..={}", phi.n_max));
            }
            Ok(Job::DerivativeBound { phi, orders: orders.clone(), x_grid: log_grid(*x_lo, *x_hi, *samples) })
        }
        BernsteinExperiment::ScalingIndex { k_min, k_max, samples, delta_tol } => {
            positive("k_min", *k_min)?;
            if !(k_min < k_max && *samples >= 2) {
                return Err(format!("need k_min < k_max and samples >= 2, got [{k_min}, {k_max}] x {samples}"));
            }
            Ok(Job::ScalingIndex { phi, k_min: *k_min, k_max: *k_max, samples: *samples, delta_tol: *delta_tol })
        }
    }
}

fn check_family(grid: &TorusGrid, f: &FamilySpec) -> Result<(), String> {
    if f.count < 2 {
        return Err(format!("family needs at least 2 members, got {}", f.count));
    }
    let top = grid.xi_max().log2();
    if !(f.j_lo < f.j_hi && f.j_hi <= top) {
        return Err(format!("family band [{}, {}] must be increasing and below the grid limit {top}", f.j_lo, f.j_hi));
    }
    Ok(())
}

fn plan_spaces(e: &SpacesExperiment, grid: TorusGrid, phi: BernsteinFunction, lp_width: f64) -> Result<Job, String> {
    if !(lp_width > 0.0 && lp_width <= 1.0) {
        return Err(format!("lp_width must lie in (0, 1], got {lp_width}"));
    }
    let part = spaces::DyadicPartition::with_width(&grid, lp_width).map_err(|e| e.to_string())?;
    let build = |n: &NormSpec| {
        let spec = n.build(phi).map_err(|e| e.to_string())?;
        part.check_span(spec.homogeneous).map_err(|e| e.to_string())?;
        Ok::<_, String>(spec)
    };
    match e {
        SpacesExperiment::Embedding { source, target, family, slack } => {
            let (source, target) = (build(source)?, build(target)?);
            embedding_relation(&source, &target, grid.d).map_err(|e| e.to_string())?;
            check_family(&grid, family)?;
            Ok(Job::Embedding { grid, source, target, family: *family, slack: *slack, lp_width })
        }
        SpacesExperiment::GagliardoNirenberg { target, end0, end1, theta, family, slack } => {
            let (target, end0, end1) = (build(target)?, build(end0)?, build(end1)?);
            gn_relation(&target, &end0, &end1, *theta, grid.d).map_err(|e| e.to_string())?;
            check_family(&grid, family)?;
            Ok(Job::GagliardoNirenberg { grid, target, end0, end1, theta: *theta, family: *family, slack: *slack, lp_width })
        }
    }
}

fn plan_operator(e: &OperatorExperiment, grid: TorusGrid, phi: BernsteinFunction) -> Result<Job, String> {
    match e {
        OperatorExperiment::Decay { kind, alpha, norm, source, data, times, window_decades, rel_tol, abs_tol } => {
            let mut spec = DecaySpec::new(*kind, *alpha, phi, *norm, *source);
            spec.window_decades = *window_decades;
            spec.validate(grid.d).map_err(|e| e.to_string())?;
            if let DecayNorm::Besov { homogeneous, .. } = norm {
                let part = spaces::DyadicPartition::new(&grid).map_err(|e| e.to_string())?;
                part.check_span(*homogeneous).map_err(|e| e.to_string())?;
            }
            Ok(Job::Decay { grid, spec, data: *data, times: times.grid()?, rel_tol: *rel_tol, abs_tol: *abs_tol })
        }
        OperatorExperiment::BoundProbe { kind, alpha, sigma, a, p, times, family, max_variation } => {
            let query = PropagatorQuery::new(*alpha, phi, 1.0).with_weight(*sigma, *a);
            query.validate(*kind).map_err(|e| e.to_string())?;
            if !(*p >= 1.0) {
                return Err(format!("p must be at least 1, got {p}"));
            }
            if family.count == 0 {
                return Err("probe family must not be empty".into());
            }
            Ok(Job::BoundProbe { grid, kind: *kind, query, p: *p, times: times.grid()?, family: *family, max_variation: *max_variation })
        }
    }
}

fn plan_solver(e: &SolverExperiment, grid: TorusGrid, phi: BernsteinFunction) -> Result<Job, String> {
    match e {
        SolverExperiment::Solve { problem, residual, residual_limit, snapshots } => Ok(Job::Solve {
            grid,
            cfg: problem.build(grid.d, phi)?,
            data: problem.data,
            amplitude: problem.amplitude,
            residual: *residual,
            residual_limit: *residual_limit,
            snapshots: *snapshots,
        }),
        SolverExperiment::Lipschitz { problem, perturbation, scales, max_spread } => {
            if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return Err("scales must be a non-empty list of positive numbers".into());
            }
            Ok(Job::Lipschitz {
                grid,
                cfg: problem.build(grid.d, phi)?,
                data: problem.data,
                amplitude: problem.amplitude,
                perturbation: *perturbation,
                scales: scales.clone(),
                max_spread: *max_spread,
            })
        }
    }
}
