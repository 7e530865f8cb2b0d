use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{Job, Planned, RunConfig, Selection};
use super::{CliError, ENV_OUT, EXIT_NUMERIC, EXIT_OK};
use crate::grid::{self, make_initial_data, write_snapshot};
use crate::mlf::{self, caputo_mode_residual, laplace_identity_residual};
use crate::operators::{decay_fit, multiplier_bound_probe, probe_family};
use crate::solver::{check_local_existence, Solver, SolverError};
use crate::spaces::{self, check_embedding, check_gn, empirical_bound, random_family, DyadicPartition};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    Failed,
    /// The Picard iteration did not converge; reported, not an error.
    Diverged,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub name: String,
    pub target: String,
    pub status: Status,
    pub detail: Value,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub manifest_version: u32,
    pub experiment_id: String,
    pub tool: String,
    pub tool_version: String,
    pub targets: Vec<String>,
    pub seeds: Vec<u64>,
    pub deterministic: bool,
    pub threads: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub output_dir: PathBuf,
    pub diverged: bool,
    pub results: Vec<ExperimentRecord>,
    pub config: RunConfig,
}

impl ExperimentManifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        serde_json::from_str(&text).map_err(|e| CliError::Schema { origin: path.display().to_string(), message: e.to_string() })
    }

    pub fn exit_code(&self) -> i32 {
        if self.results.iter().any(|r| matches!(r.status, Status::Failed | Status::Error)) {
            EXIT_NUMERIC
        } else {
            EXIT_OK
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    /// Output directory; beats the environment override and the config.
    pub out: Option<PathBuf>,
}

/// Output directory: explicit option, then `FRACSPEC_OUT`, then the config, then `results`.
pub fn resolve_output_dir(cfg: &RunConfig, opts: &SuiteOptions) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| std::env::var_os(ENV_OUT).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// Loads, validates and runs every experiment in the config at `path`.
pub fn run_suite(path: &Path, opts: &SuiteOptions) -> Result<ExperimentManifest, CliError> {
    run_selected(path, Selection::All, opts)
}

pub fn run_selected(path: &Path, selection: Selection, opts: &SuiteOptions) -> Result<ExperimentManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    let cfg = RunConfig::from_json(&text)?;
    run_config(&cfg, selection, opts)
}

pub fn run_config(cfg: &RunConfig, selection: Selection, opts: &SuiteOptions) -> Result<ExperimentManifest, CliError> {
    let plan = cfg.plan(selection)?;
    let dir = resolve_output_dir(cfg, opts);
    fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    let started_unix = now();
    let deterministic = cfg.deterministic();
    let previous = grid::deterministic_reduction();
    grid::set_deterministic_reduction(deterministic);
    let results: Vec<ExperimentRecord> = plan.iter().map(|p| execute(p, &dir)).collect();
    grid::set_deterministic_reduction(previous);
    let mut seeds: Vec<u64> = plan.iter().flat_map(|p| p.job.seeds()).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut targets: Vec<String> = plan.iter().map(|p| p.job.target().to_string()).collect();
    targets.dedup();
    let manifest = ExperimentManifest {
        manifest_version: MANIFEST_VERSION,
        experiment_id: cfg.output.id.clone(),
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        targets,
        seeds,
        deterministic,
        threads: rayon::current_num_threads(),
        started_unix,
        finished_unix: now(),
        output_dir: dir.clone(),
        diverged: results.iter().any(|r| r.status == Status::Diverged),
        results,
        config: cfg.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(CliError::Json)? + "\n";
    fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
    Ok(manifest)
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

struct Outputs<'a> {
    dir: &'a Path,
    name: &'a str,
    files: Vec<String>,
}

impl Outputs<'_> {
    fn csv<T: Serialize>(&mut self, suffix: &str, rows: &[T]) -> Result<(), String> {
        let file = format!("{}{suffix}.csv", self.name);
        let mut w = csv::Writer::from_path(self.dir.join(&file)).map_err(|e| format!("{file}: {e}"))?;
        for r in rows {
            w.serialize(r).map_err(|e| format!("{file}: {e}"))?;
        }
        w.flush().map_err(|e| format!("{file}: {e}"))?;
        self.files.push(file);
        Ok(())
    }

    fn json(&mut self, suffix: &str, value: &Value) -> Result<(), String> {
        let file = format!("{}{suffix}.json", self.name);
        let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())? + "\n";
        fs::write(self.dir.join(&file), text).map_err(|e| format!("{file}: {e}"))?;
        self.files.push(file);
        Ok(())
    }
}

fn execute(p: &Planned, dir: &Path) -> ExperimentRecord {
    let mut out = Outputs { dir, name: &p.name, files: Vec::new() };
    let (status, detail) = match run_job(&p.job, &mut out) {
        Ok(r) => r,
        Err(message) => (Status::Error, json!({ "error": message })),
    };
    ExperimentRecord { name: p.name.clone(), target: p.job.target().into(), status, detail, files: out.files }
}

fn verdict(pass: bool) -> Status {
    if pass {
        Status::Passed
    } else {
        Status::Failed
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct EvalRow {
    alpha: f64,
    beta: f64,
    z_re: f64,
    z_im: f64,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct LaplaceRow {
    alpha: f64,
    beta: f64,
    a_re: f64,
    a_im: f64,
    s: f64,
    residual: f64,
}

#[derive(Serialize)]
struct CaputoRow {
    alpha: f64,
    lambda: f64,
    m: usize,
    residual: f64,
    order: Option<f64>,
}

#[derive(Serialize)]
struct RatioRow {
    member: usize,
    role: &'static str,
    ratio: f64,
}

#[derive(Serialize)]
struct NormRow {
    t: f64,
    norm: f64,
}

#[derive(Serialize)]
struct IterationRow {
    iteration: usize,
    distance: f64,
    relative: f64,
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct LipschitzRow {
    scale: f64,
    ratio: f64,
}

fn run_job(job: &Job, out: &mut Outputs) -> Result<(Status, Value), String> {
    match job {
        Job::MlfEval { points } => {
            let rows = points
                .iter()
                .map(|q| {
                    let v = mlf::ml_eval(q)?;
                    Ok(EvalRow { alpha: q.alpha, beta: q.beta, z_re: q.z.re, z_im: q.z.im, re: v.re, im: v.im })
                })
                .collect::<Result<Vec<_>, mlf::MlfError>>()
                .map_err(err)?;
            out.csv("", &rows)?;
            Ok((Status::Passed, json!({ "points": rows.len() })))
        }
        Job::Laplace { cases, max_residual } => {
            let rows = cases
                .par_iter()
                .map(|&(alpha, beta, a, s)| {
                    let residual = laplace_identity_residual(alpha, beta, a, s)?;
                    Ok(LaplaceRow { alpha, beta, a_re: a.re, a_im: a.im, s, residual })
                })
                .collect::<Result<Vec<_>, mlf::MlfError>>()
                .map_err(err)?;
            out.csv("", &rows)?;
            let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
            Ok((verdict(worst < *max_residual), json!({ "max_residual": worst, "limit": max_residual, "cases": rows.len() })))
        }
        Job::Caputo { cases, meshes, horizon, grading, min_order } => {
            let mut rows = Vec::new();
            let mut pass = true;
            let mut worst_order = f64::INFINITY;
            for &(alpha, lambda) in cases {
                let g = grading.unwrap_or(1.0);
                let mut prev: Option<(usize, f64)> = None;
                for &m in meshes {
                    let t: Vec<f64> = (0..=m).map(|k| horizon * (k as f64 / m as f64).powf(g)).collect();
                    let residual = caputo_mode_residual(alpha, lambda, &t).map_err(err)?;
                    let order = prev.map(|(m0, r0)| (r0 / residual).ln() / (m as f64 / m0 as f64).ln());
                    if let (Some((_, r0)), Some(o)) = (prev, order) {
                        pass &= residual < r0 && o >= *min_order;
                        worst_order = worst_order.min(o);
                    }
                    rows.push(CaputoRow { alpha, lambda, m, residual, order });
                    prev = Some((m, residual));
                }
            }
            out.csv("", &rows)?;
            Ok((verdict(pass), json!({ "min_order_observed": worst_order, "min_order": min_order })))
        }
        Job::DerivativeBound { phi, orders, x_grid } => {
            let reports = orders
                .iter()
                .map(|&n| phi.verify_derivative_bound(n, x_grid, None).map(|r| (n, r)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(err)?;
            #[derive(Serialize)]
            struct Row {
                order: usize,
                max_ratio: f64,
                cap: f64,
                pass: bool,
            }
            let rows: Vec<Row> = reports.iter().map(|(n, r)| Row { order: *n, max_ratio: r.max_ratio, cap: r.cap, pass: r.pass }).collect();
            out.csv("", &rows)?;
            Ok((verdict(rows.iter().all(|r| r.pass)), json!({ "family": phi.family, "orders": orders })))
        }
        Job::ScalingIndex { phi, k_min, k_max, samples, delta_tol } => {
            let est = phi.scaling_index_estimate(*k_min, *k_max, *samples).map_err(err)?;
            let pass = est.delta_hat >= phi.delta - delta_tol && est.c_hat > 0.0;
            let detail = json!({ "delta": phi.delta, "delta_hat": est.delta_hat, "c_hat": est.c_hat });
            out.json("", &detail)?;
            Ok((verdict(pass), detail))
        }
        Job::Embedding { grid, source, target, family, slack, lp_width } => {
            let part = DyadicPartition::with_width(grid, *lp_width).map_err(err)?;
            let members = random_family(grid, family.seed, family.count, family.j_lo, family.j_hi).map_err(err)?;
            let ratios = members
                .par_iter()
                .map(|f| check_embedding(f, source, target, &part))
                .collect::<Result<Vec<_>, spaces::SpacesError>>()
                .map_err(err)?;
            calibrated(out, &ratios, *slack)
        }
        Job::GagliardoNirenberg { grid, target, end0, end1, theta, family, slack, lp_width } => {
            let part = DyadicPartition::with_width(grid, *lp_width).map_err(err)?;
            let members = random_family(grid, family.seed, family.count, family.j_lo, family.j_hi).map_err(err)?;
            let ratios = members
                .par_iter()
                .map(|f| check_gn(f, target, end0, end1, *theta, &part))
                .collect::<Result<Vec<_>, spaces::SpacesError>>()
                .map_err(err)?;
            calibrated(out, &ratios, *slack)
        }
        Job::Decay { grid, spec, data, times, rel_tol, abs_tol } => {
            let field = make_initial_data(data, grid).map_err(err)?;
            let fit = decay_fit(spec, &field, times).map_err(err)?;
            let rows: Vec<NormRow> = fit.samples.iter().map(|&(t, norm)| NormRow { t, norm }).collect();
            out.csv("", &rows)?;
            let pass = fit.within(*rel_tol, *abs_tol);
            let detail = json!({
                "slope_hat": fit.slope_hat,
                "slope_theory": fit.slope_theory,
                "rel_err": fit.rel_err,
                "window": [fit.window.0, fit.window.1],
                "rel_tol": rel_tol,
                "abs_tol": abs_tol,
                "pass": pass,
            });
            out.json("_fit", &detail)?;
            Ok((verdict(pass), detail))
        }
        Job::BoundProbe { grid, kind, query, p, times, family, max_variation } => {
            let members = probe_family(grid, family.seed, family.count).map_err(err)?;
            let probe = multiplier_bound_probe(*kind, query, *p, times, &members).map_err(err)?;
            out.csv("", &probe.per_t)?;
            let pass = probe.variation < *max_variation;
            Ok((verdict(pass), json!({ "sup_ratio": probe.sup_ratio, "variation": probe.variation, "max_variation": max_variation })))
        }
        Job::Solve { grid, cfg, data, amplitude, residual, residual_limit, snapshots } => {
            let w0 = make_initial_data(data, grid).map_err(err)?.scale(Complex64::new(*amplitude, 0.0));
            let solver = Solver::new(grid, cfg).map_err(err)?;
            let traj = solver.solve(&w0).map_err(err)?;
            let rows: Vec<IterationRow> = traj
                .history
                .iter()
                .map(|r| IterationRow { iteration: r.iteration, distance: r.distance, relative: r.relative, ratio: r.ratio })
                .collect();
            out.csv("_convergence", &rows)?;
            let converged = traj.converged();
            if *snapshots && converged {
                let sub = format!("{}_snapshots", out.name);
                let sub_dir = out.dir.join(&sub);
                fs::create_dir_all(&sub_dir).map_err(err)?;
                for (m, (t, f)) in traj.times.iter().zip(&traj.fields).enumerate() {
                    let stem = format!("step_{m:04}");
                    write_snapshot(&sub_dir.join(format!("{stem}.bin")), f, *t, out.name).map_err(err)?;
                    out.files.push(format!("{sub}/{stem}.bin"));
                    out.files.push(format!("{sub}/{stem}.json"));
                }
            }
            let mild = if *residual && converged { Some(solver.mild_residual(&traj).map_err(err)?) } else { None };
            let xalpha = if converged { Some(solver.xalpha_norm(&traj).map_err(err)?) } else { None };
            let hypotheses = match check_local_existence(&cfg.triple, cfg.p0, cfg.nonlinearity.kappa) {
                Ok(()) => "satisfied".to_string(),
                Err(e) => e.to_string(),
            };
            let status = match (converged, residual_limit, mild) {
                (false, _, _) => Status::Diverged,
                (true, Some(limit), Some(r)) => verdict(r <= *limit),
                (true, _, _) => Status::Passed,
            };
            let detail = json!({
                "outcome": traj.outcome,
                "iterations": traj.iterations(),
                "contraction_ratios": traj.contraction_ratios(),
                "mild_residual": mild,
                "residual_limit": residual_limit,
                "xalpha_norm": xalpha,
                "local_existence": hypotheses,
            });
            Ok((status, detail))
        }
        Job::Lipschitz { grid, cfg, data, amplitude, perturbation, scales, max_spread } => {
            let w0 = make_initial_data(data, grid).map_err(err)?.scale(Complex64::new(*amplitude, 0.0));
            let pert = make_initial_data(perturbation, grid).map_err(err)?;
            let solver = Solver::new(grid, cfg).map_err(err)?;
            let mut rows = Vec::new();
            for &s in scales {
                let w0p = w0.axpy(Complex64::new(s * amplitude, 0.0), &pert).map_err(err)?;
                match solver.lipschitz_ratio(&w0, &w0p) {
                    Ok(ratio) => rows.push(LipschitzRow { scale: s, ratio }),
                    Err(SolverError::NotConverged { outcome, iterations }) => {
                        out.csv("", &rows)?;
                        let detail = json!({ "scale": s, "outcome": outcome, "iterations": iterations });
                        return Ok((Status::Diverged, detail));
                    }
                    Err(e) => return Err(e.to_string()),
                }
            }
            out.csv("", &rows)?;
            let hi = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
            let lo = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
            let spread = hi / lo;
            Ok((verdict(lo > 0.0 && spread <= *max_spread), json!({ "min_ratio": lo, "max_ratio": hi, "spread": spread, "max_spread": max_spread })))
        }
    }
}

fn calibrated(out: &mut Outputs, ratios: &[f64], slack: f64) -> Result<(Status, Value), String> {
    let half = ratios.len() / 2;
    let rows: Vec<RatioRow> = ratios
        .iter()
        .enumerate()
        .map(|(member, &ratio)| RatioRow { member, role: if member < half { "calibration" } else { "validation" }, ratio })
        .collect();
    out.csv("", &rows)?;
    let bound = empirical_bound(&ratios[..half], &ratios[half..], slack);
    Ok((verdict(bound.pass), serde_json::to_value(bound).map_err(err)?))
}
