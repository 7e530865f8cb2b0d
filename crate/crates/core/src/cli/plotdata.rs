use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::suite::{ExperimentManifest, ExperimentRecord, MANIFEST_FILE};
use super::CliError;
use crate::operators::least_squares_slope;

pub const PLOT_DIR: &str = "plot";

#[derive(Deserialize)]
struct NormRow {
    t: f64,
    norm: f64,
}

#[derive(Serialize)]
struct LogLogRow {
    log10_t: f64,
    log10_norm: f64,
}

#[derive(Deserialize)]
struct ProbeIn {
    t: f64,
    sup_ratio: f64,
    min_ratio: f64,
    symbol_max: f64,
}

#[derive(Serialize)]
struct ProbeOut {
    log10_t: f64,
    sup_ratio: f64,
    min_ratio: f64,
    symbol_max: f64,
}

#[derive(Deserialize)]
struct IterationIn {
    iteration: usize,
    distance: f64,
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct IterationOut {
    iteration: usize,
    log10_distance: f64,
    ratio: Option<f64>,
}

#[derive(Deserialize)]
struct CaputoIn {
    alpha: f64,
    lambda: f64,
    m: usize,
    residual: f64,
}

#[derive(Serialize)]
struct CaputoOut {
    alpha: f64,
    lambda: f64,
    log10_m: f64,
    log10_residual: f64,
}

#[derive(Deserialize)]
struct LipschitzIn {
    scale: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct LipschitzOut {
    log10_scale: f64,
    ratio: f64,
}

/// Writes plotting tables for every plottable experiment in `results_dir` into
/// `results_dir/plot/` and returns their paths.
pub fn emit_plotdata(results_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !results_dir.join(MANIFEST_FILE).is_file() {
        return Err(CliError::MissingResults { dir: results_dir.into(), expected: vec![MANIFEST_FILE.into()] });
    }
    let manifest = ExperimentManifest::read(results_dir)?;
    let missing: Vec<String> = manifest
        .results
        .iter()
        .flat_map(|r| r.files.iter())
        .filter(|f| !results_dir.join(f).is_file())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingResults { dir: results_dir.into(), expected: missing });
    }
    let plot = results_dir.join(PLOT_DIR);
    fs::create_dir_all(&plot).map_err(|source| CliError::Io { path: plot.clone(), source })?;
    let mut written = Vec::new();
    for rec in &manifest.results {
        emit_one(results_dir, &plot, rec, &mut written)?;
    }
    Ok(written)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Csv { path: path.into(), source: e })?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| CliError::Csv { path: path.into(), source: e })
}

fn write_rows<T: Serialize>(path: PathBuf, rows: &[T], written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let csv_err = |e| CliError::Csv { path: path.clone(), source: e };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io { path: path.clone(), source })?;
    written.push(path);
    Ok(())
}

fn emit_one(dir: &Path, plot: &Path, rec: &ExperimentRecord, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let name = &rec.name;
    let main = dir.join(format!("{name}.csv"));
    match rec.target.as_str() {
        "operators.decay_fit" if main.is_file() => {
            let rows: Vec<NormRow> = read_rows(&main)?;
            let pairs: Vec<LogLogRow> = rows
                .iter()
                .filter(|r| r.t > 0.0 && r.norm > 0.0)
                .map(|r| LogLogRow { log10_t: r.t.log10(), log10_norm: r.norm.log10() })
                .collect();
            write_rows(plot.join(format!("{name}_loglog.csv")), &pairs, written)?;
            let d = &rec.detail;
            let (lo, hi) = (d["window"][0].as_f64().unwrap_or(f64::NAN), d["window"][1].as_f64().unwrap_or(f64::NAN));
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs
                .iter()
                .filter(|p| p.log10_t >= lo.log10() - 1e-12 && p.log10_t <= hi.log10() + 1e-12)
                .map(|p| (p.log10_t, p.log10_norm))
                .unzip();
            let intercept = if xs.len() >= 2 {
                let slope = least_squares_slope(&xs, &ys);
                let n = xs.len() as f64;
                ys.iter().sum::<f64>() / n - slope * xs.iter().sum::<f64>() / n
            } else {
                f64::NAN
            };
            let meta = json!({
                "experiment": name,
                "slope_hat": d["slope_hat"],
                "slope_theory": d["slope_theory"],
                "intercept_log10": finite_or_null(intercept),
                "window_log10_t": [lo.log10(), hi.log10()],
                "rel_err": d["rel_err"],
                "pass": d["pass"],
            });
            let path = plot.join(format!("{name}_fit.json"));
            let text = serde_json::to_string_pretty(&meta).map_err(CliError::Json)? + "\n";
            fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
            written.push(path);
        }
        "operators.multiplier_bound_probe" if main.is_file() => {
            let rows: Vec<ProbeIn> = read_rows(&main)?;
            let out: Vec<ProbeOut> = rows
                .iter()
                .map(|r| ProbeOut { log10_t: r.t.log10(), sup_ratio: r.sup_ratio, min_ratio: r.min_ratio, symbol_max: r.symbol_max })
                .collect();
            write_rows(plot.join(format!("{name}_probe.csv")), &out, written)?;
        }
        "mlf.caputo_mode_residual" if main.is_file() => {
            let rows: Vec<CaputoIn> = read_rows(&main)?;
            let out: Vec<CaputoOut> = rows
                .iter()
                .map(|r| CaputoOut { alpha: r.alpha, lambda: r.lambda, log10_m: (r.m as f64).log10(), log10_residual: r.residual.log10() })
                .collect();
            write_rows(plot.join(format!("{name}_loglog.csv")), &out, written)?;
        }
        "solver.picard_solve" => {
            let conv = dir.join(format!("{name}_convergence.csv"));
            if conv.is_file() {
                let rows: Vec<IterationIn> = read_rows(&conv)?;
                let out: Vec<IterationOut> = rows
                    .iter()
                    .map(|r| IterationOut { iteration: r.iteration, log10_distance: r.distance.log10(), ratio: r.ratio })
                    .collect();
                write_rows(plot.join(format!("{name}_convergence.csv")), &out, written)?;
            }
        }
        "solver.data_lipschitz_probe" if main.is_file() => {
            let rows: Vec<LipschitzIn> = read_rows(&main)?;
            let out: Vec<LipschitzOut> = rows.iter().map(|r| LipschitzOut { log10_scale: r.scale.log10(), ratio: r.ratio }).collect();
            write_rows(plot.join(format!("{name}_lipschitz.csv")), &out, written)?;
        }
        _ => {}
    }
    Ok(())
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}
