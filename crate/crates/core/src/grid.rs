//! Periodic torus grid, unitary discrete Fourier transforms, Fourier
//! multipliers and Riemann-sum `L^p` norms.
//!
//! Points are `x_j = −L/2 + jL/n` along each axis, stored row-major with the
//! last axis fastest. The transform is the unitary DFT, so
//! `Σ|f(x)|²·Δx = Δx·Σ|f̂_k|²` with `Δx = (L/n)^d`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("size mismatch: expected {expected} samples, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("symbol is not finite at xi = {xi:?}: {value}")]
    NonFiniteSymbol { xi: Vec<f64>, value: Complex64 },
    #[error("L^p exponent must satisfy p >= 1, got {p}")]
    InvalidExponent { p: f64 },
    #[error("outside grid resolution: {0}")]
    Resolution(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

static DETERMINISTIC: AtomicBool = AtomicBool::new(true);

/// Forces serial, fixed-order summation in norms (the default).
pub fn set_deterministic_reduction(on: bool) {
    DETERMINISTIC.store(on, Ordering::SeqCst);
}

pub fn deterministic_reduction() -> bool {
    DETERMINISTIC.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusGrid {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub box_len: f64,
}

impl TorusGrid {
    pub fn new(d: usize, n: usize, box_len: f64) -> Result<Self, GridError> {
        let g = Self { d, n, box_len };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(1..=3).contains(&self.d) {
            return Err(GridError::InvalidGrid(format!("dimension must be 1, 2 or 3, got {}", self.d)));
        }
        if self.n < 16 || !self.n.is_power_of_two() {
            return Err(GridError::InvalidGrid(format!("n must be a power of two >= 16, got {}", self.n)));
        }
        if !(self.box_len > 0.0 && self.box_len.is_finite()) {
            return Err(GridError::InvalidGrid(format!("box length must be positive, got {}", self.box_len)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.box_len / self.n as f64
    }

    /// Cell volume `Δx = (L/n)^d`, the Parseval constant.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    pub fn volume(&self) -> f64 {
        self.box_len.powi(self.d as i32)
    }

    /// Fundamental frequency `2π/L`.
    pub fn xi_unit(&self) -> f64 {
        2.0 * PI / self.box_len
    }

    /// Largest resolved radial frequency along an axis, `πn/L`.
    pub fn xi_max(&self) -> f64 {
        PI * self.n as f64 / self.box_len
    }

    /// Signed integer wavenumber of axis position `i`, in `[−n/2, n/2)`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Per-axis positions of a flat index.
    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        for a in (0..self.d).rev() {
            idx[a] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = -0.5 * self.box_len + idx[a] as f64 * self.spacing();
        }
        x
    }

    pub fn frequency(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut xi = [0.0; 3];
        for a in 0..self.d {
            xi[a] = self.xi_unit() * self.wavenumber(idx[a]) as f64;
        }
        xi
    }

    /// `Σ k_a²` over integer wavenumbers.
    pub fn wavenumber_sq(&self, flat: usize) -> u64 {
        let idx = self.unravel(flat);
        (0..self.d).map(|a| self.wavenumber(idx[a]).pow(2) as u64).sum()
    }

    pub fn xi_sq(&self, flat: usize) -> f64 {
        self.xi_unit().powi(2) * self.wavenumber_sq(flat) as f64
    }

    /// Distinct `|k|²` classes shared by every grid with the same `(d, n)`.
    pub fn radial_classes(&self) -> Arc<RadialClasses> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<RadialClasses>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("radial class cache poisoned");
        map.entry((self.d, self.n)).or_insert_with(|| Arc::new(RadialClasses::build(self))).clone()
    }
}

#[derive(Debug)]
pub struct RadialClasses {
    /// Sorted distinct integer `|k|²`.
    pub k_sq: Vec<u64>,
    /// Class index of each mode.
    pub class_of: Vec<u32>,
}

impl RadialClasses {
    fn build(grid: &TorusGrid) -> Self {
        let per_mode: Vec<u64> = (0..grid.len()).map(|i| grid.wavenumber_sq(i)).collect();
        let mut k_sq = per_mode.clone();
        k_sq.sort_unstable();
        k_sq.dedup();
        let lookup: HashMap<u64, u32> = k_sq.iter().enumerate().map(|(i, &k)| (k, i as u32)).collect();
        let class_of = per_mode.iter().map(|k| lookup[k]).collect();
        Self { k_sq, class_of }
    }
}

/// A radial symbol tabulated once per distinct `|ξ|²` on a grid.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    grid: TorusGrid,
    classes: Arc<RadialClasses>,
    values: Vec<Complex64>,
}

impl SymbolTable {
    /// Evaluates `m(|ξ|²)` on every distinct radius, in parallel.
    pub fn radial<F, E>(grid: &TorusGrid, symbol: F) -> Result<Self, E>
    where
        F: Fn(f64) -> Result<Complex64, E> + Sync,
        E: Send,
    {
        let classes = grid.radial_classes();
        let unit_sq = grid.xi_unit().powi(2);
        let values = classes
            .k_sq
            .par_iter()
            .map(|&k| symbol(unit_sq * k as f64))
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Self { grid: *grid, classes, values })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn at_class(&self, class: usize) -> Complex64 {
        self.values[class]
    }

    pub fn at_mode(&self, flat: usize) -> Complex64 {
        self.values[self.classes.class_of[flat] as usize]
    }

    /// Largest symbol modulus.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        for (class, v) in self.values.iter().enumerate() {
            if !(v.re.is_finite() && v.im.is_finite()) {
                let flat = self.classes.class_of.iter().position(|&c| c as usize == class).unwrap_or(0);
                return Err(GridError::NonFiniteSymbol { xi: self.grid.frequency(flat)[..self.grid.d].to_vec(), value: *v });
            }
        }
        Ok(())
    }

    pub fn multiply(&self, coeffs: &mut [Complex64]) {
        let class_of = &self.classes.class_of;
        coeffs.par_iter_mut().enumerate().for_each(|(i, c)| *c *= self.values[class_of[i] as usize]);
    }

    pub fn apply(&self, f: &SpectralField) -> Result<SpectralField, GridError> {
        if f.grid != self.grid {
            return Err(GridError::InvalidGrid("symbol table built for a different grid".into()));
        }
        self.check_finite()?;
        let mut coeffs = f.coefficients().to_vec();
        self.multiply(&mut coeffs);
        SpectralField::from_coefficients(self.grid, coeffs)
    }
}

/// A complex field sampled on a torus grid with lazily cached coefficients.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: TorusGrid,
    values: Vec<Complex64>,
    coeffs: OnceLock<Vec<Complex64>>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl SpectralField {
    pub fn from_values(grid: TorusGrid, values: Vec<Complex64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::SizeMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values, coeffs: OnceLock::new() })
    }

    pub fn from_fn<F: Fn(&[f64]) -> Complex64 + Sync>(grid: TorusGrid, f: F) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.position(i)[..grid.d])).collect();
        Self { grid, values, coeffs: OnceLock::new() }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()], coeffs: OnceLock::new() }
    }

    pub fn from_coefficients(grid: TorusGrid, coeffs: Vec<Complex64>) -> Result<Self, GridError> {
        if coeffs.len() != grid.len() {
            return Err(GridError::SizeMismatch { expected: grid.len(), got: coeffs.len() });
        }
        let mut values = coeffs.clone();
        transform(&grid, &mut values, Direction::Inverse);
        let cache = OnceLock::new();
        let _ = cache.set(coeffs);
        Ok(Self { grid, values, coeffs: cache })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn coefficients(&self) -> &[Complex64] {
        self.coeffs.get_or_init(|| {
            let mut c = self.values.clone();
            transform(&self.grid, &mut c, Direction::Forward);
            c
        })
    }

    pub fn has_cached_coefficients(&self) -> bool {
        self.coeffs.get().is_some()
    }

    pub fn scale(&self, c: Complex64) -> SpectralField {
        let values = self.values.iter().map(|v| v * c).collect();
        let out = Self { grid: self.grid, values, coeffs: OnceLock::new() };
        if let Some(k) = self.coeffs.get() {
            let _ = out.coeffs.set(k.iter().map(|v| v * c).collect());
        }
        out
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: Complex64, other: &SpectralField) -> Result<SpectralField, GridError> {
        if self.grid != other.grid {
            return Err(GridError::SizeMismatch { expected: self.grid.len(), got: other.grid.len() });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(Self { grid: self.grid, values, coeffs: OnceLock::new() })
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField, GridError> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    /// Largest pointwise modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

pub fn to_frequency(f: &SpectralField) -> Vec<Complex64> {
    f.coefficients().to_vec()
}

pub fn to_physical(coeffs: Vec<Complex64>, grid: &TorusGrid) -> Result<SpectralField, GridError> {
    SpectralField::from_coefficients(*grid, coeffs)
}

/// Multiplies the coefficients by `m(ξ)` and transforms back.
pub fn apply_multiplier<F>(f: &SpectralField, m: F) -> Result<SpectralField, GridError>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let grid = f.grid;
    let symbols: Vec<Complex64> = (0..grid.len()).into_par_iter().map(|i| m(&grid.frequency(i)[..grid.d])).collect();
    if let Some(i) = symbols.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(GridError::NonFiniteSymbol { xi: grid.frequency(i)[..grid.d].to_vec(), value: symbols[i] });
    }
    let coeffs = f.coefficients().iter().zip(&symbols).map(|(c, s)| c * s).collect();
    SpectralField::from_coefficients(grid, coeffs)
}

/// Radial multiplier `m(|ξ|²)`, evaluated once per distinct radius.
pub fn apply_radial_multiplier<F>(f: &SpectralField, m: F) -> Result<SpectralField, GridError>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    SymbolTable::radial(&f.grid, |x| Ok::<_, GridError>(m(x)))?.apply(f)
}

/// `(Σ|f|^p Δx)^{1/p}`, or the grid maximum for `p = ∞`.
pub fn lp_norm(f: &SpectralField, p: f64) -> Result<f64, GridError> {
    lp_norm_values(&f.values, f.grid.cell_volume(), p)
}

pub fn lp_norm_values(values: &[Complex64], cell: f64, p: f64) -> Result<f64, GridError> {
    if !(p >= 1.0) {
        return Err(GridError::InvalidExponent { p });
    }
    let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if p.is_infinite() || peak == 0.0 {
        return Ok(peak);
    }
    let term = |v: &Complex64| (v.norm() / peak).powf(p);
    let sum = reduce_sum(values, term);
    Ok(peak * (sum * cell).powf(1.0 / p))
}

/// Sum of `term` over `values`; serial compensated order when the
/// deterministic flag is on, fixed-chunk parallel otherwise.
pub fn reduce_sum<T: Sync, F: Fn(&T) -> f64 + Sync>(values: &[T], term: F) -> f64 {
    if deterministic_reduction() {
        let mut sum = 0.0;
        let mut carry = 0.0;
        for v in values {
            let x = term(v);
            let t = sum + x;
            carry += if f64::abs(sum) >= f64::abs(x) { (sum - t) + x } else { (x - t) + sum };
            sum = t;
        }
        sum + carry
    } else {
        values.par_chunks(4096).map(|c| c.iter().map(&term).sum::<f64>()).sum()
    }
}

/// Zeroes every coefficient with some `|k_a| > n/3` (2/3 rule).
pub fn dealias(grid: &TorusGrid, coeffs: &mut [Complex64]) {
    let cutoff = (grid.n / 3) as i64;
    coeffs.par_iter_mut().enumerate().for_each(|(i, c)| {
        let idx = grid.unravel(i);
        if (0..grid.d).any(|a| grid.wavenumber(idx[a]).abs() > cutoff) {
            *c = Complex64::new(0.0, 0.0);
        }
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `exp(−|x|²/(2w²))` centred in the box.
    Gaussian { width: f64 },
    /// Smooth radial shell supported in `2^{j₀−ε} < |ξ| < 2^{j₀+ε}`, unit `L²` norm.
    Annular { j0: f64, shell_width: f64 },
    /// Gaussian random coefficients on `2^{j_lo} ≤ |ξ| ≤ 2^{j_hi}`, unit `L²` norm.
    RandomBand { seed: u64, j_lo: f64, j_hi: f64 },
}

pub fn make_initial_data(kind: &InitialData, grid: &TorusGrid) -> Result<SpectralField, GridError> {
    grid.validate()?;
    match *kind {
        InitialData::Gaussian { width } => {
            if !(width > 0.0) {
                return Err(GridError::InvalidGrid(format!("gaussian width must be positive, got {width}")));
            }
            let edge = (-(0.5 * grid.box_len).powi(2) / (2.0 * width * width)).exp();
            let tail = (-(grid.xi_max() * width).powi(2) / 2.0).exp();
            if edge > 1e-12 || tail > 1e-12 {
                return Err(GridError::Resolution(format!(
                    "gaussian of width {width} leaves {edge:e} at the box edge and {tail:e} at the top frequency"
                )));
            }
            Ok(SpectralField::from_fn(*grid, |x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0)
            }))
        }
        InitialData::Annular { j0, shell_width } => {
            if !(shell_width > 0.0) {
                return Err(GridError::InvalidGrid(format!("shell width must be positive, got {shell_width}")));
            }
            check_band(grid, j0 - shell_width, j0 + shell_width)?;
            let coeffs: Vec<Complex64> = (0..grid.len())
                .map(|i| {
                    let xi = grid.xi_sq(i).sqrt();
                    if xi == 0.0 {
                        return Complex64::new(0.0, 0.0);
                    }
                    let u = (xi.log2() - j0) / shell_width;
                    if u.abs() < 1.0 {
                        Complex64::new((1.0 - 1.0 / (1.0 - u * u)).exp(), 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            normalized(grid, coeffs, "annular shell")
        }
        InitialData::RandomBand { seed, j_lo, j_hi } => {
            if !(j_lo < j_hi) {
                return Err(GridError::InvalidGrid(format!("random band needs j_lo < j_hi, got {j_lo}, {j_hi}")));
            }
            check_band(grid, j_lo, j_hi)?;
            let (lo, hi) = (2f64.powf(j_lo), 2f64.powf(j_hi));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
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
            normalized(grid, coeffs, "random band")
        }
    }
}

fn check_band(grid: &TorusGrid, j_lo: f64, j_hi: f64) -> Result<(), GridError> {
    let (lo, hi) = (2f64.powf(j_lo), 2f64.powf(j_hi));
    if lo < grid.xi_unit() || hi > grid.xi_max() {
        return Err(GridError::Resolution(format!(
            "band [2^{j_lo}, 2^{j_hi}] = [{lo:.4}, {hi:.4}] is not inside the resolved frequencies [{:.4}, {:.4}]",
            grid.xi_unit(),
            grid.xi_max()
        )));
    }
    Ok(())
}

fn normalized(grid: &TorusGrid, coeffs: Vec<Complex64>, what: &str) -> Result<SpectralField, GridError> {
    let energy: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.cell_volume();
    if energy == 0.0 {
        return Err(GridError::Resolution(format!("{what} contains no grid frequencies")));
    }
    let s = 1.0 / energy.sqrt();
    SpectralField::from_coefficients(*grid, coeffs.into_iter().map(|c| c * s).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub box_len: f64,
    pub time: f64,
    pub tag: String,
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes `values` as little-endian `f32` (re, im) pairs plus a JSON sidecar
/// next to it with extension `.json`.
pub fn write_snapshot(bin: &Path, f: &SpectralField, time: f64, tag: &str) -> Result<(), GridError> {
    let mut bytes = Vec::with_capacity(8 * f.values.len());
    for v in &f.values {
        bytes.extend_from_slice(&(v.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    fs::File::create(bin)?.write_all(&bytes)?;
    let meta = SnapshotMeta { d: f.grid.d, n: f.grid.n, box_len: f.grid.box_len, time, tag: tag.to_string() };
    fs::write(sidecar_path(bin), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn read_snapshot(bin: &Path) -> Result<(SpectralField, SnapshotMeta), GridError> {
    let meta: SnapshotMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(bin))?)?;
    let grid = TorusGrid::new(meta.d, meta.n, meta.box_len)?;
    let mut bytes = Vec::new();
    fs::File::open(bin)?.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * grid.len() {
        return Err(GridError::SizeMismatch { expected: grid.len(), got: bytes.len() / 8 });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Ok((SpectralField::from_values(grid, values)?, meta))
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Direction {
    Forward,
    Inverse,
}

fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, Direction), Arc<dyn Fft<f64>>>)>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = plans.lock().expect("fft plan cache poisoned");
    let (planner, map) = &mut *guard;
    map.entry((n, dir))
        .or_insert_with(|| match dir {
            Direction::Forward => planner.plan_fft_forward(n),
            Direction::Inverse => planner.plan_fft_inverse(n),
        })
        .clone()
}

/// In-place unitary d-dimensional DFT.
fn transform(grid: &TorusGrid, data: &mut [Complex64], dir: Direction) {
    let n = grid.n;
    let fft = plan(n, dir);
    for axis in 0..grid.d {
        let stride = n.pow((grid.d - 1 - axis) as u32);
        if stride == 1 {
            data.par_chunks_mut(n).for_each(|line| fft.process(line));
            continue;
        }
        let block = n * stride;
        let lines = data.len() / n;
        let mut buf = vec![Complex64::new(0.0, 0.0); data.len()];
        buf.par_chunks_mut(n).enumerate().for_each(|(l, line)| {
            let (outer, inner) = (l / stride, l % stride);
            for (k, v) in line.iter_mut().enumerate() {
                *v = data[outer * block + k * stride + inner];
            }
            fft.process(line);
        });
        debug_assert_eq!(lines * n, data.len());
        data.par_chunks_mut(block).enumerate().for_each(|(outer, chunk)| {
            for inner in 0..stride {
                let line = &buf[(outer * stride + inner) * n..][..n];
                for (k, v) in line.iter().enumerate() {
                    chunk[k * stride + inner] = *v;
                }
            }
        });
    }
    let scale = 1.0 / (grid.len() as f64).sqrt();
    data.par_iter_mut().for_each(|v| *v *= scale);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn grid_validation() {
        assert!(TorusGrid::new(1, 12, 1.0).is_err());
        assert!(TorusGrid::new(4, 16, 1.0).is_err());
        assert!(TorusGrid::new(2, 16, 0.0).is_err());
        let g = TorusGrid::new(2, 16, 2.0 * PI).unwrap();
        assert_eq!(g.wavenumber(8), -8);
        assert_eq!(g.wavenumber(7), 7);
        assert_eq!(g.position(0)[..2], [-PI, -PI]);
    }

    #[test]
    fn constant_maps_to_zero_mode() {
        let g = TorusGrid::new(2, 16, 2.0 * PI).unwrap();
        let f = SpectralField::from_fn(g, |_| c(1.0, 0.0));
        let k = f.coefficients();
        assert!((k[0] - c(16.0, 0.0)).norm() < 1e-12);
        assert!(k[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn plane_wave_is_single_mode() {
        let g = TorusGrid::new(2, 16, 2.0 * PI).unwrap();
        let f = SpectralField::from_fn(g, |x| Complex64::from_polar(1.0, x[0]));
        let k = f.coefficients();
        let hot: Vec<usize> = (0..g.len()).filter(|&i| k[i].norm() > 1e-10).collect();
        // first axis carries the wave: flat index n·1 + 0
        assert_eq!(hot, vec![16]);
    }

    #[test]
    fn three_dimensional_round_trip() {
        let g = TorusGrid::new(3, 16, 3.0).unwrap();
        let f = SpectralField::from_fn(g, |x| c(x[0].sin() * x[2], x[1].cos()));
        let back = SpectralField::from_coefficients(g, f.coefficients().to_vec()).unwrap();
        let err = f.values().iter().zip(back.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn norms_of_simple_fields() {
        let g = TorusGrid::new(2, 32, 3.0).unwrap();
        let one = SpectralField::from_fn(g, |_| c(1.0, 0.0));
        assert!((lp_norm(&one, 2.0).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(lp_norm(&SpectralField::zeros(g), 3.0).unwrap(), 0.0);
        assert!(matches!(lp_norm(&one, 0.5), Err(GridError::InvalidExponent { .. })));
        assert_eq!(lp_norm(&one, f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn nonfinite_symbol_names_frequency() {
        let g = TorusGrid::new(1, 16, 2.0 * PI).unwrap();
        let f = SpectralField::from_fn(g, |_| c(1.0, 0.0));
        let err = apply_multiplier(&f, |xi| c(1.0 / xi[0], 0.0)).unwrap_err();
        match err {
            GridError::NonFiniteSymbol { xi, .. } => assert_eq!(xi, vec![0.0]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn dealias_keeps_low_modes() {
        let g = TorusGrid::new(1, 48usize.next_power_of_two(), 1.0).unwrap();
        let mut k = vec![c(1.0, 0.0); g.len()];
        dealias(&g, &mut k);
        let kept = k.iter().filter(|v| v.norm() > 0.0).count();
        assert_eq!(kept, 2 * (g.n / 3) + 1);
    }
}
