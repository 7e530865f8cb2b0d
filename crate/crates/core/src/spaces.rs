//! Littlewood–Paley blocks and φ-Besov, φ-Triebel–Lizorkin and φ-Bessel
//! potential norms on a torus grid.
//!
//! The bump is `ψ(ξ) = S(½ + (½ − |log₂|ξ||)/w)` with `S` the `e^{−1/x}`
//! smooth step and transition width `w ∈ (0, 1]`. Since `S(a) + S(1 − a) = 1`,
//! the dilates `ψ(2^{−j}ξ)` sum to one exactly; `w = 1` gives the full
//! support `½ < |ξ| < 2`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::BernsteinFunction;
use crate::grid::{self, GridError, InitialData, SpectralField, TorusGrid};

/// Relations among exponents are checked to this absolute tolerance.
pub const RELATION_TOL: f64 = 1e-10;
/// Minimum span `j_max − j_min` for Besov and Triebel norms.
pub const MIN_RESOLVED_SPAN: i32 = 6;

#[derive(Debug, Error)]
pub enum SpacesError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("block j = {j} is outside the resolved range [{j_min}, {j_max}]")]
    BlockOutOfRange { j: i32, j_min: i32, j_max: i32 },
    #[error("resolved range [{j_min}, {j_max}] spans fewer than {MIN_RESOLVED_SPAN} octaves")]
    InadequateResolution { j_min: i32, j_max: i32 },
    #[error("invalid space parameters: {0}")]
    InvalidSpec(String),
    #[error("relation violated: {0}")]
    Relation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Besov,
    Triebel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub s: f64,
    pub p: f64,
    #[serde(with = "exponent")]
    pub q: f64,
    pub homogeneous: bool,
    pub phi: BernsteinFunction,
    pub scale: Scale,
}

impl SpaceSpec {
    pub fn besov(s: f64, p: f64, q: f64, homogeneous: bool, phi: BernsteinFunction) -> Result<Self, SpacesError> {
        let spec = Self { s, p, q, homogeneous, phi, scale: Scale::Besov };
        spec.validate()?;
        Ok(spec)
    }

    pub fn triebel(s: f64, p: f64, q: f64, homogeneous: bool, phi: BernsteinFunction) -> Result<Self, SpacesError> {
        let spec = Self { s, p, q, homogeneous, phi, scale: Scale::Triebel };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SpacesError> {
        if !(self.p > 1.0 && self.p < f64::INFINITY) {
            return Err(SpacesError::InvalidSpec(format!("p must lie in (1, inf), got {}", self.p)));
        }
        if !(self.q >= 1.0) {
            return Err(SpacesError::InvalidSpec(format!("q must lie in [1, inf], got {}", self.q)));
        }
        if !self.s.is_finite() {
            return Err(SpacesError::InvalidSpec(format!("s must be finite, got {}", self.s)));
        }
        self.phi.validate().map_err(|e| SpacesError::InvalidSpec(e.to_string()))
    }

    pub fn with_s(mut self, s: f64) -> Self {
        self.s = s;
        self
    }

    /// `δs − d/p`, the quantity preserved by the embeddings.
    pub fn scaling(&self, d: usize) -> f64 {
        self.phi.delta * self.s - d as f64 / self.p
    }
}

/// Serde helper accepting a number or the string `"inf"`.
pub mod exponent {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "inf" || t == "infinity" => Ok(f64::INFINITY),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / x).exp();
        let b = (-1.0 / (1.0 - x)).exp();
        a / (a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicPartition {
    pub grid: TorusGrid,
    /// Transition width in octaves, in `(0, 1]`.
    pub width: f64,
    pub j_min_homogeneous: i32,
    pub j_min: i32,
    pub j_max: i32,
}

impl DyadicPartition {
    pub fn new(grid: &TorusGrid) -> Result<Self, SpacesError> {
        Self::with_width(grid, 1.0)
    }

    pub fn with_width(grid: &TorusGrid, width: f64) -> Result<Self, SpacesError> {
        grid.validate()?;
        if !(width > 0.0 && width <= 1.0) {
            return Err(SpacesError::InvalidSpec(format!("transition width must lie in (0, 1], got {width}")));
        }
        let j_max = grid.xi_max().log2().floor() as i32 - 1;
        let j_min_homogeneous = grid.xi_unit().log2().ceil() as i32 + 1;
        Ok(Self { grid: *grid, width, j_min_homogeneous, j_min: 1, j_max })
    }

    /// `ψ(2^{−j}ξ)` as a function of `|ξ|`.
    pub fn bump(&self, j: i32, xi: f64) -> f64 {
        if xi <= 0.0 {
            return 0.0;
        }
        let u = xi.log2() - j as f64;
        smooth_step(0.5 + (0.5 - u.abs()) / self.width)
    }

    /// `χ = 1 − Σ_{j≥1} ψ_j`.
    pub fn low_pass(&self, xi: f64) -> f64 {
        if xi <= 1.0 {
            1.0
        } else {
            self.bump(0, xi)
        }
    }

    pub fn range(&self, homogeneous: bool) -> (i32, i32) {
        (if homogeneous { self.j_min_homogeneous } else { self.j_min }, self.j_max)
    }

    fn check_block(&self, j: i32) -> Result<(), SpacesError> {
        let lo = self.j_min_homogeneous.min(self.j_min);
        if j < lo || j > self.j_max {
            return Err(SpacesError::BlockOutOfRange { j, j_min: lo, j_max: self.j_max });
        }
        Ok(())
    }

    /// Fails unless the resolved range covers at least [`MIN_RESOLVED_SPAN`] octaves.
    pub fn check_span(&self, homogeneous: bool) -> Result<(), SpacesError> {
        let (j_min, j_max) = self.range(homogeneous);
        if j_max - j_min < MIN_RESOLVED_SPAN {
            return Err(SpacesError::InadequateResolution { j_min, j_max });
        }
        Ok(())
    }
}

fn radial_filter<F: Fn(f64) -> f64 + Sync>(f: &SpectralField, filter: F) -> Result<SpectralField, SpacesError> {
    Ok(grid::apply_radial_multiplier(f, |x2| Complex64::new(filter(x2.sqrt()), 0.0))?)
}

/// `Δ_j f`.
pub fn lp_block(f: &SpectralField, j: i32, part: &DyadicPartition) -> Result<SpectralField, SpacesError> {
    part.check_block(j)?;
    radial_filter(f, |xi| part.bump(j, xi))
}

/// `χ ⋆ f`.
pub fn low_pass(f: &SpectralField, part: &DyadicPartition) -> Result<SpectralField, SpacesError> {
    radial_filter(f, |xi| part.low_pass(xi))
}

/// All blocks of one field, shared by several norms.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub homogeneous: bool,
    pub low: Option<SpectralField>,
    pub blocks: Vec<(i32, SpectralField)>,
}

pub fn decompose(f: &SpectralField, part: &DyadicPartition, homogeneous: bool) -> Result<Decomposition, SpacesError> {
    let (j_min, j_max) = part.range(homogeneous);
    let blocks = (j_min..=j_max)
        .into_par_iter()
        .map(|j| lp_block(f, j, part).map(|b| (j, b)))
        .collect::<Result<Vec<_>, _>>()?;
    let low = if homogeneous { None } else { Some(low_pass(f, part)?) };
    Ok(Decomposition { homogeneous, low, blocks })
}

fn weight(spec: &SpaceSpec, j: i32) -> f64 {
    if spec.s == 0.0 {
        return 1.0;
    }
    spec.phi.eval_unchecked(4f64.powi(j)).powf(0.5 * spec.s)
}

fn lq_sum(terms: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        terms.fold(0.0, f64::max)
    } else {
        let v: Vec<f64> = terms.collect();
        let peak = v.iter().copied().fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        peak * v.iter().map(|t| (t / peak).powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

pub fn besov_from(dec: &Decomposition, spec: &SpaceSpec) -> Result<f64, SpacesError> {
    let low = match &dec.low {
        Some(l) => grid::lp_norm(l, spec.p)?,
        None => 0.0,
    };
    let norms = dec
        .blocks
        .iter()
        .map(|(j, b)| Ok(weight(spec, *j) * grid::lp_norm(b, spec.p)?))
        .collect::<Result<Vec<f64>, SpacesError>>()?;
    Ok(low + lq_sum(norms.into_iter(), spec.q))
}

pub fn triebel_from(dec: &Decomposition, spec: &SpaceSpec) -> Result<f64, SpacesError> {
    let low = match &dec.low {
        Some(l) => grid::lp_norm(l, spec.p)?,
        None => 0.0,
    };
    let Some((_, first)) = dec.blocks.first() else {
        return Ok(low);
    };
    let grid = *first.grid();
    let weights: Vec<f64> = dec.blocks.iter().map(|(j, _)| weight(spec, *j)).collect();
    let pointwise: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let terms = dec.blocks.iter().zip(&weights).map(|((_, b), w)| w * b.values()[i].norm());
            Complex64::new(lq_sum(terms, spec.q), 0.0)
        })
        .collect();
    Ok(low + grid::lp_norm_values(&pointwise, grid.cell_volume(), spec.p)?)
}

fn prepare(f: &SpectralField, spec: &SpaceSpec, part: &DyadicPartition) -> Result<Decomposition, SpacesError> {
    spec.validate()?;
    if f.grid() != &part.grid {
        return Err(SpacesError::InvalidSpec("field and partition live on different grids".into()));
    }
    part.check_span(spec.homogeneous)?;
    decompose(f, part, spec.homogeneous)
}

/// `‖χ⋆f‖_p + ‖{φ(2^{2j})^{s/2}‖Δ_j f‖_p}_j‖_{ℓ^q}`, with the low-pass term
/// dropped for homogeneous specs.
pub fn besov_norm(f: &SpectralField, spec: &SpaceSpec, part: &DyadicPartition) -> Result<f64, SpacesError> {
    besov_from(&prepare(f, spec, part)?, spec)
}

/// `‖χ⋆f‖_p + ‖‖{φ(2^{2j})^{s/2}|Δ_j f|}_j‖_{ℓ^q}‖_{L^p}`.
pub fn triebel_norm(f: &SpectralField, spec: &SpaceSpec, part: &DyadicPartition) -> Result<f64, SpacesError> {
    triebel_from(&prepare(f, spec, part)?, spec)
}

/// Norm in the scale carried by `spec.scale`.
pub fn space_norm(f: &SpectralField, spec: &SpaceSpec, part: &DyadicPartition) -> Result<f64, SpacesError> {
    match spec.scale {
        Scale::Besov => besov_norm(f, spec, part),
        Scale::Triebel => triebel_norm(f, spec, part),
    }
}

/// `(I + φ(−Δ))^{ν/2} f`.
pub fn bessel_potential(f: &SpectralField, nu: f64, phi: &BernsteinFunction) -> Result<SpectralField, SpacesError> {
    Ok(grid::apply_radial_multiplier(f, |x2| Complex64::new((1.0 + phi.eval_unchecked(x2)).powf(0.5 * nu), 0.0))?)
}

pub fn sobolev_phi_norm(f: &SpectralField, s: f64, p: f64, phi: &BernsteinFunction) -> Result<f64, SpacesError> {
    if s == 0.0 {
        return Ok(grid::lp_norm(f, p)?);
    }
    Ok(grid::lp_norm(&bessel_potential(f, s, phi)?, p)?)
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Validates the embedding relations between two specs.
pub fn embedding_relation(source: &SpaceSpec, target: &SpaceSpec, d: usize) -> Result<(), SpacesError> {
    if source.scale != target.scale || source.homogeneous != target.homogeneous {
        return Err(SpacesError::Relation("source and target must share scale and homogeneity".into()));
    }
    if source.phi != target.phi {
        return Err(SpacesError::Relation("source and target must share phi".into()));
    }
    let gap = source.scaling(d) - target.scaling(d);
    if gap.abs() > RELATION_TOL {
        return Err(SpacesError::Relation(format!(
            "delta*s0 - d/p0 = delta*s - d/p fails: {} vs {}",
            source.scaling(d),
            target.scaling(d)
        )));
    }
    match source.scale {
        Scale::Besov => {
            if source.p > target.p {
                return Err(SpacesError::Relation(format!("p0 <= p fails: {} > {}", source.p, target.p)));
            }
            if source.q > target.q {
                return Err(SpacesError::Relation(format!("q0 <= q fails: {} > {}", source.q, target.q)));
            }
        }
        Scale::Triebel => {
            if source.p >= target.p && source != target {
                return Err(SpacesError::Relation(format!("p0 < p fails: {} >= {}", source.p, target.p)));
            }
        }
    }
    Ok(())
}

/// `‖f‖_target / ‖f‖_source` after checking the embedding relations.
pub fn check_embedding(
    f: &SpectralField,
    source: &SpaceSpec,
    target: &SpaceSpec,
    part: &DyadicPartition,
) -> Result<f64, SpacesError> {
    embedding_relation(source, target, f.grid().d)?;
    let dec = prepare(f, source, part)?;
    let norm = |spec: &SpaceSpec| match spec.scale {
        Scale::Besov => besov_from(&dec, spec),
        Scale::Triebel => triebel_from(&dec, spec),
    };
    Ok(ratio(norm(target)?, norm(source)?))
}

/// Validates the three Gagliardo–Nirenberg conditions.
pub fn gn_relation(target: &SpaceSpec, end0: &SpaceSpec, end1: &SpaceSpec, theta: f64, d: usize) -> Result<(), SpacesError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(SpacesError::Relation(format!("theta must lie in (0, 1), got {theta}")));
    }
    for (name, spec) in [("target", target), ("end0", end0), ("end1", end1)] {
        if spec.scale != Scale::Triebel {
            return Err(SpacesError::Relation(format!("{name} must be a Triebel-Lizorkin space")));
        }
        if spec.homogeneous != target.homogeneous || spec.phi != target.phi {
            return Err(SpacesError::Relation(format!("{name} must share phi and homogeneity with the target")));
        }
    }
    if end0.q.is_finite() || end1.q.is_finite() {
        return Err(SpacesError::Relation("both end spaces need q = inf".into()));
    }
    if target.q.is_infinite() {
        return Err(SpacesError::Relation("target q must be finite".into()));
    }
    let lhs = target.scaling(d);
    let rhs = theta * end0.scaling(d) + (1.0 - theta) * end1.scaling(d);
    if (lhs - rhs).abs() > RELATION_TOL {
        return Err(SpacesError::Relation(format!(
            "condition 1 (delta*s - d/p = theta(delta*s0 - d/p0) + (1-theta)(delta*s1 - d/p1)) fails: {lhs} vs {rhs}"
        )));
    }
    let mix = theta * end0.s + (1.0 - theta) * end1.s;
    if target.s > mix + RELATION_TOL {
        return Err(SpacesError::Relation(format!(
            "condition 2 (s <= theta*s0 + (1-theta)*s1) fails: {} > {mix}",
            target.s
        )));
    }
    if (target.s - mix).abs() <= RELATION_TOL && (end0.s - end1.s).abs() <= RELATION_TOL {
        return Err(SpacesError::Relation("condition 3 (s0 != s1 when s = theta*s0 + (1-theta)*s1) fails".into()));
    }
    Ok(())
}

/// `‖f‖_target / (‖f‖_end0^θ ‖f‖_end1^{1−θ})`.
pub fn check_gn(
    f: &SpectralField,
    target: &SpaceSpec,
    end0: &SpaceSpec,
    end1: &SpaceSpec,
    theta: f64,
    part: &DyadicPartition,
) -> Result<f64, SpacesError> {
    gn_relation(target, end0, end1, theta, f.grid().d)?;
    let dec = prepare(f, target, part)?;
    let num = triebel_from(&dec, target)?;
    let den = triebel_from(&dec, end0)?.powf(theta) * triebel_from(&dec, end1)?.powf(1.0 - theta);
    Ok(ratio(num, den))
}

/// Seeded family of band-limited fields: each member draws its own sub-band
/// (at least half an octave wide) of `[j_lo, j_hi]`.
pub fn random_family(grid: &TorusGrid, seed: u64, count: usize, j_lo: f64, j_hi: f64) -> Result<Vec<SpectralField>, SpacesError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<InitialData> = (0..count)
        .map(|_| {
            let span = j_hi - j_lo;
            let width = rng.random_range(0.5f64.min(span)..=span);
            let start = j_lo + rng.random_range(0.0..=(span - width));
            InitialData::RandomBand { seed: rng.random(), j_lo: start, j_hi: start + width }
        })
        .collect();
    specs
        .par_iter()
        .map(|k| grid::make_initial_data(k, grid).map_err(SpacesError::from))
        .collect()
}

/// Calibration/validation comparison of empirical constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalBound {
    pub calibration_max: f64,
    pub validation_max: f64,
    pub slack: f64,
    pub pass: bool,
}

pub fn empirical_bound(calibration: &[f64], validation: &[f64], slack: f64) -> EmpiricalBound {
    let calibration_max = calibration.iter().copied().fold(0.0, f64::max);
    let validation_max = validation.iter().copied().fold(0.0, f64::max);
    let pass = calibration_max.is_finite() && validation_max.is_finite() && validation_max <= slack * calibration_max;
    EmpiricalBound { calibration_max, validation_max, slack, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> TorusGrid {
        TorusGrid::new(1, 512, 16.0 * std::f64::consts::PI).unwrap()
    }

    #[test]
    fn partition_of_unity_and_support() {
        let part = DyadicPartition::new(&grid1()).unwrap();
        for k in 1..2000 {
            let xi = 2f64.powf(part.j_min_homogeneous as f64) * (k as f64 / 2000.0 * 63.0 + 1.0);
            if xi > 2f64.powi(part.j_max) {
                break;
            }
            let total: f64 = (part.j_min_homogeneous - 1..=part.j_max + 1).map(|j| part.bump(j, xi)).sum();
            assert!((total - 1.0).abs() < 1e-14, "{xi}: {total}");
        }
        assert_eq!(part.bump(3, 4.0), 0.0);
        assert_eq!(part.bump(3, 16.0), 0.0);
        assert!(part.bump(3, 4.1) > 0.0);
        assert_eq!(part.bump(3, 8.0), 1.0);
    }

    #[test]
    fn resolved_range() {
        let part = DyadicPartition::new(&grid1()).unwrap();
        assert_eq!((part.j_min_homogeneous, part.j_max), (-2, 4));
        assert_eq!(part.range(false), (1, 4));
    }

    #[test]
    fn narrow_transition_still_partitions() {
        let part = DyadicPartition::with_width(&grid1(), 0.2).unwrap();
        for xi in [0.3, 0.707, 1.0, 1.41, 2.9, 5.0] {
            let total: f64 = (-4..=6).map(|j| part.bump(j, xi)).sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
        assert_eq!(part.bump(0, 1.25), 1.0);
    }

    #[test]
    fn exponent_serde() {
        #[derive(Deserialize, Serialize)]
        struct W {
            #[serde(with = "exponent")]
            q: f64,
        }
        let w: W = serde_json::from_str(r#"{"q": "inf"}"#).unwrap();
        assert!(w.q.is_infinite());
        assert_eq!(serde_json::to_string(&W { q: f64::INFINITY }).unwrap(), r#"{"q":"inf"}"#);
        assert!(serde_json::from_str::<W>(r#"{"q": "many"}"#).is_err());
    }
}
