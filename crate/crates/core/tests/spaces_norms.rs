use std::f64::consts::PI;

use fracspec::bernstein::BernsteinFunction;
use fracspec::grid::{self, InitialData, SpectralField, TorusGrid};
use fracspec::spaces::*;
use num_complex::Complex64;

fn grid() -> TorusGrid {
    TorusGrid::new(1, 512, 2.0 * PI).unwrap()
}

fn lap() -> BernsteinFunction {
    BernsteinFunction::power(1.0).unwrap()
}

fn max_diff(a: &SpectralField, b: &SpectralField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn shell(j0: f64) -> SpectralField {
    grid::make_initial_data(&InitialData::Annular { j0, shell_width: 0.1 }, &grid()).unwrap()
}

#[test]
fn disjoint_blocks_vanish() {
    let part = DyadicPartition::new(&grid()).unwrap();
    let f = shell(4.0);
    for j in [2, 6] {
        let b = lp_block(&f, j, &part).unwrap();
        assert!(b.values().iter().all(|v| *v == Complex64::new(0.0, 0.0)), "j = {j}");
    }
    assert!(matches!(lp_block(&f, 9, &part), Err(SpacesError::BlockOutOfRange { .. })));
    let zero = SpectralField::zeros(grid());
    assert_eq!(lp_block(&zero, 3, &part).unwrap().max_abs(), 0.0);
}

#[test]
fn blocks_reconstruct_band_limited_data() {
    let part = DyadicPartition::new(&grid()).unwrap();
    let f = grid::make_initial_data(&InitialData::RandomBand { seed: 7, j_lo: 0.0, j_hi: 6.5 }, &grid()).unwrap();
    let dec = decompose(&f, &part, false).unwrap();
    let mut sum = dec.low.clone().unwrap();
    for (_, b) in &dec.blocks {
        sum = sum.axpy(Complex64::new(1.0, 0.0), b).unwrap();
    }
    assert!(max_diff(&sum, &f) < 1e-10 * f.max_abs());
}

#[test]
fn besov_homogeneity_and_zero() {
    let part = DyadicPartition::new(&grid()).unwrap();
    let spec = SpaceSpec::besov(0.7, 3.0, 2.0, false, lap()).unwrap();
    let f = grid::make_initial_data(&InitialData::RandomBand { seed: 3, j_lo: 1.0, j_hi: 6.0 }, &grid()).unwrap();
    let a = besov_norm(&f, &spec, &part).unwrap();
    let b = besov_norm(&f.scale(Complex64::new(0.0, -2.5)), &spec, &part).unwrap();
    assert!((b / a - 2.5).abs() < 1e-12);
    assert_eq!(besov_norm(&SpectralField::zeros(grid()), &spec, &part).unwrap(), 0.0);
    assert_eq!(triebel_norm(&SpectralField::zeros(grid()), &spec, &part).unwrap(), 0.0);
}

#[test]
fn inadequate_resolution_is_rejected() {
    let coarse = TorusGrid::new(1, 64, 2.0 * PI).unwrap();
    let part = DyadicPartition::new(&coarse).unwrap();
    let spec = SpaceSpec::besov(0.0, 2.0, 2.0, false, lap()).unwrap();
    let f = SpectralField::zeros(coarse);
    assert!(matches!(besov_norm(&f, &spec, &part), Err(SpacesError::InadequateResolution { .. })));
}

#[test]
fn single_shell_norms() {
    let part = DyadicPartition::new(&grid()).unwrap();
    let phi = BernsteinFunction::power(0.5).unwrap();
    let f = shell(4.0);
    for p in [2.0, 4.0] {
        let b = SpaceSpec::besov(1.5, p, f64::INFINITY, true, phi).unwrap();
        let expected = phi.eval(4f64.powi(4)).unwrap().powf(0.75) * grid::lp_norm(&f, p).unwrap();
        let got = besov_norm(&f, &b, &part).unwrap();
        assert!((got / expected - 1.0).abs() < 0.05, "p={p}: {got} vs {expected}");
        let t = SpaceSpec::triebel(1.5, p, 2.0, true, phi).unwrap();
        let tri = triebel_norm(&f, &t, &part).unwrap();
        assert!((tri / got - 1.0).abs() < 0.05, "p={p}: {tri} vs {got}");
    }
}

#[test]
fn square_function_matches_l2() {
    // the full-width bump only gives Σψ_j² ∈ [1/2, 1]
    let part = DyadicPartition::with_width(&grid(), 0.1).unwrap();
    let spec = SpaceSpec::triebel(0.0, 2.0, 2.0, true, lap()).unwrap();
    for f in random_family(&grid(), 11, 20, 1.0, 6.5).unwrap() {
        let t = triebel_norm(&f, &spec, &part).unwrap();
        let l2 = grid::lp_norm(&f, 2.0).unwrap();
        assert!((t / l2 - 1.0).abs() < 0.03, "{t} vs {l2}");
    }
}

#[test]
fn bessel_potential_pairs() {
    let phi = BernsteinFunction::relativistic(0.5, 1.0).unwrap();
    let f = grid::make_initial_data(&InitialData::RandomBand { seed: 5, j_lo: 0.0, j_hi: 7.0 }, &grid()).unwrap();
    assert!(max_diff(&bessel_potential(&f, 0.0, &phi).unwrap(), &f) < 1e-15);
    let round = bessel_potential(&bessel_potential(&f, 1.3, &phi).unwrap(), -1.3, &phi).unwrap();
    assert!(max_diff(&round, &f) < 1e-12 * f.max_abs());
    let k = 5.0;
    let wave = SpectralField::from_fn(grid(), |x| Complex64::from_polar(1.0, k * x[0]));
    let scaled = bessel_potential(&wave, 2.0, &phi).unwrap();
    let factor = 1.0 + phi.eval(k * k).unwrap();
    assert!(max_diff(&scaled, &wave.scale(Complex64::new(factor, 0.0))) < 1e-11);
}

#[test]
fn sobolev_norm_basics() {
    let phi = BernsteinFunction::power(0.5).unwrap();
    let f = grid::make_initial_data(&InitialData::RandomBand { seed: 9, j_lo: 1.0, j_hi: 6.0 }, &grid()).unwrap();
    assert_eq!(sobolev_phi_norm(&f, 0.0, 3.0, &phi).unwrap(), grid::lp_norm(&f, 3.0).unwrap());
    assert_eq!(sobolev_phi_norm(&SpectralField::zeros(grid()), 1.0, 2.0, &phi).unwrap(), 0.0);
}

#[test]
fn sobolev_and_triebel_are_comparable_at_p2() {
    let phi = BernsteinFunction::power(0.5).unwrap();
    let part = DyadicPartition::with_width(&grid(), 0.2).unwrap();
    let spec = SpaceSpec::triebel(1.0, 2.0, 2.0, false, phi).unwrap();
    let ratios: Vec<f64> = random_family(&grid(), 21, 30, 1.5, 6.5)
        .unwrap()
        .iter()
        .map(|f| sobolev_phi_norm(f, 1.0, 2.0, &phi).unwrap() / triebel_norm(f, &spec, &part).unwrap())
        .collect();
    let c = ratios.iter().sum::<f64>() / ratios.len() as f64;
    for r in &ratios {
        assert!((r / c - 1.0).abs() < 0.10, "{r} vs fitted {c}");
    }
}

#[test]
fn embedding_examples() {
    let part = DyadicPartition::new(&grid()).unwrap();
    let phi = BernsteinFunction::power(0.5).unwrap();
    let source = SpaceSpec::besov(1.0, 2.0, 2.0, true, phi).unwrap();
    let f = shell(3.0);
    assert!((check_embedding(&f, &source, &source, &part).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(check_embedding(&SpectralField::zeros(grid()), &source, &source, &part).unwrap(), 0.0);
    // δ = 1/2, d = 1: 1/p = 1/2 − (1/2)(1 − 1/2) gives p = 4
    let target = SpaceSpec::besov(0.5, 4.0, 2.0, true, phi).unwrap();
    let family = random_family(&grid(), 1, 100, 1.0, 6.5).unwrap();
    let ratios: Vec<f64> = family.iter().map(|f| check_embedding(f, &source, &target, &part).unwrap()).collect();
    let bound = empirical_bound(&ratios[..50], &ratios[50..], 1.2);
    assert!(bound.pass, "{bound:?}");
    let wrong = SpaceSpec::besov(0.5, 3.0, 2.0, true, phi).unwrap();
    let err = check_embedding(&f, &source, &wrong, &part).unwrap_err().to_string();
    assert!(err.contains("delta*s0 - d/p0"), "{err}");
    let backwards = SpaceSpec::besov(1.0, 2.0, 1.0, true, phi).unwrap();
    let err = check_embedding(&f, &source, &backwards, &part).unwrap_err().to_string();
    assert!(err.contains("q0 <= q"), "{err}");
}

#[test]
fn gn_examples() {
    let part = DyadicPartition::new(&grid()).unwrap();
    let phi = lap();
    let t = |s: f64, p: f64, q: f64| SpaceSpec::triebel(s, p, q, true, phi).unwrap();
    // δ = 1, d = 1: (s0, p0) = (0, 2), (s1, p1) = (1, 4), θ = 1/2 gives δs − 1/p = 1/8
    let (end0, end1) = (t(0.0, 2.0, f64::INFINITY), t(1.0, 4.0, f64::INFINITY));
    let target = t(0.375, 4.0, 2.0);
    let f = shell(3.0);
    let r = check_gn(&f, &target, &end0, &end1, 0.5, &part).unwrap();
    assert!(r.is_finite() && r > 0.0);
    let r2 = check_gn(&f.scale(Complex64::new(7.0, 0.0)), &target, &end0, &end1, 0.5, &part).unwrap();
    assert!((r2 / r - 1.0).abs() < 1e-12);
    assert!(check_gn(&f, &target, &end0, &end1, 1.0, &part).is_err());
    let err = check_gn(&f, &t(0.3, 4.0, 2.0), &end0, &end1, 0.5, &part).unwrap_err().to_string();
    assert!(err.contains("condition 1"), "{err}");
    // s above θs0 + (1−θ)s1 with the scaling fixed by p
    let err = gn_relation(&t(0.75, 1.6, 2.0), &end0, &end1, 0.5, 1).unwrap_err().to_string();
    assert!(err.contains("condition 2"), "{err}");
    let flat = t(0.5, 2.0 / 1.5, f64::INFINITY);
    let err = gn_relation(&t(0.5, 1.6, 2.0), &flat, &t(0.5, 2.0, f64::INFINITY), 0.5, 1).unwrap_err().to_string();
    assert!(err.contains("condition 3"), "{err}");
}

#[test]
fn phi_norms_reduce_to_classical_for_identity() {
    let part = DyadicPartition::new(&grid()).unwrap();
    let f = grid::make_initial_data(&InitialData::RandomBand { seed: 4, j_lo: 1.0, j_hi: 6.0 }, &grid()).unwrap();
    let spec = SpaceSpec::besov(1.0, 2.0, 2.0, false, lap()).unwrap();
    let dec = decompose(&f, &part, false).unwrap();
    let classical: f64 = grid::lp_norm(dec.low.as_ref().unwrap(), 2.0).unwrap()
        + dec
            .blocks
            .iter()
            .map(|(j, b)| (2f64.powi(*j) * grid::lp_norm(b, 2.0).unwrap()).powi(2))
            .sum::<f64>()
            .sqrt();
    assert!((besov_norm(&f, &spec, &part).unwrap() / classical - 1.0).abs() < 1e-14);
}

#[test]
fn phi_besov_is_dominated_by_classical() {
    let part = DyadicPartition::new(&grid()).unwrap();
    let phi = BernsteinFunction::log_damped(1.0).unwrap();
    let family = random_family(&grid(), 33, 60, 1.0, 6.5).unwrap();
    let ratios: Vec<f64> = family
        .iter()
        .map(|f| {
            let a = besov_norm(f, &SpaceSpec::besov(1.0, 3.0, 2.0, false, phi).unwrap(), &part).unwrap();
            let b = besov_norm(f, &SpaceSpec::besov(1.0, 3.0, 2.0, false, lap()).unwrap(), &part).unwrap();
            a / b
        })
        .collect();
    let bound = empirical_bound(&ratios[..30], &ratios[30..], 1.2);
    assert!(bound.pass, "{bound:?}");
}

#[test]
fn bessel_potential_is_an_isomorphism() {
    let part = DyadicPartition::new(&grid()).unwrap();
    let phi = BernsteinFunction::power(0.5).unwrap();
    let nu = 1.0;
    let ratios: Vec<f64> = random_family(&grid(), 44, 40, 1.0, 6.5)
        .unwrap()
        .iter()
        .map(|f| {
            let lifted = bessel_potential(f, nu, &phi).unwrap();
            let a = besov_norm(&lifted, &SpaceSpec::besov(0.5 - nu, 2.0, 2.0, false, phi).unwrap(), &part).unwrap();
            a / besov_norm(f, &SpaceSpec::besov(0.5, 2.0, 2.0, false, phi).unwrap(), &part).unwrap()
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
    assert!(lo > 0.5 && hi < 2.0, "{lo} {hi}");
}
