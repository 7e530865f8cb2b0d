use std::f64::consts::PI;

use fracspec::bernstein::BernsteinFunction;
use fracspec::grid::{self, make_initial_data, InitialData, SpectralField, TorusGrid};
use fracspec::mlf::mittag_leffler;
use fracspec::operators::*;
use fracspec::special::rgamma;
use num_complex::Complex64;
use proptest::prelude::*;

fn grid() -> TorusGrid {
    TorusGrid::new(1, 256, 2.0 * PI).unwrap()
}

fn sqrt_phi() -> BernsteinFunction {
    BernsteinFunction::power(0.5).unwrap()
}

fn sample_field() -> SpectralField {
    make_initial_data(&InitialData::RandomBand { seed: 7, j_lo: 0.0, j_hi: 5.0 }, &grid())
        .unwrap()
        .axpy(Complex64::new(0.3, 0.0), &SpectralField::from_fn(grid(), |_| Complex64::new(1.0, 0.0)))
        .unwrap()
}

fn plane_wave(k: f64) -> SpectralField {
    SpectralField::from_fn(grid(), |x| Complex64::from_polar(1.0, k * x[0]))
}

#[test]
fn s_at_time_zero_is_the_identity() {
    let f = sample_field();
    let out = apply_S(&f, &PropagatorQuery::new(0.4, sqrt_phi(), 0.0)).unwrap();
    assert_eq!(out.values(), f.values());
}

#[test]
fn unimodular_symbol_at_alpha_one_preserves_l2() {
    let f = sample_field();
    let phi = BernsteinFunction::power(1.0).unwrap();
    for t in [0.3, 2.0, 17.0] {
        let out = apply_S(&f, &PropagatorQuery::new(1.0, phi, t)).unwrap();
        let (a, b) = (grid::lp_norm(&f, 2.0).unwrap(), grid::lp_norm(&out, 2.0).unwrap());
        assert!((a - b).abs() <= 1e-10 * a, "t = {t}: {a} vs {b}");
    }
}

#[test]
fn zero_mode_is_conserved_by_s() {
    let f = sample_field();
    let c0 = f.coefficients()[0];
    for t in [0.01, 1.0, 100.0] {
        let out = apply_S(&f, &PropagatorQuery::new(0.7, sqrt_phi(), t)).unwrap();
        assert!((out.coefficients()[0] - c0).norm() <= 1e-13 * c0.norm());
    }
}

#[test]
fn weighted_p_scales_the_zero_mode() {
    let f = sample_field();
    let c0 = f.coefficients()[0];
    let (alpha, t) = (0.6, 2.5);
    let out = apply_P_weighted(&f, &PropagatorQuery::new(alpha, sqrt_phi(), t)).unwrap();
    let expected = c0 * t.powf(alpha - 1.0) * rgamma(alpha);
    assert!((out.coefficients()[0] - expected).norm() <= 1e-13 * expected.norm());
}

#[test]
fn weighted_p_rejects_nonpositive_time() {
    let f = sample_field();
    assert!(matches!(
        apply_P_weighted(&f, &PropagatorQuery::new(0.6, sqrt_phi(), 0.0)),
        Err(OperatorError::InvalidQuery(_))
    ));
}

#[test]
fn p_and_s_coincide_at_alpha_one() {
    let f = sample_field();
    let q = PropagatorQuery::new(1.0, sqrt_phi(), 1.7);
    let s = apply_S(&f, &q).unwrap();
    let p = apply_P_weighted(&f, &q).unwrap();
    assert!(grid::lp_norm(&s.sub(&p).unwrap(), 2.0).unwrap() < 1e-13);
}

#[test]
fn weighted_p_symbol_is_a_time_derivative() {
    for (alpha, lambda, t) in [(0.3, 1.0, 0.7), (0.55, 4.0, 1.3), (0.8, 10.0, 2.0)] {
        let f = |s: f64| -> Complex64 {
            let z = Complex64::new(0.0, -s.powf(alpha) * lambda);
            mittag_leffler(alpha, alpha + 1.0, z).unwrap() * s.powf(alpha)
        };
        let h = 1e-4 * t;
        let fd = (f(t + h) - f(t - h)) / (2.0 * h);
        let direct = kernel(OperatorKind::P, alpha, t, lambda).unwrap() * t.powf(alpha - 1.0);
        assert!((fd - direct).norm() < 1e-4, "alpha = {alpha}: {fd} vs {direct}");
    }
}

#[test]
fn p2_probe_of_a_plane_wave_is_the_symbol_modulus() {
    let k = 5.0;
    let (alpha, t) = (0.45, 3.0);
    let q = PropagatorQuery::new(alpha, sqrt_phi(), t);
    let probe = multiplier_bound_probe(OperatorKind::S, &q, 2.0, &[t], &[plane_wave(k)]).unwrap();
    let symbol = kernel(OperatorKind::S, alpha, t, sqrt_phi().eval(k * k).unwrap()).unwrap().norm();
    assert!((probe.sup_ratio - symbol).abs() < 1e-12);
}

#[test]
fn p2_probe_is_bounded_by_the_symbol_maximum() {
    let family = probe_family(&grid(), 11, 20).unwrap();
    let q = PropagatorQuery::new(0.5, sqrt_phi(), 1.0);
    let probe = multiplier_bound_probe(OperatorKind::S, &q, 2.0, &[0.1, 1.0, 10.0], &family).unwrap();
    for row in &probe.per_t {
        assert!(row.sup_ratio <= row.symbol_max * (1.0 + 1e-12));
        assert!(row.min_ratio > 0.0);
    }
}

#[test]
fn probe_near_time_zero_is_the_identity() {
    let family = probe_family(&grid(), 3, 10).unwrap();
    let q = PropagatorQuery::new(0.5, sqrt_phi(), 1.0);
    let probe = multiplier_bound_probe(OperatorKind::S, &q, 3.0, &[1e-14], &family).unwrap();
    assert!((probe.sup_ratio - 1.0).abs() < 1e-5);
    assert!((probe.per_t[0].min_ratio - 1.0).abs() < 1e-5);
}

#[test]
fn weighted_probe_is_uniform_in_time() {
    let family = probe_family(&grid(), 5, 50).unwrap();
    let q = PropagatorQuery::new(0.6, sqrt_phi(), 1.0).with_weight(2.0, 1.0);
    let t_set = log_grid(1e-2, 1e2, 9);
    let probe = multiplier_bound_probe(OperatorKind::S, &q, 2.0, &t_set, &family).unwrap();
    assert!(probe.variation < 3.0, "variation {}", probe.variation);
}

#[test]
fn probe_rejects_sigma_outside_the_kind_range() {
    let family = probe_family(&grid(), 5, 2).unwrap();
    let q = PropagatorQuery::new(0.6, sqrt_phi(), 1.0).with_weight(3.0, 0.0);
    assert!(multiplier_bound_probe(OperatorKind::S, &q, 2.0, &[1.0], &family).is_err());
    assert!(multiplier_bound_probe(OperatorKind::P, &q, 2.0, &[1.0], &family).is_ok());
}

#[test]
fn probe_family_is_reproducible_and_contains_the_zero_mode() {
    let a = probe_family(&grid(), 42, 50).unwrap();
    let b = probe_family(&grid(), 42, 50).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.values() == y.values()));
    assert!(a.iter().any(|f| f.coefficients()[0].norm() > 0.0));
    assert!(a.iter().any(|f| f.coefficients()[0].norm() == 0.0));
    for f in &a {
        assert!((grid::lp_norm(f, 2.0).unwrap() - 1.0).abs() < 1e-12);
    }
}

fn narrow_gaussian() -> SpectralField {
    make_initial_data(&InitialData::Gaussian { width: 0.35 }, &grid()).unwrap()
}

#[test]
fn decay_theory_slope_examples() {
    let phi = BernsteinFunction::power(1.0).unwrap();
    let spec = DecaySpec::new(OperatorKind::S, 0.5, phi, DecayNorm::Lp { r: 4.0 }, DecaySource { p: 2.0, a: 0.0 });
    assert!((spec.slope_theory(1) + 0.0625).abs() < 1e-15);
    let p = DecaySpec::new(OperatorKind::P, 0.7, phi, DecayNorm::Lp { r: 2.0 }, DecaySource { p: 2.0, a: 0.0 });
    assert!((p.slope_theory(1) + 0.3).abs() < 1e-15);
}

#[test]
fn bounded_operator_fit_is_flat() {
    let phi = BernsteinFunction::power(1.0).unwrap();
    let spec = DecaySpec::new(OperatorKind::S, 0.8, phi, DecayNorm::Lp { r: 2.0 }, DecaySource { p: 2.0, a: 0.0 });
    let fit = decay_fit(&spec, &narrow_gaussian(), &log_grid(1e-1, 1e3, 17)).unwrap();
    assert_eq!(fit.slope_theory, 0.0);
    assert!(fit.within(0.15, 0.02), "slope {}", fit.slope_hat);
}

#[test]
fn weighted_p_fit_without_gap_follows_the_weight() {
    let phi = BernsteinFunction::power(1.0).unwrap();
    let spec = DecaySpec::new(OperatorKind::P, 0.8, phi, DecayNorm::Lp { r: 2.0 }, DecaySource { p: 2.0, a: 0.0 });
    let fit = decay_fit(&spec, &narrow_gaussian(), &log_grid(1e-1, 1e3, 17)).unwrap();
    assert!((fit.slope_theory + 0.2).abs() < 1e-15);
    assert!(fit.within(0.15, 0.02), "slope {}", fit.slope_hat);
}

#[test]
fn decay_fit_names_violated_constraints() {
    let phi = BernsteinFunction::power(1.0).unwrap();
    let too_wide = DecaySpec::new(OperatorKind::S, 0.5, phi, DecayNorm::Lp { r: 1.5 }, DecaySource { p: 2.0, a: 0.0 });
    assert!(matches!(decay_fit(&too_wide, &narrow_gaussian(), &[1.0, 10.0]), Err(OperatorError::Constraint(_))));
    let sobolev = DecaySpec::new(OperatorKind::S, 0.5, phi, DecayNorm::Sobolev { sigma: 2.5, r: 2.0 }, DecaySource { p: 2.0, a: 0.0 });
    let err = sobolev.validate(1).unwrap_err().to_string();
    assert!(err.contains("sigma"), "{err}");
}

#[test]
fn degenerate_fit_is_reported() {
    let phi = BernsteinFunction::power(1.0).unwrap();
    let spec = DecaySpec::new(OperatorKind::S, 0.5, phi, DecayNorm::Lp { r: 2.0 }, DecaySource { p: 2.0, a: 0.0 });
    let zero = SpectralField::zeros(grid());
    assert!(matches!(decay_fit(&spec, &zero, &[1.0, 10.0]), Err(OperatorError::DegenerateFit(_))));
}

#[test]
fn besov_and_sobolev_targets_run() {
    let phi = BernsteinFunction::power(1.0).unwrap();
    let fine = TorusGrid::new(1, 512, 2.0 * PI).unwrap();
    let data = make_initial_data(&InitialData::Gaussian { width: 0.35 }, &fine).unwrap();
    let ts = log_grid(1.0, 100.0, 5);
    let sob = DecaySpec::new(OperatorKind::S, 0.5, phi, DecayNorm::Sobolev { sigma: 1.0, r: 2.0 }, DecaySource { p: 2.0, a: 0.0 });
    let fit = decay_fit(&sob, &data, &ts).unwrap();
    assert!((fit.slope_theory + 0.25).abs() < 1e-15);
    assert!(fit.slope_hat.is_finite());
    let bes = DecaySpec::new(
        OperatorKind::P,
        0.5,
        phi,
        DecayNorm::Besov { b: 1.0, r: 2.0, kappa: 2.0, homogeneous: false },
        DecaySource { p: 2.0, a: 0.0 },
    );
    let fit = decay_fit(&bes, &data, &ts).unwrap();
    assert!((fit.slope_theory + 0.75).abs() < 1e-15);
    assert!(fit.samples.iter().all(|&(_, n)| n.is_finite() && n > 0.0));
}

#[test]
fn admissible_triple_round_trips_with_infinite_q() {
    let t = AdmissibleTriple::new(2.0, 2.0, 1, 1.0).unwrap();
    let text = serde_json::to_string(&t).unwrap();
    assert!(text.contains("\"inf\""));
    let back: AdmissibleTriple = serde_json::from_str(&text).unwrap();
    back.validate().unwrap();
    assert_eq!(back, t);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn probe_ratios_are_scale_invariant(c in 1e-3f64..1e3, sigma in 0.0f64..2.0, a in 0.0f64..2.0, p in 1.5f64..4.0) {
        let family = probe_family(&grid(), 9, 4).unwrap();
        let scaled: Vec<SpectralField> = family.iter().map(|f| f.scale(Complex64::new(c, 0.0))).collect();
        let q = PropagatorQuery::new(0.5, sqrt_phi(), 1.0).with_weight(sigma, a);
        let ts = [0.1, 10.0];
        let base = multiplier_bound_probe(OperatorKind::S, &q, p, &ts, &family).unwrap();
        let other = multiplier_bound_probe(OperatorKind::S, &q, p, &ts, &scaled).unwrap();
        for (x, y) in base.per_t.iter().zip(&other.per_t) {
            prop_assert!((x.sup_ratio - y.sup_ratio).abs() <= 1e-12 * x.sup_ratio);
            prop_assert!((x.min_ratio - y.min_ratio).abs() <= 1e-12 * x.min_ratio);
        }
    }

    #[test]
    fn admissible_q_satisfies_the_defining_relation(p in 1.01f64..6.0, frac in 0.0f64..0.999, d in 1usize..4, delta in 0.05f64..1.0) {
        let bound = critical_r(p, d, 2.0 * delta);
        let r = if bound.is_finite() { p + frac * (bound - p) } else { p * (1.0 + 10.0 * frac) };
        prop_assume!(r < bound);
        let q = admissible_q(p, r, d, delta).unwrap();
        let lhs = if q.is_infinite() { 0.0 } else { 1.0 / q };
        let rhs = (d as f64 / p - d as f64 / r) / (2.0 * delta);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }
}
