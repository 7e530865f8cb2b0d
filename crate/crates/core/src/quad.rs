//! Adaptive Gauss–Kronrod (7/15) quadrature for complex-valued integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use thiserror::Error;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for the odd Kronrod abscissae XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("subdivision limit {limit} reached with estimated error {error:e} (target {target:e})")]
    SubdivisionLimit { limit: usize, error: f64, target: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-300, max_panels: 2000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub panels: usize,
    /// Integrand call count.
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F>(f: &mut F, a: f64, b: f64) -> Result<(Complex64, f64), QuadError>
where
    F: FnMut(f64) -> Complex64,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut eval = |x: f64| -> Result<Complex64, QuadError> {
        let v = f(x);
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(QuadError::NonFinite { x })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = fc.norm() * WGK[7];
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        kronrod += (f1 + f2) * w;
        abs_sum += (f1.norm() + f2.norm()) * w;
        if i % 2 == 1 {
            gauss += (f1 + f2) * WG[i / 2];
        }
    }
    let value = kronrod * half;
    let raw = ((kronrod - gauss) * half).norm();
    let scale = abs_sum * half.abs();
    // QUADPACK-style rescaling of the embedded-rule difference.
    let mut error = if scale > 0.0 && raw > 0.0 {
        scale * (200.0 * raw / scale).powf(1.5).min(1.0)
    } else {
        raw
    };
    error = error.max(50.0 * f64::EPSILON * scale);
    Ok((value, error))
}

/// Integrates `f` over `[a, b]`, splitting first at the supplied interior `breaks`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, breaks: &[f64], opts: &QuadOptions) -> Result<QuadResult, QuadError>
where
    F: FnMut(f64) -> Complex64,
{
    let mut cuts: Vec<f64> = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    cuts.extend(inner);
    cuts.push(b);

    let mut heap = BinaryHeap::new();
    let mut total = Complex64::new(0.0, 0.0);
    let mut total_err = 0.0;
    let mut evaluations = 0;
    for w in cuts.windows(2) {
        let (value, error) = kronrod15(&mut f, w[0], w[1])?;
        evaluations += 15;
        total += value;
        total_err += error;
        heap.push(Panel { a: w[0], b: w[1], value, error });
    }

    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total.norm());
        if total_err <= target {
            break;
        }
        if heap.len() >= opts.max_panels {
            return Err(QuadError::SubdivisionLimit { limit: opts.max_panels, error: total_err, target });
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split further in floating point.
            return Err(QuadError::SubdivisionLimit { limit: heap.len() + 1, error: total_err, target });
        }
        let (v1, e1) = kronrod15(&mut f, worst.a, mid)?;
        let (v2, e2) = kronrod15(&mut f, mid, worst.b)?;
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
    }

    // Re-sum to shed accumulated update drift.
    let mut value = Complex64::new(0.0, 0.0);
    let mut error = 0.0;
    let panels = heap.len();
    for p in heap.into_iter() {
        value += p.value;
        error += p.error;
    }
    Ok(QuadResult { value, error, panels, evaluations })
}

/// Real-valued convenience wrapper.
pub fn integrate_real<F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<(f64, f64), QuadError>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate(|x| Complex64::new(f(x), 0.0), a, b, &[], opts)?;
    Ok((r.value.re, r.error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let (v, _) = integrate_real(|x| x.powi(6) - 2.0 * x, 0.0, 2.0, &QuadOptions::default()).unwrap();
        assert!((v - (128.0 / 7.0 - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let (v, _) = integrate_real(|x| x.powf(-0.5), 0.0, 1.0, &QuadOptions::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn oscillatory_complex() {
        let r = integrate(|x| Complex64::new(0.0, 10.0 * x).exp(), 0.0, 1.0, &[0.5], &QuadOptions::default()).unwrap();
        let exact = (Complex64::new(0.0, 10.0).exp() - 1.0) / Complex64::new(0.0, 10.0);
        assert!((r.value - exact).norm() < 1e-12);
    }

    #[test]
    fn nan_is_reported() {
        let err = integrate_real(|x| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, &QuadOptions::default());
        assert!(matches!(err, Err(QuadError::NonFinite { .. })));
    }
}
