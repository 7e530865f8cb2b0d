//! Real gamma-function helpers.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// `1/Γ(x)`, exactly zero at the poles `x = 0, -1, -2, ...`.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x > 0.0 {
        if x == x.floor() && x <= 21.0 {
            // exact factorials avoid the last-ulp drift of the Lanczos fit
            return 1.0 / (1..x as u64).product::<u64>() as f64;
        }
        if x < 170.0 {
            1.0 / gamma(x)
        } else {
            (-ln_gamma(x)).exp()
        }
    } else {
        // reflection: 1/Γ(x) = Γ(1-x) sin(πx) / π
        let s = (PI * x).sin() / PI;
        if 1.0 - x < 170.0 {
            gamma(1.0 - x) * s
        } else {
            s * ln_gamma(1.0 - x).exp()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgamma_values() {
        assert_eq!(rgamma(0.0), 0.0);
        assert_eq!(rgamma(-3.0), 0.0);
        assert!((rgamma(1.0) - 1.0).abs() < 1e-15);
        assert!((rgamma(0.5) - 1.0 / PI.sqrt()).abs() < 1e-15);
        // Γ(-1/2) = -2√π
        assert!((rgamma(-0.5) + 0.5 / PI.sqrt()).abs() < 1e-14);
        assert_eq!(rgamma(1.0), 1.0);
        assert_eq!(rgamma(5.0), 1.0 / 24.0);
        assert!(rgamma(150.0) > 0.0 && rgamma(150.0) < 1e-250);
        assert_eq!(rgamma(200.0), 0.0);
    }
}
