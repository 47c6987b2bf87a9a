//! Smooth indicator surrogate for the joint safety probability.
//!
//! `phi(x) = (1 + a1*tau) / (1 + a2*tau*exp(-x/tau))` approximates the
//! step indicator `1[x > 0]`; the product of `phi(-h(x_t))` over a
//! trajectory approximates the joint no-violation indicator, and its
//! expectation is differentiable in the policy parameters.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};
use alloc::format;

/// Sharpness and shape parameters of the surrogate indicator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateParams {
    pub tau: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self { tau: 1e-3, a1: 0.45, a2: 1.0 }
    }
}

impl SurrogateParams {
    pub fn validate(&self) -> CoreResult<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(CoreError::Config(format!(
                "surrogate.tau ({}) must be in (0, 1)",
                self.tau
            )));
        }
        if !(self.a1 > 0.0 && self.a2 > 0.0) {
            return Err(CoreError::Config(format!(
                "surrogate.a1 ({}) and surrogate.a2 ({}) must be > 0",
                self.a1, self.a2
            )));
        }
        Ok(())
    }

    /// True when `a2 < a1 / (1 + a1)` does NOT hold. The defaults above
    /// (a2 = 1, a1 = 0.45) violate it on purpose; callers should warn,
    /// not fail, so the published parameterization stays usable.
    pub fn shape_condition_violated(&self) -> bool {
        !(self.a2 < self.a1 / (1.0 + self.a1))
    }

    /// Supremum of `phi`, reached as `x -> +inf`.
    #[inline]
    pub fn upper_bound(&self) -> f64 {
        1.0 + self.a1 * self.tau
    }
}

// exp argument beyond which the denominator would overflow; phi saturates
// to 0 there and its derivative to 0.
const EXP_GUARD: f64 = 700.0;

/// Surrogate indicator value; saturates instead of overflowing.
#[inline]
pub fn phi(x: f64, sp: &SurrogateParams) -> f64 {
    let z = -x / sp.tau;
    if z > EXP_GUARD {
        return 0.0;
    }
    sp.upper_bound() / (1.0 + sp.a2 * sp.tau * libm::exp(z))
}

/// d(phi)/dx, with the same saturation guard as [`phi`].
#[inline]
pub fn phi_deriv(x: f64, sp: &SurrogateParams) -> f64 {
    let z = -x / sp.tau;
    if z > EXP_GUARD {
        return 0.0;
    }
    let e = libm::exp(z);
    let denom = 1.0 + sp.a2 * sp.tau * e;
    sp.upper_bound() * sp.a2 * e / (denom * denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_at_zero_matches_formula() {
        let sp = SurrogateParams::default();
        let v = phi(0.0, &sp);
        assert!((v - 1.00045 / 1.001).abs() < 1e-12, "{v}");
    }

    #[test]
    fn limits() {
        let sp = SurrogateParams::default();
        assert!((phi(1e6, &sp) - sp.upper_bound()).abs() < 1e-12);
        assert_eq!(phi(-1e6, &sp), 0.0);
        assert_eq!(phi_deriv(-1e6, &sp), 0.0);
    }

    #[test]
    fn monotone_increasing() {
        let sp = SurrogateParams { tau: 0.05, a1: 0.45, a2: 0.3 };
        // stay in the range where the denominator is resolvable in f64
        let mut prev = phi(-1.5, &sp);
        let mut x = -1.5 + 1e-2;
        while x < 0.5 {
            let v = phi(x, &sp);
            assert!(v > prev, "phi not increasing at {x}");
            prev = v;
            x += 1e-2;
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let sp = SurrogateParams { tau: 0.1, a1: 0.45, a2: 0.3 };
        for &x in &[-0.5, -0.1, 0.0, 0.1, 0.5] {
            let h = 1e-6;
            let fd = (phi(x + h, &sp) - phi(x - h, &sp)) / (2.0 * h);
            let an = phi_deriv(x, &sp);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "x={x} fd={fd} an={an}");
        }
    }

    #[test]
    fn table_defaults_violate_shape_condition() {
        assert!(SurrogateParams::default().shape_condition_violated());
        let ok = SurrogateParams { tau: 0.1, a1: 0.45, a2: 0.3 };
        assert!(!ok.shape_condition_violated());
    }

    #[test]
    fn never_nan() {
        let sp = SurrogateParams::default();
        for &x in &[-1e300, -1e10, -700.0, -1e-9, 0.0, 1e-9, 700.0, 1e10, 1e300] {
            assert!(phi(x, &sp).is_finite());
            assert!(phi_deriv(x, &sp).is_finite());
        }
    }
}
