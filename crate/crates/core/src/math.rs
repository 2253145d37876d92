//! Standard-normal helpers shared by the Gaussian families.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

/// `-0.5 * ln(2π)`
pub const LN_SQRT_2PI_NEG: f64 = -0.918_938_533_204_672_7;

#[inline]
pub fn std_normal_ln_pdf(x: f64) -> f64 {
    LN_SQRT_2PI_NEG - 0.5 * x * x
}

#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Inverse of [`std_normal_cdf`] on (0, 1).
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // The library inverse is accurate to about 1e-11; two Newton steps on the
    // CDF bring it to machine precision.
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let pdf = std_normal_pdf(x);
        if pdf == 0.0 {
            break;
        }
        x -= (std_normal_cdf(x) - p) / pdf;
    }
    x
}

/// Standard-normal mass of `[lo, hi]`, computed on the tail closest to zero
/// to avoid cancellation.
pub fn std_normal_mass(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        std_normal_cdf(-lo) - std_normal_cdf(-hi)
    } else {
        std_normal_cdf(hi) - std_normal_cdf(lo)
    }
}
