//! Thin wrappers over `libm` so the crate never touches `std` float intrinsics.
//!
//! Routing every transcendental through one module keeps `no_std` builds
//! honest and makes results bit-reproducible across build configurations —
//! the report hashes in the test suite rely on that.

/// `e^x`.
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// Natural logarithm.
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// Square root.
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// `x^y` for real exponents.
#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// Absolute value (sign-bit clear; total, unlike `f64::abs` in `no_std`).
#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Smallest integer ≥ x.
#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

/// Largest integer ≤ x.
#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

/// Fractional part, `x − trunc(x)`.
#[inline]
pub fn fract(x: f64) -> f64 {
    x - libm::trunc(x)
}

/// Binary minimum that propagates neither NaN silently: NaN wins so that
/// validation layers see it.
#[inline]
pub fn min(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if a < b {
        a
    } else {
        b
    }
}

/// Binary maximum, NaN-propagating like [`min`].
#[inline]
pub fn max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if a > b {
        a
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_ln_roundtrip() {
        for &x in &[1e-8, 0.5, 1.0, 3.25, 40.0] {
            assert!((ln(exp(x)) - x).abs() < 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn min_max_propagate_nan() {
        assert!(min(f64::NAN, 1.0).is_nan());
        assert!(max(1.0, f64::NAN).is_nan());
        assert_eq!(min(2.0, 3.0), 2.0);
        assert_eq!(max(2.0, 3.0), 3.0);
    }
}
