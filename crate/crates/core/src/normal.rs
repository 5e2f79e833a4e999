//! Standard normal helpers with tail-stable interval masses.

use libm::{erf, erfc};
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `Phi(x)`, accurate in the lower tail.
#[inline]
pub fn cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `1 - Phi(x)`, accurate in the upper tail.
#[inline]
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Inverse of [`cdf`].
#[inline]
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// `P{a <= Z <= b}` computed from whichever tail keeps the digits.
#[inline]
pub fn interval_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a + b > 0.0 {
        (sf(a) - sf(b)).max(0.0)
    } else {
        (cdf(b) - cdf(a)).max(0.0)
    }
}

/// Mass of `[a, b]` together with the `u`-quantile of the normal law truncated to it.
///
/// Returns `(0, midpoint)` for an empty interval.
#[inline]
pub fn truncated_draw(a: f64, b: f64, u: f64) -> (f64, f64) {
    if a >= b {
        return (0.0, 0.5 * (a + b));
    }
    let (mass, y) = if a + b > 0.0 {
        let qa = sf(a);
        let qb = sf(b);
        let mass = (qa - qb).max(0.0);
        (mass, -quantile(qa - u * mass))
    } else {
        let pa = cdf(a);
        let pb = cdf(b);
        let mass = (pb - pa).max(0.0);
        (mass, quantile(pa + u * mass))
    };
    (mass, y.clamp(a, b))
}

/// `P{|Z| <= x}`.
#[inline]
pub fn central_mass(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    erf(x * FRAC_1_SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_inverts_cdf() {
        for &x in &[-8.0, -3.0, -0.5, 0.0, 0.7, 2.0] {
            let p = cdf(x);
            assert!((quantile(p) - x).abs() < 1e-9 * (1.0 + x.abs()), "x = {x}");
        }
        // upper tail through the survival function
        assert!((-quantile(sf(6.0)) - 6.0).abs() < 1e-9);
    }

    #[test]
    fn interval_mass_in_far_tail() {
        // P{10 <= Z <= 11}: both cdf values round to 1 in double precision.
        let m = interval_mass(10.0, 11.0);
        let expected = sf(10.0) - sf(11.0);
        assert!(m > 0.0);
        assert!((m - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn central_mass_matches_two_phi_minus_one() {
        let c = central_mass(1.0);
        assert!((c - 0.682_689_492_137_085_9).abs() < 1e-14, "{c:e}");
    }

    #[test]
    fn truncated_draw_stays_inside() {
        for &(a, b) in &[(-1.0, 1.0), (5.0, 5.5), (-9.0, -8.0), (0.0, f64::INFINITY)] {
            for &u in &[1e-9, 0.3, 0.5, 0.999_999] {
                let (m, y) = truncated_draw(a, b, u);
                assert!(m > 0.0);
                assert!(y >= a && y <= b, "({a}, {b}, {u}) -> {y}");
            }
        }
    }
}
