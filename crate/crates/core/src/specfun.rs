//! Double-precision special functions.
//!
//! `erf`, `erfc` and `j0` delegate to `libm` (a port of the fdlibm routines).
//! The rest are implemented here.

use crate::error::{Error, Result};
use std::f64::consts::PI;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
pub const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
pub const SQRT_PI: f64 = 1.772_453_850_905_516;

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

#[inline]
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

/// Scaled complementary error function `exp(x^2) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        // exp(x^2) overflows below about -26.6; that is the true value too.
        let (hi, lo) = two_square(x);
        return 2.0 * hi.exp() * (1.0 + lo) - erfcx(-x);
    }
    if x < 25.0 {
        let (hi, lo) = two_square(x);
        return hi.exp() * (1.0 + lo) * erfc(x);
    }
    // Asymptotic series; at x >= 25 six terms are far below one ulp.
    let z = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..8 {
        term *= -((2 * n - 1) as f64) * z;
        sum += term;
    }
    sum * FRAC_1_SQRT_PI / x
}

/// `x^2` as an unevaluated sum `hi + lo`.
#[inline]
fn two_square(x: f64) -> (f64, f64) {
    let hi = x * x;
    let lo = x.mul_add(x, -hi);
    (hi, lo)
}

/// Exponential integral `E1(x)` for `x > 0`.
pub fn exp1(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain {
            function: "exp1",
            value: x,
        });
    }
    if x <= 1.0 {
        Ok(-EULER_GAMMA - x.ln() - exp1_series_tail(x))
    } else if x > 745.0 {
        Ok(0.0)
    } else {
        Ok(exp1_cf(x))
    }
}

/// `sum_{k>=1} (-x)^k / (k k!)`, so that `E1(x) = -gamma - ln x - S(x)`.
pub(crate) fn exp1_series_tail(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..200 {
        term *= -x / k as f64;
        let c = term / k as f64;
        sum += c;
        if c.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

// Modified Lentz evaluation of the continued fraction for x > 1.
fn exp1_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}

/// Modified Bessel function `K0(x)` for `x > 0`.
pub fn bessel_k0(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain {
            function: "bessel_k0",
            value: x,
        });
    }
    if x <= 2.0 {
        Ok(k0_series(x))
    } else {
        Ok(k0e_steed(x) * (-x).exp())
    }
}

/// Exponentially scaled `exp(x) K0(x)`.
pub fn bessel_k0e(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain {
            function: "bessel_k0e",
            value: x,
        });
    }
    if x <= 2.0 {
        Ok(k0_series(x) * x.exp())
    } else {
        Ok(k0e_steed(x))
    }
}

fn k0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let lead = -((0.5 * x).ln() + EULER_GAMMA);
    let mut term = 1.0;
    let mut harmonic = 0.0;
    let mut sum = lead;
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * kf);
        harmonic += 1.0 / kf;
        let c = term * (lead + harmonic);
        sum += c;
        if c.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

// Steed's method for the second continued fraction (Temme), nu = 0.
fn k0e_steed(x: f64) -> f64 {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut a = -a1;
    let mut q = a1;
    let mut c = a1;
    let mut s = 1.0 + q * delh;
    for i in 1..10_000 {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    (PI / (2.0 * x)).sqrt() / s
}

/// Exponentially scaled `exp(-x) I0(x)` for `x >= 0`.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= 20.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= q / (kf * kf);
            sum += term;
            if term <= 1e-18 * sum {
                break;
            }
        }
        sum * (-x).exp()
    } else {
        let z = 1.0 / (8.0 * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            let t = (2 * k - 1) as f64;
            term *= t * t * z / k as f64;
            sum += term;
            if term <= 1e-18 * sum {
                break;
            }
        }
        sum / (2.0 * PI * x).sqrt()
    }
}

/// Smooth cutoff: 1 on `r <= a`, 0 on `r >= b`, C-infinity and monotone between.
pub fn window(r: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a < b) {
        return Err(Error::InvalidParameter(format!(
            "window edges must satisfy 0 < a < b, got a = {a}, b = {b}"
        )));
    }
    Ok(window_unchecked(r, a, b))
}

#[inline]
pub(crate) fn window_unchecked(r: f64, a: f64, b: f64) -> f64 {
    if r <= a {
        return 1.0;
    }
    if r >= b {
        return 0.0;
    }
    let t = (b - r) / (b - a);
    let s = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let (p, q) = (s(t), s(1.0 - t));
    p / (p + q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_sweep(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        let (a, b) = (lo.ln(), hi.ln());
        (0..n).map(move |i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
    }

    // erf(x) = 2/sqrt(pi) e^{-x^2} sum 2^n x^{2n+1} / (2n+1)!!, all terms positive.
    fn erf_oracle(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
        }
        2.0 * FRAC_1_SQRT_PI * (-x * x).exp() * sum
    }

    // erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), backward evaluation.
    fn erfc_cf_oracle(x: f64) -> f64 {
        let mut f = x;
        for k in (1..400).rev() {
            f = x + (k as f64 / 2.0) / f;
        }
        (-x * x).exp() * FRAC_1_SQRT_PI / f
    }

    // E1(x) = e^{-x} int_R exp(-e^w) e^w / (x + e^w) dw, trapezoidal in w.
    fn exp1_oracle(x: f64) -> f64 {
        let h = 0.01;
        let mut sum = 0.0;
        let mut w = -60.0;
        while w < 6.0 {
            let u = f64::exp(w);
            sum += (-u).exp() * u / (x + u);
            w += h;
        }
        (-x).exp() * sum * h
    }

    // K0(x) = int_0^inf exp(-x cosh t) dt, trapezoidal (even integrand, so the endpoint counts half).
    fn k0_oracle(x: f64) -> f64 {
        let h: f64 = 0.005;
        let mut sum = 0.5 * (-x).exp();
        let mut t = h;
        loop {
            let v = (-x * t.cosh()).exp();
            sum += v;
            if v < 1e-300 || t > 40.0 {
                break;
            }
            t += h;
        }
        sum * h
    }

    // J0(x) = (1/pi) int_0^pi cos(x sin t) dt; trapezoidal is spectral for this periodic integrand.
    fn j0_oracle(x: f64) -> f64 {
        let m = (2.0 * x) as usize + 400;
        let h = PI / m as f64;
        let mut sum = 0.5 * (1.0 + (x * 0.0).cos());
        for i in 1..m {
            sum += (x * (i as f64 * h).sin()).cos();
        }
        sum * h / PI
    }

    #[test]
    fn erf_reference_points() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-16);
        assert_eq!(erf(8.7), 1.0);
    }

    #[test]
    fn erf_matches_series_on_sweep() {
        for x in log_sweep(1e-6, 6.0, 1000) {
            let want = erf_oracle(x);
            assert!((erf(x) - want).abs() <= 1e-15, "x = {x}");
        }
    }

    #[test]
    fn erfc_matches_continued_fraction() {
        for x in log_sweep(2.0, 26.0, 1000) {
            let want = erfc_cf_oracle(x);
            let rel = (erfc(x) - want).abs() / want;
            assert!(rel <= 1e-13, "x = {x}, rel = {rel:e}");
        }
        let v = erfc(5.85);
        assert!((v / erfc_cf_oracle(5.85) - 1.0).abs() < 1e-13);
        assert!(v > 1e-16 && v < 2e-16);
    }

    #[test]
    fn erfc_bounded_by_mills_ratio() {
        for x in log_sweep(0.5, 26.0, 200) {
            assert!(erfc(x) <= (-x * x).exp() * FRAC_1_SQRT_PI / x);
        }
    }

    #[test]
    fn erf_erfc_complement_and_parity() {
        for i in 0..=640 {
            let x = -6.0 + 0.05 * i as f64;
            assert!((erf(x) + erfc(x) - 1.0).abs() <= 1e-15, "x = {x}");
            assert_eq!(erf(-x), -erf(x));
            assert!((erfc(-x) - (2.0 - erfc(x))).abs() <= 1e-15);
        }
    }

    #[test]
    fn erfcx_continuous_across_branch() {
        let below = erfcx(25.0 - 1e-12);
        let above = erfcx(25.0);
        assert!((below / above - 1.0).abs() < 1e-13);
        for x in log_sweep(1e-3, 24.0, 300) {
            let want = erfc_cf_oracle(x.max(2.0)) * (x.max(2.0) * x.max(2.0)).exp();
            if x >= 2.0 {
                assert!((erfcx(x) / want - 1.0).abs() < 1e-13, "x = {x}");
            }
        }
        assert!((erfcx(0.0) - 1.0).abs() < 1e-16);
        assert!((erfcx(-1.0) - 2.0 * 1f64.exp() + erfcx(1.0)).abs() < 1e-14);
    }

    #[test]
    fn exp1_reference_points() {
        assert!((exp1(1.0).unwrap() / 0.219_383_934_395_520_26 - 1.0).abs() < 1e-14);
        assert_eq!(exp1(800.0).unwrap(), 0.0);
        for x in [1e-8, 1e-10, 1e-12] {
            let v = exp1(x).unwrap() + x.ln();
            assert!((v + EULER_GAMMA).abs() < 1e-7, "x = {x}");
        }
        assert!(matches!(exp1(0.0), Err(Error::Domain { .. })));
        assert!(matches!(exp1(-1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn exp1_matches_quadrature_on_sweep() {
        for x in log_sweep(1e-4, 600.0, 1000) {
            let want = exp1_oracle(x);
            let got = exp1(x).unwrap();
            assert!(
                (got / want - 1.0).abs() <= 1e-13,
                "x = {x}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn k0_reference_points() {
        assert!((bessel_k0(1.0).unwrap() / 0.421_024_438_240_708_34 - 1.0).abs() < 1e-14);
        for x in [1e-6, 1e-9] {
            let v = bessel_k0(x).unwrap() + (0.5 * x).ln();
            assert!((v + EULER_GAMMA).abs() < 1e-10);
        }
        let x = 500.0;
        let ratio = bessel_k0e(x).unwrap() / (PI / (2.0 * x)).sqrt();
        assert!((ratio - 1.0).abs() < 1e-3);
        assert!(bessel_k0(0.0).is_err());
    }

    #[test]
    fn k0_matches_quadrature_on_sweep() {
        for x in log_sweep(1e-3, 600.0, 1000) {
            let want = k0_oracle(x);
            let got = bessel_k0(x).unwrap();
            assert!(
                (got / want - 1.0).abs() <= 1e-12,
                "x = {x}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn k0e_is_consistent() {
        for x in log_sweep(0.01, 50.0, 100) {
            let a = bessel_k0e(x).unwrap() * (-x).exp();
            let b = bessel_k0(x).unwrap();
            assert!((a / b - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn j0_reference_points() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-15);
    }

    #[test]
    fn j0_matches_integral_on_sweep() {
        for x in log_sweep(1e-3, 1e4, 1000) {
            let want = j0_oracle(x);
            assert!((bessel_j0(x) - want).abs() <= 1e-13, "x = {x}");
        }
    }

    #[test]
    fn i0e_branches_agree() {
        let a = bessel_i0e(20.0);
        let b = bessel_i0e(20.0 + 1e-12);
        assert!((a / b - 1.0).abs() < 1e-13);
        assert_eq!(bessel_i0e(0.0), 1.0);
        // I0(1) = 1.2660658777520082
        assert!((bessel_i0e(1.0) * 1f64.exp() - 1.266_065_877_752_008_2).abs() < 1e-15);
    }

    #[test]
    fn window_plateaus_and_midpoint() {
        let (a, b) = (1.0, 3.0);
        assert_eq!(window(0.5, a, b).unwrap(), 1.0);
        assert_eq!(window(6.0, a, b).unwrap(), 0.0);
        assert!((window(2.0, a, b).unwrap() - 0.5).abs() < 1e-16);
        assert!(window(1.0, 2.0, 2.0).is_err());
        assert!(window(1.0, 3.0, 2.0).is_err());
    }

    #[test]
    fn window_flat_at_edges() {
        let (a, b) = (1.0, 3.0);
        let mut prev = f64::INFINITY;
        for step in [1e-1, 5e-2, 2.5e-2, 1.25e-2] {
            let da = (window(a + step, a, b).unwrap() - 1.0).abs() / step;
            let db = window(b - step, a, b).unwrap() / step;
            let worst = da.max(db);
            assert!(worst < prev);
            prev = worst;
        }
        assert!(prev < 1e-10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn window_is_monotone_and_bounded(
                a in 0.1f64..5.0, w in 0.1f64..5.0, r1 in 0.0f64..12.0, r2 in 0.0f64..12.0,
            ) {
                let b = a + w;
                let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
                let (vl, vh) = (window(lo, a, b).unwrap(), window(hi, a, b).unwrap());
                prop_assert!((0.0..=1.0).contains(&vl));
                prop_assert!(vh <= vl);
            }

            #[test]
            fn erfc_reflection(x in -6.0f64..6.0) {
                prop_assert!((erfc(-x) + erfc(x) - 2.0).abs() <= 4e-16);
            }
        }
    }
}
