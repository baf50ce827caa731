//! Gaussian CDF/quantile, binomial confidence bounds and the certified radius.

// Published coefficients are kept digit for digit.
#![allow(clippy::excessive_precision)]

use crate::error::{domain, Result};

const SQRT_2: f64 = core::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI)
}

/// Inverse standard normal CDF on the open interval (0, 1).
///
/// Wichura's rational approximation followed by one Newton step. Computed on
/// the lower half and mirrored, so `Φ⁻¹(1 - p) = -Φ⁻¹(p)` holds bit-exactly
/// whenever `1 - p` is exact.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(alloc::format!("quantile argument {p} outside (0, 1)")));
    }
    if p > 0.5 {
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile(p: f64) -> f64 {
    let x = wichura(p);
    let err = normal_cdf(x) - p;
    x - err / normal_pdf(x)
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

fn wichura(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        133.141_667_891_784_38,
        1_971.590_950_306_551_3,
        13_731.693_765_509_461,
        45_921.953_931_549_87,
        67_265.770_927_008_7,
        33_430.575_583_588_13,
        2_509.080_928_730_122_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_91,
        687.187_007_492_057_9,
        5_394.196_021_424_751,
        21_213.794_301_586_597,
        39_307.895_800_092_71,
        28_729.085_735_721_943,
        5_226.495_278_852_854_5,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_545,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        0.241_780_725_177_450_6,
        0.022_723_844_989_269_184,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        0.689_767_334_985_1,
        0.148_103_976_427_480_08,
        0.015_198_666_563_616_457,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_8e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        0.296_560_571_828_504_9,
        0.026_532_189_526_576_124,
        0.001_242_660_947_388_078_4,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_9,
        0.136_929_880_922_735_8,
        0.014_875_361_290_850_615,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_445_9e-7,
        2.044_263_103_389_939_7e-15,
    ];
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = libm::sqrt(-libm::log(p.min(1.0 - p)));
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&x) {
        return Err(domain(alloc::format!("incomplete beta at x={x}, a={a}, b={b}")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_fraction(x, a, b) / a)
    } else {
        Ok(1.0 - front * beta_fraction(1.0 - x, b, a) / b)
    }
}

/// Lentz evaluation of the incomplete-beta continued fraction.
fn beta_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// `P[Bin(n, p) ≥ k]`.
pub fn binomial_upper_tail(k: u64, n: u64, p: f64) -> Result<f64> {
    if k > n || !(0.0..=1.0).contains(&p) {
        return Err(domain(alloc::format!("binomial tail k={k}, n={n}, p={p}")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    incomplete_beta(p, k as f64, (n - k + 1) as f64)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(alloc::format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// One-sided Clopper–Pearson lower bound at level `1 - alpha`: the `p` at
/// which `P[Bin(n, p) ≥ k] = alpha`, found by bisection.
pub fn clopper_pearson_lower(k: u64, n: u64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if n == 0 || k > n {
        return Err(domain(alloc::format!("clopper-pearson k={k}, n={n}")));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if binomial_upper_tail(k, n, mid)? <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Two-sided exact binomial test of `p = 1/2` for `k` successes in `n`.
pub fn binomial_test_half(k: u64, n: u64) -> Result<f64> {
    if n == 0 || k > n {
        return Err(domain(alloc::format!("binomial test k={k}, n={n}")));
    }
    let m = k.max(n - k);
    if 2 * m == n {
        return Ok(1.0);
    }
    Ok((2.0 * binomial_upper_tail(m, n, 0.5)?).min(1.0))
}

/// `(σ/2)(Φ⁻¹(p_a) − Φ⁻¹(p_b))`.
pub fn two_sided_radius(p_a: f64, p_b: f64, sigma: f64) -> Result<f64> {
    let ok = p_a <= 1.0 && p_a >= p_b && p_b >= 0.0 && p_a > 0.0 && p_b < 1.0 && p_a + p_b <= 1.0;
    if !ok || sigma.is_nan() || sigma < 0.0 {
        return Err(domain(alloc::format!(
            "two-sided radius at p_a={p_a}, p_b={p_b}, sigma={sigma}"
        )));
    }
    Ok(sigma / 2.0 * (normal_quantile(p_a)? - normal_quantile(p_b)?))
}

/// `σ Φ⁻¹(p_lower)` when `p_lower > 1/2`, else 0.
pub fn certified_radius(p_lower: f64, sigma: f64) -> Result<f64> {
    if p_lower <= 0.5 {
        return Ok(0.0);
    }
    Ok(sigma * normal_quantile(p_lower)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn quantile_symmetry() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        for p in [0.01, 0.1, 0.3] {
            let s = normal_quantile(1.0 - p).unwrap() + normal_quantile(p).unwrap();
            assert!(s.abs() <= 1e-10, "{p}: {s}");
        }
    }

    #[test]
    fn quantile_round_trip_across_range() {
        let mut p = 1e-9;
        while p < 1.0 - 1e-9 {
            let back = normal_cdf(normal_quantile(p).unwrap());
            assert!((back - p).abs() <= 1e-9, "{p}: {back}");
            p *= 1.37;
            if p > 0.5 {
                break;
            }
        }
        for q in [1e-9, 1e-6, 1e-3, 0.02, 0.2, 0.45] {
            let p = 1.0 - q;
            let back = normal_cdf(normal_quantile(p).unwrap());
            assert!((back - p).abs() <= 1e-9, "{p}: {back}");
        }
    }

    #[test]
    fn quantile_domain() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(normal_quantile(p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn quantile_matches_bisection_oracle() {
        // Bisection on the CDF to 1e-12.
        let (mut lo, mut hi) = (0.0, 10.0);
        while hi - lo > 1e-12 {
            let mid: f64 = 0.5 * (lo + hi);
            if normal_cdf(mid) < 0.99 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q = normal_quantile(0.99).unwrap();
        assert!((q - lo).abs() < 1e-9);
        assert!((q - 2.326_347_9).abs() < 1e-7);
    }

    #[test]
    fn clopper_pearson_closed_forms() {
        assert_eq!(clopper_pearson_lower(0, 50, 0.001).unwrap(), 0.0);
        let got = clopper_pearson_lower(100, 100, 0.001).unwrap();
        let want = libm::exp(libm::log(0.001) / 100.0);
        assert!((got - want).abs() < 1e-10);
        assert!((got - 0.93325).abs() < 1e-5);
    }

    #[test]
    fn clopper_pearson_domain() {
        assert!(clopper_pearson_lower(5, 4, 0.01).is_err());
        assert!(clopper_pearson_lower(1, 0, 0.01).is_err());
        assert!(clopper_pearson_lower(1, 4, 0.0).is_err());
        assert!(clopper_pearson_lower(1, 4, 1.0).is_err());
    }

    #[test]
    fn incomplete_beta_edges() {
        assert_eq!(incomplete_beta(0.0, 2.0, 3.0).unwrap(), 0.0);
        assert_eq!(incomplete_beta(1.0, 2.0, 3.0).unwrap(), 1.0);
        // I_x(1, 1) = x and I_x(a, 1) = x^a.
        assert!((incomplete_beta(0.3, 1.0, 1.0).unwrap() - 0.3).abs() < 1e-14);
        assert!((incomplete_beta(0.7, 5.0, 1.0).unwrap() - libm::pow(0.7, 5.0)).abs() < 1e-14);
        assert!(incomplete_beta(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn binomial_test_edges() {
        assert_eq!(binomial_test_half(5, 10).unwrap(), 1.0);
        assert!((binomial_test_half(10, 10).unwrap() - 2.0 / 1024.0).abs() < 1e-15);
        assert!((binomial_test_half(0, 10).unwrap() - 2.0 / 1024.0).abs() < 1e-15);
        assert_eq!(binomial_test_half(1, 1).unwrap(), 1.0);
    }

    #[test]
    fn radius_forms_agree() {
        assert_eq!(two_sided_radius(0.3, 0.3, 1.0).unwrap(), 0.0);
        for p in [0.51, 0.8, 0.99, 0.999_31] {
            let one = certified_radius(p, 0.25).unwrap();
            let two = two_sided_radius(p, 1.0 - p, 0.25).unwrap();
            assert_eq!(one, two);
        }
        let r = two_sided_radius(0.9, 0.1, 1.0).unwrap();
        assert!((r - 1.281_551_6).abs() < 1e-7);
        assert_eq!(certified_radius(0.5, 1.0).unwrap(), 0.0);
        assert!((certified_radius(0.99, 0.25).unwrap() - 0.581_586_98).abs() < 1e-6);
        assert!(two_sided_radius(0.2, 0.3, 1.0).is_err());
        assert!(two_sided_radius(0.7, 0.4, 1.0).is_err());
    }
}
