//! Standard normal helpers shared by the copula and the evaluation code.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// ln(2π)/2
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse of [`cdf`] (Wichura's AS241). Returns ±∞ at the endpoints.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&AS241_A, r) / poly(&AS241_B, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        poly(&AS241_C, r) / poly(&AS241_D, r)
    } else {
        r -= 5.0;
        poly(&AS241_E, r) / poly(&AS241_F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[allow(clippy::excessive_precision)]
const AS241_A: [f64; 8] = [
    3.387_132_872_796_366_5,
    133.141_667_891_784_38,
    1_971.590_950_306_551_3,
    13_731.693_765_509_461,
    45_921.953_931_549_87,
    67_265.770_927_008_7,
    33_430.575_583_588_13,
    2_509.080_928_730_122_7,
];
const AS241_B: [f64; 8] = [
    1.0,
    42.313_330_701_600_91,
    687.187_007_492_057_9,
    5_394.196_021_424_751,
    21_213.794_301_586_597,
    39_307.895_800_092_71,
    28_729.085_735_721_943,
    5_226.495_278_852_545,
];
const AS241_C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    0.241_780_725_177_450_6,
    0.022_723_844_989_269_184,
    7.745_450_142_783_414e-4,
];
const AS241_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    0.689_767_334_985_1,
    0.148_103_976_427_480_08,
    0.015_198_666_563_616_457,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const AS241_E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    0.296_560_571_828_504_9,
    0.026_532_189_526_576_124,
    0.001_242_660_947_388_078_4,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
#[allow(clippy::excessive_precision)]
const AS241_F: [f64; 8] = [
    1.0,
    0.599_832_206_555_888,
    0.136_929_880_922_735_8,
    0.014_875_361_290_850_615,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.043_131_970_000_000_2e-15,
];

/// Mean and variance of a standard normal truncated to `(lo, hi)`.
pub fn truncated_moments(lo: f64, hi: f64) -> (f64, f64) {
    debug_assert!(lo < hi);
    // Work in the lower tail where Φ is computed accurately.
    if lo > 0.0 {
        let (m, v) = truncated_moments(-hi, -lo);
        return (-m, v);
    }
    let mass = cdf(hi) - cdf(lo);
    if !(mass > 1e-300) {
        // Far lower tail: the mass piles up against `hi`.
        let mean = (hi + 1.0 / hi).max(lo);
        return (mean, 1.0 / (hi * hi));
    }
    let (pl, ph) = (pdf(lo), pdf(hi));
    let tl = if lo.is_finite() { lo * pl } else { 0.0 };
    let th = if hi.is_finite() { hi * ph } else { 0.0 };
    let mean = (pl - ph) / mass;
    let var = (1.0 + (tl - th) / mass - mean * mean).max(0.0);
    (mean, var)
}

/// ln P(lo < Z < hi) for a standard normal Z.
pub fn ln_interval_mass(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 {
        return ln_interval_mass(-hi, -lo);
    }
    let mass = cdf(hi) - cdf(lo);
    mass.max(1e-300).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.2, 0.5, 0.6, 0.975, 1.0 - 1e-10] {
            assert_abs_diff_eq!(cdf(quantile(p)), p, epsilon = 1e-14);
        }
        assert_eq!(quantile(0.5), 0.0);
        assert_abs_diff_eq!(quantile(0.975), 1.959_963_984_540_054, epsilon = 1e-12);
    }

    #[test]
    fn half_normal_moments() {
        let (m, v) = truncated_moments(0.0, f64::INFINITY);
        assert_abs_diff_eq!(m, (2.0 / PI).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(v, 1.0 - 2.0 / PI, epsilon = 1e-14);
        let (m, _) = truncated_moments(f64::NEG_INFINITY, 0.0);
        assert_abs_diff_eq!(m, -(2.0 / PI).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn tail_interval_stays_inside() {
        let (m, v) = truncated_moments(40.0, 41.0);
        assert!((40.0..41.0).contains(&m), "{m}");
        assert!((0.0..0.01).contains(&v), "{v}");
    }

    #[test]
    fn untruncated_is_standard() {
        let (m, v) = truncated_moments(f64::NEG_INFINITY, f64::INFINITY);
        assert_abs_diff_eq!(m, 0.0);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
    }
}
