//! Univariate standard normal primitives.
//!
//! The CDF uses Cody's rational approximations, which keep relative accuracy
//! in the lower tail down to the saturation threshold. Beyond `|x| > TAIL_SATURATION`
//! the CDF returns exactly 0 or 1; the discarded mass is below 1e-17.

use crate::error::{Error, Result};

/// Arguments beyond this magnitude saturate the CDF to 0 or 1.
pub const TAIL_SATURATION: f64 = 8.5;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, Φ(x), by Cody's rational Chebyshev approximations.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    if x > TAIL_SATURATION {
        return 1.0;
    }
    if x < -TAIL_SATURATION {
        return 0.0;
    }
    let y = x.abs();
    if y <= 0.674_489_75 {
        let xsq = x * x;
        let mut num = CODY_A[4] * xsq;
        let mut den = xsq;
        for i in 0..3 {
            num = (num + CODY_A[i]) * xsq;
            den = (den + CODY_B[i]) * xsq;
        }
        return 0.5 + x * (num + CODY_A[3]) / (den + CODY_B[3]);
    }
    let tail = if y <= 32f64.sqrt() {
        let mut num = CODY_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + CODY_C[i]) * y;
            den = (den + CODY_D[i]) * y;
        }
        gaussian_factor(y) * (num + CODY_C[7]) / (den + CODY_D[7])
    } else {
        let xsq = 1.0 / (y * y);
        let mut num = CODY_P[5] * xsq;
        let mut den = xsq;
        for i in 0..4 {
            num = (num + CODY_P[i]) * xsq;
            den = (den + CODY_Q[i]) * xsq;
        }
        let r = xsq * (num + CODY_P[4]) / (den + CODY_Q[4]);
        gaussian_factor(y) * (FRAC_1_SQRT_2PI - r) / y
    };
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// exp(-y²/2) split as in Cody's code to avoid cancellation in y².
#[inline]
fn gaussian_factor(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq * 0.5).exp() * (-del * 0.5).exp()
}

const CODY_A: [f64; 5] = [
    2.235_252_035_460_683_9,
    161.028_231_068_555_88,
    1_067.689_485_460_370_9,
    18_154.981_253_343_56,
    0.065_682_337_918_207_45,
];
const CODY_B: [f64; 4] = [
    47.202_581_904_688_24,
    976.098_551_737_776_7,
    10_260.932_208_618_978,
    45_507.789_335_026_73,
];
const CODY_C: [f64; 9] = [
    0.398_941_512_088_134_66,
    8.883_149_794_388_376,
    93.506_656_132_177_86,
    597.270_276_394_800_3,
    2_494.537_585_290_372_7,
    6_848.190_450_536_283,
    11_602.651_437_647_35,
    9_842.714_838_383_978,
    1.076_557_677_372_019_2e-8,
];
const CODY_D: [f64; 8] = [
    22.266_688_044_328_116,
    235.387_901_782_625,
    1_519.377_599_407_554_8,
    6_485.558_298_266_761,
    18_615.571_640_885_1,
    34_900.952_721_145_98,
    38_912.003_286_093_27,
    19_685.429_676_859_99,
];
const CODY_P: [f64; 6] = [
    0.215_898_534_057_957,
    0.127_401_161_160_247_36,
    0.022_235_277_870_649_807,
    0.001_421_619_193_227_893_5,
    2.911_287_495_116_879e-5,
    0.023_073_441_764_940_173,
];
const CODY_Q: [f64; 5] = [
    1.284_260_096_144_911_2,
    0.468_238_212_480_865_1,
    0.065_988_137_868_928_55,
    0.003_782_396_332_027_582_4,
    7.297_515_550_839_662e-5,
];

/// Inverse of the standard normal CDF. Fails outside the open unit interval.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile needs 0 < p < 1, got {p}")));
    }
    Ok(quantile_unchecked(p))
}

/// Quantile without the domain check; callers guarantee `0 < p < 1`.
///
/// Wichura's AS 241 (PPND16), relative accuracy about 1e-16.
#[inline]
pub(crate) fn quantile_unchecked(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.080_928_730_122_7 + 33_430.575_583_588_13) * r
                + 67_265.770_927_008_7)
                * r
                + 45_921.953_931_549_87)
                * r
                + 13_731.693_765_509_461)
                * r
                + 1_971.590_950_306_551_4)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((r * 5_226.495_278_852_546 + 28_729.085_735_721_943) * r
                + 39_307.895_800_092_71)
                * r
                + 21_213.794_301_586_596)
                * r
                + 5_394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.745_450_142_783_414e-4 + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((r * 1.050_750_071_644_416_9e-9 + 5.475_938_084_995_345e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.010_334_399_292_288_1e-7 + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((r * 2.044_263_103_389_939_7e-15 + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_887_9)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Inverse-CDF draw from N(0,1) truncated to `(lower, upper)`.
///
/// The result is a nondecreasing deterministic function of `u`. Either bound
/// may be infinite.
pub fn truncated_normal_draw(lower: f64, upper: f64, u: f64) -> Result<f64> {
    if lower.is_nan() || upper.is_nan() || lower >= upper {
        return Err(Error::Domain(format!(
            "truncation needs lower < upper, got ({lower}, {upper})"
        )));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("uniform draw must lie in (0,1), got {u}")));
    }
    Ok(truncated_unchecked(lower, upper, u))
}

pub(crate) fn truncated_unchecked(lower: f64, upper: f64, u: f64) -> f64 {
    if lower >= 0.0 {
        // Reflect into the lower tail, where Φ has full relative precision.
        return -truncated_unchecked(-upper, -lower, 1.0 - u);
    }
    let p_lo = std_normal_cdf(lower);
    let p_hi = std_normal_cdf(upper);
    let mass = p_hi - p_lo;
    if upper < -TAIL_SATURATION || mass <= 1e-300 {
        // Far-tail exponential approximation of the truncated density.
        let t = -upper.min(-1.0);
        let width = upper - lower;
        let shrink = if width.is_infinite() { 1.0 } else { -(-t * width).exp_m1() };
        let x = upper + (1.0 - (1.0 - u) * shrink).ln() / t;
        return x.clamp(lower, upper);
    }
    let p = p_lo + u * mass;
    if p <= 0.0 || p >= 1.0 {
        return if p <= 0.0 { lower.max(-TAIL_SATURATION) } else { upper };
    }
    let x = quantile_unchecked(p);
    // Rounding can push the quantile a hair outside the interval.
    if x <= lower {
        lower + (upper - lower).min(1.0) * 1e-12
    } else if x >= upper {
        upper - (upper - lower).min(1.0) * 1e-12
    } else {
        x
    }
}
