//! Error function, standard normal CDF/PDF and their inverses.
//!
//! `erf`/`erfc` come from `libm` (a port of the musl implementations, accurate to
//! about one ulp). The inverses are built here: the normal quantile uses Wichura's
//! AS241 rational approximation followed by one Halley step, and `erf_inv` polishes a
//! quantile-based starting point with Halley iterations on the forward function.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{EocError, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
pub(crate) const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, Φ(x). Uses `erfc` so both tails keep relative precision.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 - Φ(x).
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Φ(b) - Φ(a) for a <= b, evaluated on whichever tail keeps precision.
pub fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - normal_sf(b)
    }
}

/// Inverse of the standard normal CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EocError::domain("p", p, "must lie in (0, 1)"));
    }
    let x = as241(p);
    // One Halley step on Φ(x) - p; residual taken on the short tail.
    let resid = if x > 0.0 {
        (1.0 - p) - normal_sf(x)
    } else {
        normal_cdf(x) - p
    };
    let u = resid / normal_pdf(x);
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// Inverse error function on (-1, 1).
pub fn erf_inv(p: f64) -> Result<f64> {
    if !(p > -1.0 && p < 1.0) {
        return Err(EocError::domain("p", p, "must lie in (-1, 1)"));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let sign = p.signum();
    let a = p.abs();
    let mut x = if a < 1e-3 {
        0.5 * PI.sqrt() * a * (1.0 + PI * a * a / 12.0)
    } else {
        as241(0.5 * (1.0 + a)) * FRAC_1_SQRT_2
    };
    for _ in 0..8 {
        // erf(x) - a, computed through erfc on the upper half to avoid cancellation.
        let f = if a > 0.5 { (1.0 - a) - erfc(x) } else { erf(x) - a };
        let d = FRAC_2_SQRT_PI * (-x * x).exp();
        let u = f / d;
        let dx = u / (1.0 + x * u);
        x -= dx;
        if dx.abs() <= 1e-16 * x.abs() {
            break;
        }
    }
    Ok(sign * x)
}

/// Wichura (1988) AS241 PPND16, relative accuracy about 1e-16.
fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
                + 6.726_577_092_700_87e4)
                * r
                + 4.592_195_393_154_987e4)
                * r
                + 1.373_169_376_550_946e4)
                * r
                + 1.971_590_950_306_551_3e3)
                * r
                + 1.331_416_678_917_843_8e2)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
                + 3.930_789_580_009_271e4)
                * r
                + 2.121_379_430_158_659_7e4)
                * r
                + 5.394_196_021_424_751e3)
                * r
                + 6.871_870_074_920_579e2)
                * r
                + 4.231_333_070_160_091e1)
                * r
                + 1.0);
    }
    let r0 = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r0.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                + 1.519_866_656_361_645_7e-2)
                * r
                + 1.481_639_160_068_263_4e-1)
                * r
                + 6.897_673_349_851e-1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 1.487_536_129_085_061_5e-2)
                * r
                + 1.369_298_809_227_358e-1)
                * r
                + 5.998_322_065_558_88e-1)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}
