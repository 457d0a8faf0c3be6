//! Scalar math helpers shared across the crate.
//!
//! All transcendental functions go through [`libm`] so the crate builds
//! without `std` and produces identical results on every target. The angle
//! helpers implement the circle of circumference pi on which the rotation
//! angle lives: the measurement fringes are pi-periodic, so theta and
//! theta + pi are physically indistinguishable.

use core::f64::consts::{FRAC_PI_2, PI};

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Wraps an arbitrary angle into `[0, pi)`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let mut r = x % PI;
    if r < 0.0 {
        r += PI;
    }
    // `r += PI` can round up to exactly PI when r is a tiny negative value.
    if r >= PI {
        r -= PI;
    }
    r
}

/// Signed wrapped difference `x - center` on the pi-circle, in `[-pi/2, pi/2)`.
///
/// This is the shortest signed path between two angles identified modulo pi;
/// its absolute value is the circular distance.
#[inline]
pub fn signed_angle_delta(x: f64, center: f64) -> f64 {
    let mut d = (x - center) % PI;
    if d < -FRAC_PI_2 {
        d += PI;
    } else if d >= FRAC_PI_2 {
        d -= PI;
    }
    d
}

/// Folds a value into `[0, 1]` by reflecting at both endpoints.
#[inline]
pub(crate) fn reflect_unit(x: f64) -> f64 {
    let mut r = x % 2.0;
    if r < 0.0 {
        r += 2.0;
    }
    if r > 1.0 {
        r = 2.0 - r;
    }
    // Rounding in `2.0 - r` or the fixups above cannot escape [0, 1]: r was
    // in [1, 2] so the reflection lands in [0, 1] exactly.
    r
}

/// Inverse standard normal CDF (Wichura's algorithm AS 241, double precision).
///
/// Relative error is below 1e-15 over (0, 1); out-of-range input returns an
/// infinity of the appropriate sign.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if abs(q) <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = sqrt(-ln(r));
    let value = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

#[inline]
fn poly(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

// Coefficients as published for AS 241 (PPND16); kept verbatim.
#[allow(clippy::excessive_precision)]
const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
#[allow(clippy::excessive_precision)]
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
#[allow(clippy::excessive_precision)]
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
#[allow(clippy::excessive_precision)]
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
#[allow(clippy::excessive_precision)]
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
#[allow(clippy::excessive_precision)]
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];
