//! Standard normal density, distribution and quantile functions.
//!
//! The distribution function is evaluated through `erfc`, so both tails keep
//! full relative precision. The quantile is Wichura's AS 241 (PPND16)
//! followed by one Halley step against [`cdf`].

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_677_94;

pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - cdf(x)` without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Inverse of [`cdf`]. Returns `-inf`/`+inf` at 0 and 1 and NaN outside [0, 1].
pub fn quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let x = ppnd16(p);
    if !x.is_finite() {
        return x;
    }
    // Halley refinement, working on the smaller tail to avoid cancellation.
    let err = if x < 0.0 { cdf(x) - p } else { (1.0 - p) - sf(x) };
    let density = pdf(x);
    if density == 0.0 {
        return x;
    }
    let u = err / density;
    x - u / (1.0 + 0.5 * x * u)
}

fn ppnd16(p: f64) -> f64 {
    const SPLIT1: f64 = 0.425;
    const SPLIT2: f64 = 5.0;
    const CONST1: f64 = 0.180625;
    const CONST2: f64 = 1.6;

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

    fn ratio(num: &[f64; 8], den: &[f64; 8], r: f64) -> f64 {
        let n = num.iter().rev().fold(0.0, |acc, &c| acc * r + c);
        let d = den.iter().rev().fold(0.0, |acc, &c| acc * r + c);
        n / d
    }

    let q = p - 0.5;
    if q.abs() <= SPLIT1 {
        return q * ratio(&A, &B, CONST1 - q * q);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let x = if r <= SPLIT2 {
        ratio(&C, &D, r - CONST2)
    } else {
        ratio(&E, &F, r - SPLIT2)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// `sqrt(2 pi)`, exposed for closed-form oracles.
pub fn sqrt_two_pi() -> f64 {
    (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    // Reference values computed with mpmath at 40 digits.
    #[test]
    fn cdf_matches_high_precision_reference() {
        let cases = [
            (-37.0, 5.725571222524576822683e-300),
            (-20.0, 2.753624118606233695075e-89),
            (-10.0, 7.619853024160526065973e-24),
            (-5.0, 2.866515718791939116737e-7),
            (-3.0, 1.349898031630094526651e-3),
            (-1.0, 0.1586552539314570514147),
            (-0.5, 0.3085375387259868963622),
            (0.0, 0.5),
            (0.5, 0.6914624612740131036377),
            (1.0, 0.8413447460685429485852),
            (3.0, 0.9986501019683699054733),
        ];
        for (x, want) in cases {
            assert!(rel(cdf(x), want) < 1e-13, "cdf({x}) = {} want {want}", cdf(x));
        }
        assert!(rel(sf(5.0), 2.866515718791939116737e-7) < 1e-13);
        assert!(rel(sf(8.0), 6.220960574271784e-16) < 1e-13);
    }

    #[test]
    fn quantile_matches_high_precision_reference() {
        let cases = [
            (1e-20, -9.262340089798407573717),
            (1e-10, -6.361340902404056204695),
            (1e-5, -4.264890793922824628498),
            (0.001, -3.090232306167813541540),
            (0.025, -1.959963984540054235524),
            (0.1, -1.281551565544600466965),
            (0.3, -0.5244005127080407840382),
            (0.7, 0.5244005127080407840382),
            (0.975, 1.959963984540054235524),
            (0.999, 3.090232306167813541540),
            // exact quantile of the binary value nearest 0.99999
            (0.99999, 4.264890793923840769947),
        ];
        for (p, want) in cases {
            assert!(
                rel(quantile(p), want) < 1e-13,
                "quantile({p}) = {} want {want}",
                quantile(p)
            );
        }
        assert_eq!(quantile(0.5), 0.0);
        assert_eq!(quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(quantile(1.0), f64::INFINITY);
        assert!(quantile(1.5).is_nan());
        assert!(quantile(-0.1).is_nan());
    }

    #[test]
    fn quantile_inverts_cdf_across_range() {
        let mut p = 1e-12;
        while p < 0.5 {
            let lower = quantile(p);
            assert!(rel(cdf(lower), p) < 1e-12, "p = {p}");
            let upper = quantile(1.0 - p);
            assert!(rel(sf(upper), 1.0 - (1.0 - p)) < 1e-9, "1-p = {}", 1.0 - p);
            p *= 1.7;
        }
    }

    #[test]
    fn pdf_at_zero() {
        assert!(rel(pdf(0.0), 1.0 / sqrt_two_pi()) < 1e-15);
        assert!(rel(pdf(1.0), 0.24197072451914337) < 1e-15);
    }
}
