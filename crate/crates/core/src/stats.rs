//! Scalar statistics shared by every module: the normal CDF and quantile,
//! logistic link helpers, sample moments and empirical quantiles.

use std::f64::consts::FRAC_1_SQRT_2;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF via the complementary error function.
///
/// `Phi(z) = erfc(-z / sqrt(2)) / 2`, which keeps full relative accuracy in
/// the lower tail.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Inverse of [`normal_cdf`] for `p` in `(0, 1)`.
///
/// Acklam's rational approximation followed by two Halley steps.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -normal_quantile(1.0 - p);
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let mut x = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        let e = normal_cdf(x) - p;
        let u = e / normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Location, spread and shape summary of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Overall standard deviation, `n - 1` denominator.
    pub sd: f64,
    /// Bias-corrected sample skewness `G1` (0 when `n < 3`).
    pub skewness: f64,
    /// Bias-corrected excess kurtosis `G2` (0 when `n < 4`).
    pub excess_kurtosis: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let nf = n as f64;
        let m = mean(values);
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in values {
            let d = x - m;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let sd = if n >= 2 { (m2 / (nf - 1.0)).sqrt() } else { 0.0 };
        m2 /= nf;
        m3 /= nf;
        m4 /= nf;
        let skewness = if n >= 3 && m2 > 0.0 {
            let g1 = m3 / m2.powf(1.5);
            g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0)
        } else {
            0.0
        };
        let excess_kurtosis = if n >= 4 && m2 > 0.0 {
            let g2 = m4 / (m2 * m2) - 3.0;
            ((nf + 1.0) * g2 + 6.0) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0))
        } else {
            0.0
        };
        Self {
            n,
            mean: m,
            sd,
            skewness,
            excess_kurtosis,
        }
    }
}

/// Linear interpolation between order statistics (Hyndman-Fan type 7).
///
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from mpmath at 50 digits.
    #[test]
    fn normal_cdf_matches_high_precision_values() {
        let cases = [
            (0.0, 0.5),
            (1.0, 0.841_344_746_068_542_9),
            (-1.0, 0.158_655_253_931_457_05),
            (-1.0 / 14.0, 0.471_528_335_483_521_5),
            (0.7, 0.758_036_347_776_927),
            (-4.625, 1.872_992_005_556_709_5e-6),
            (-8.0, 6.220_960_574_271_784e-16),
            (3.0, 0.998_650_101_968_369_9),
        ];
        for (z, want) in cases {
            let got = normal_cdf(z);
            assert!((got - want).abs() < 1e-12, "Phi({z}) = {got}, want {want}");
            if want < 1e-3 {
                assert!(((got - want) / want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-9, 0.00135, 0.1, 0.5, 0.9, 0.99865, 1.0 - 1e-9] {
            let z = normal_quantile(p);
            assert!((normal_cdf(z) - p).abs() < 1e-12 * p.max(1e-3));
        }
        assert!((normal_quantile(0.998_650_101_968_369_9) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_logit_round_trip() {
        for &t in &[-30.0, -13.8, -1.0, 0.0, 0.3, 5.0, 13.8] {
            let p = sigmoid(t);
            assert!((logit(p) - t).abs() < 1e-9 * (1.0 + t.abs()));
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn type7_quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 5.0);
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert!((quantile_sorted(&s, 0.1) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn moments_of_small_sample() {
        // scipy.stats.skew(bias=False), kurtosis(bias=False)
        let x = [1.0, 2.0, 2.0, 3.0, 7.0, 11.0];
        let m = Moments::of(&x);
        assert!((m.mean - 26.0 / 6.0).abs() < 1e-15);
        assert!((m.sd - 3.881_580_434_135_903).abs() < 1e-12);
        assert!((m.skewness - 1.284_715_272_125_214_4).abs() < 1e-12);
        assert!((m.excess_kurtosis - 0.570_326_572_166_966_8).abs() < 1e-12);
    }
}
