//! Scalar special functions and deterministic float reductions.
//!
//! The exp/tanh kernels here are rational approximations in plain f64
//! arithmetic (Cephes-style), so activation evaluation is reproducible
//! bit-for-bit across libm versions and fast enough for the training hot
//! path. Accuracy is verified against the platform libm in the tests
//! below.

/// ln(2) split into a high and a low part for extended-precision range
/// reduction in [`exp64`].
const EXP_C1: f64 = 6.931_457_519_531_25e-1;
const EXP_C2: f64 = 1.428_606_820_309_417_2e-6;
const LOG2E: f64 = std::f64::consts::LOG2_E;

const EXP_P: [f64; 3] = [
    1.261_771_930_748_105_9e-4,
    3.029_944_077_074_419_6e-2,
    9.999_999_999_999_999_9e-1,
];
const EXP_Q: [f64; 4] = [
    3.001_985_051_386_644_6e-6,
    2.524_483_403_496_841e-3,
    2.272_655_482_081_550_3e-1,
    2.000_000_000_000_000_0e0,
];

/// Branch-free rational core of e^x, valid for x in [-708, 709]
/// (the 2^n bit trick needs a normal-range exponent).
/// Straight-line arithmetic so slice loops over it vectorize.
#[inline(always)]
fn exp_core(x: f64) -> f64 {
    let n = (LOG2E * x + 0.5).floor();
    let r = x - n * EXP_C1 - n * EXP_C2;
    let rr = r * r;
    let p = r * ((EXP_P[0] * rr + EXP_P[1]) * rr + EXP_P[2]);
    let q = ((EXP_Q[0] * rr + EXP_Q[1]) * rr + EXP_Q[2]) * rr + EXP_Q[3];
    let e = 1.0 + 2.0 * p / (q - p);
    let scale = f64::from_bits(((n as i64 + 1023) as u64) << 52);
    e * scale
}

/// e^x for finite x; saturates to 0 / +inf outside [-708, 709].
#[inline]
pub fn exp64(x: f64) -> f64 {
    if x != x {
        return x;
    }
    if x > 709.0 {
        return f64::INFINITY;
    }
    if x < -708.0 {
        return 0.0;
    }
    exp_core(x)
}

/// tanh(x) via 1 - 2/(e^{2|x|}+1). Exact at 0, saturates to ±1.
#[inline(always)]
pub fn tanh64(x: f64) -> f64 {
    let t = (2.0 * x.abs()).min(709.0);
    let e = exp_core(t);
    (1.0 - 2.0 / (e + 1.0)).copysign(x)
}

/// Applies [`tanh64`] in place. Entries must be finite.
pub fn tanh_slice(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = tanh64(*x);
    }
}

/// SELU in place: λz for z > 0, λα(e^z - 1) otherwise. Entries must be
/// finite.
pub fn selu_slice(v: &mut [f64], lambda: f64, alpha: f64) {
    for x in v.iter_mut() {
        let z = *x;
        let neg = lambda * alpha * (exp_core(z.min(0.0).max(-708.0)) - 1.0);
        *x = if z > 0.0 { lambda * z } else { neg };
    }
}

/// Error function, |erf| <= 1.
///
/// Alternating Maclaurin series for |x| <= 3, Abramowitz-Stegun 7.1.14
/// continued fraction for the tail. Absolute accuracy ~1e-13.
pub fn erf(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 3.0 {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut n = 1.0f64;
        loop {
            term *= -x2 / n;
            let contrib = term / (2.0 * n + 1.0);
            sum += contrib;
            if contrib.abs() <= 1e-18 * sum.abs() + 1e-300 {
                break;
            }
            n += 1.0;
        }
        (2.0 / std::f64::consts::PI.sqrt()) * sum
    } else {
        (1.0 - erfc_tail(ax)).copysign(x)
    }
}

/// Complementary error function for x > 3 via continued fraction.
fn erfc_tail(x: f64) -> f64 {
    let mut f = x;
    for n in (1..=64).rev() {
        f = x + (n as f64 / 2.0) / f;
    }
    exp64(-x * x) / std::f64::consts::PI.sqrt() / f
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    exp64(-0.5 * x * x) / (2.0 * std::f64::consts::PI).sqrt()
}

const PPF_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239e0,
];
const PPF_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const PPF_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838e0,
    -2.549_732_539_343_734e0,
    4.374_664_141_464_968e0,
    2.938_163_982_698_783e0,
];
const PPF_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996e0,
    3.754_408_661_907_416e0,
];

/// Inverse standard normal CDF: Acklam's rational approximation
/// (relative error < 1.15e-9) followed by one Halley step against the
/// erf-based CDF, giving absolute error well below 1.2e-9 everywhere.
///
/// Returns -inf / +inf at p = 0 / 1 and NaN outside [0, 1].
pub fn norm_ppf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let z = acklam_ppf(p);
    // Halley refinement; skipped in the far tail where exp(z²/2)
    // would overflow (only reachable for subnormal p).
    if z * z < 1400.0 {
        let e = norm_cdf(z) - p;
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * exp64(0.5 * z * z);
        z - u / (1.0 + 0.5 * z * u)
    } else {
        z
    }
}

fn acklam_ppf(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((PPF_C[0] * q + PPF_C[1]) * q + PPF_C[2]) * q + PPF_C[3]) * q + PPF_C[4]) * q
            + PPF_C[5])
            / ((((PPF_D[0] * q + PPF_D[1]) * q + PPF_D[2]) * q + PPF_D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((PPF_A[0] * r + PPF_A[1]) * r + PPF_A[2]) * r + PPF_A[3]) * r + PPF_A[4]) * r
            + PPF_A[5])
            * q
            / (((((PPF_B[0] * r + PPF_B[1]) * r + PPF_B[2]) * r + PPF_B[3]) * r + PPF_B[4]) * r
                + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((PPF_C[0] * q + PPF_C[1]) * q + PPF_C[2]) * q + PPF_C[3]) * q + PPF_C[4]) * q
            + PPF_C[5])
            / ((((PPF_D[0] * q + PPF_D[1]) * q + PPF_D[2]) * q + PPF_D[3]) * q + 1.0)
    }
}

/// Balanced pairwise summation.
///
/// The reduction tree depends only on the slice length, so results are
/// independent of thread count and identical across reruns.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        let mut s = 0.0;
        for &x in v {
            s += x;
        }
        s
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        pairwise_sum(v) / v.len() as f64
    }
}

/// Sample standard deviation (ddof = 1); 0 when fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let ss: Vec<f64> = v.iter().map(|&x| (x - m) * (x - m)).collect();
    (pairwise_sum(&ss) / (v.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_matches_libm() {
        let mut worst = 0.0f64;
        let mut x = -700.0;
        while x < 700.0 {
            let got = exp64(x);
            let want = x.exp();
            let rel = ((got - want) / want).abs();
            worst = worst.max(rel);
            x += 0.123;
        }
        assert!(worst < 1e-14, "worst rel err {worst:e}");
        assert_eq!(exp64(0.0), 1.0);
        assert_eq!(exp64(f64::INFINITY), f64::INFINITY);
        assert_eq!(exp64(-800.0), 0.0);
    }

    #[test]
    fn tanh_matches_libm() {
        let mut x = -25.0;
        while x < 25.0 {
            let got = tanh64(x);
            let want = x.tanh();
            assert!(
                (got - want).abs() < 1e-15,
                "tanh({x}) = {got}, want {want}"
            );
            x += 0.0371;
        }
        assert_eq!(tanh64(0.0), 0.0);
        assert_eq!(tanh64(1e4), 1.0);
        assert_eq!(tanh64(-1e4), -1.0);
    }

    #[test]
    fn erf_reference_values() {
        // scipy.special.erf
        let cases = [
            (0.1, 0.1124629160182849),
            (0.5, 0.5204998778130465),
            (1.0, 0.8427007929497148),
            (2.0, 0.9953222650189527),
            (2.9, 0.9999589021219005),
            (3.2, 0.9999939742388483),
            (4.0, 0.9999999845827421),
            (6.0, 1.0),
        ];
        for (x, want) in cases {
            assert!((erf(x) - want).abs() < 1e-13, "erf({x})");
            assert!((erf(-x) + want).abs() < 1e-13, "erf(-{x})");
        }
        assert_eq!(erf(0.0), 0.0);
    }

    #[test]
    fn norm_cdf_reference_values() {
        // scipy.stats.norm.cdf
        let cases = [
            (-3.0, 0.0013498980316300933),
            (-1.0, 0.15865525393145707),
            (0.0, 0.5),
            (1.6448536269514722, 0.95),
            (2.5, 0.9937903346742238),
        ];
        for (x, want) in cases {
            assert!((norm_cdf(x) - want).abs() < 1e-13, "cdf({x})");
        }
    }

    #[test]
    fn ppf_is_erf_consistent() {
        // The rational approximation must invert the erf-based CDF to
        // within its stated 1.2e-9 absolute error.
        let mut p = 1e-7;
        while p < 1.0 {
            let z = norm_ppf(p);
            let back = norm_cdf(z);
            // convert CDF error to quantile error via the density
            let dz = (back - p).abs() / norm_pdf(z).max(1e-12);
            assert!(dz < 1.2e-9, "ppf({p}) off by {dz:e}");
            p += 0.000937;
        }
        assert_eq!(norm_ppf(0.5), 0.0);
        assert!(norm_ppf(-0.1).is_nan());
        assert!(norm_ppf(1.5).is_nan());
        assert_eq!(norm_ppf(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn pairwise_sum_properties() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64) * 0.001).collect();
        assert_relative_eq!(pairwise_sum(&v), 499.5, max_relative = 1e-12);
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[2.5]), 2.5);
    }

    #[test]
    fn std_ddof_one() {
        assert_relative_eq!(sample_std(&[1.0, 2.0, 3.0]), 1.0, epsilon = 1e-12);
        assert_eq!(sample_std(&[5.0]), 0.0);
    }
}
