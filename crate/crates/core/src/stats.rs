//! Scalar numerics shared across modules: standard-normal CDF and quantile,
//! linear-interpolation percentiles, and a dense Cholesky factorization.
//!
//! The normal CDF is evaluated through Cody's rational Chebyshev
//! approximation for erf/erfc (W. J. Cody, Math. Comp. 23, 1969; the
//! SPECFUN/CALERF coefficient set). Absolute error is below 1e-15, far
//! inside the 1e-7 budget the fragility math needs. The quantile uses
//! Acklam's rational approximation refined with one Halley step.

use crate::error::{Error, Result};

const FRAC_1_SQRT_PI: f64 = 5.641_895_835_477_562_9e-1;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

// CALERF region 1: |x| <= 0.46875, erf(x) = x * R(x^2).
const ERF_A: [f64; 5] = [
    3.161_123_743_870_565_6e0,
    1.138_641_541_510_501_6e2,
    3.774_852_376_853_020_2e2,
    3.209_377_589_138_469_5e3,
    1.857_777_061_846_031_5e-1,
];
const ERF_B: [f64; 4] = [
    2.360_129_095_234_412_1e1,
    2.440_246_379_344_441_7e2,
    1.282_616_526_077_372_3e3,
    2.844_236_833_439_170_6e3,
];

// CALERF region 2: 0.46875 < x <= 4, erfc(x) = exp(-x^2) * R(x).
const ERFC_C: [f64; 9] = [
    5.641_884_969_886_700_9e-1,
    8.883_149_794_388_375_9e0,
    6.611_919_063_714_163e1,
    2.986_351_381_974_001_3e2,
    8.819_522_212_417_690_9e2,
    1.712_047_612_634_070_6e3,
    2.051_078_377_826_071_5e3,
    1.230_339_354_797_997_2e3,
    2.153_115_354_744_038_5e-8,
];
const ERFC_D: [f64; 8] = [
    1.574_492_611_070_983_5e1,
    1.176_939_508_913_125e2,
    5.371_811_018_620_098_6e2,
    1.621_389_574_566_690_2e3,
    3.290_799_235_733_459_6e3,
    4.362_619_090_143_247e3,
    3.439_367_674_143_721_6e3,
    1.230_339_354_803_749_4e3,
];

// CALERF region 3: x > 4, erfc(x) = exp(-x^2)/x * (1/sqrt(pi) - R(1/x^2)/x^2).
const ERFC_P: [f64; 6] = [
    3.053_266_349_612_323_4e-1,
    3.603_448_999_498_044_4e-1,
    1.257_817_261_112_292_5e-1,
    1.608_378_514_874_227_7e-2,
    6.587_491_615_298_378e-4,
    1.631_538_713_730_209_8e-2,
];
const ERFC_Q: [f64; 5] = [
    2.568_520_192_289_822_4e0,
    1.872_952_849_923_460_5e0,
    5.279_051_029_514_284_1e-1,
    6.051_834_131_244_131_9e-2,
    2.335_204_976_268_691_8e-3,
];

fn erf_small(x: f64) -> f64 {
    let y = x * x;
    let mut num = ERF_A[4] * y;
    let mut den = y;
    for i in 0..3 {
        num = (num + ERF_A[i]) * y;
        den = (den + ERF_B[i]) * y;
    }
    x * (num + ERF_A[3]) / (den + ERF_B[3])
}

/// exp(-x^2) evaluated as exp(-ysq^2) * exp(-(x-ysq)(x+ysq)) with ysq a
/// 1/16-truncated copy of x, as in CALERF, to limit cancellation.
fn exp_neg_sq(x: f64) -> f64 {
    let ysq = (x * 16.0).trunc() / 16.0;
    let del = (x - ysq) * (x + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

fn erfc_mid(x: f64) -> f64 {
    let mut num = ERFC_C[8] * x;
    let mut den = x;
    for i in 0..7 {
        num = (num + ERFC_C[i]) * x;
        den = (den + ERFC_D[i]) * x;
    }
    exp_neg_sq(x) * (num + ERFC_C[7]) / (den + ERFC_D[7])
}

fn erfc_large(x: f64) -> f64 {
    let y = 1.0 / (x * x);
    let mut num = ERFC_P[5] * y;
    let mut den = y;
    for i in 0..4 {
        num = (num + ERFC_P[i]) * y;
        den = (den + ERFC_Q[i]) * y;
    }
    let r = y * (num + ERFC_P[4]) / (den + ERFC_Q[4]);
    exp_neg_sq(x) * (FRAC_1_SQRT_PI - r) / x
}

/// Complementary error function for any finite argument.
pub fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= 0.46875 {
        1.0 - erf_small(x)
    } else if ax <= 4.0 {
        let e = erfc_mid(ax);
        if x < 0.0 {
            2.0 - e
        } else {
            e
        }
    } else if ax < 26.6 {
        let e = erfc_large(ax);
        if x < 0.0 {
            2.0 - e
        } else {
            e
        }
    } else if x > 0.0 {
        0.0
    } else {
        2.0
    };
    v.clamp(0.0, 2.0)
}

/// Standard-normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

// Acklam's inverse-normal coefficients.
const INV_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239e0,
];
const INV_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const INV_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838e0,
    -2.549_732_539_343_734e0,
    4.374_664_141_464_968e0,
    2.938_163_982_698_783e0,
];
const INV_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996e0,
    3.754_408_661_907_416e0,
];

/// Standard-normal quantile function. `p` must lie strictly inside (0, 1).
pub fn normal_inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ParamDomain(format!(
            "normal_inv_cdf requires p in (0,1), got {p}"
        )));
    }
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((INV_C[0] * q + INV_C[1]) * q + INV_C[2]) * q + INV_C[3]) * q + INV_C[4]) * q
            + INV_C[5])
            / ((((INV_D[0] * q + INV_D[1]) * q + INV_D[2]) * q + INV_D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((INV_A[0] * r + INV_A[1]) * r + INV_A[2]) * r + INV_A[3]) * r + INV_A[4]) * r
            + INV_A[5])
            * q
            / (((((INV_B[0] * r + INV_B[1]) * r + INV_B[2]) * r + INV_B[3]) * r + INV_B[4]) * r
                + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((INV_C[0] * q + INV_C[1]) * q + INV_C[2]) * q + INV_C[3]) * q + INV_C[4]) * q
            + INV_C[5])
            / ((((INV_D[0] * q + INV_D[1]) * q + INV_D[2]) * q + INV_D[3]) * q + 1.0)
    };
    // One Halley step against the high-accuracy CDF.
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// Linear-interpolation percentile over a sorted slice: index h = (n-1)p,
/// interpolating between the straddling order statistics.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    assert!((0.0..=1.0).contains(&p), "percentile p out of range");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = lo.min(n - 2) + 1;
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Sorts a copy of `values` and takes the percentile.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in percentile input"));
    percentile_sorted(&v, p)
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 0.5)
}

/// In-place lower-triangular Cholesky factorization of a dense symmetric
/// matrix stored row-major. The upper triangle is zeroed. Fails on a
/// non-positive pivot.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "cholesky pivot {j} non-positive ({d:.3e})"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// y = L * x for a lower-triangular L stored row-major.
pub fn lower_tri_mul(l: &[f64], n: usize, x: &[f64], y: &mut [f64]) {
    for i in 0..n {
        let mut s = 0.0;
        for k in 0..=i {
            s += l[i * n + k] * x[k];
        }
        y[i] = s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force oracle: composite Simpson quadrature of the standard
    /// normal density from -10 to x. Independent of the rational
    /// approximation.
    fn cdf_by_quadrature(x: f64) -> f64 {
        let a = -10.0f64;
        let n = 20_000; // even
        let h = (x - a) / n as f64;
        let phi = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = phi(a) + phi(x);
        for i in 1..n {
            let t = a + i as f64 * h;
            s += phi(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn cdf_matches_quadrature_oracle() {
        for &x in &[-6.0, -3.0, -1.5, -0.3, 0.0, 0.2, 0.5, 1.0, 1.96, 2.5, 4.2, 6.0] {
            let got = normal_cdf(x);
            let want = cdf_by_quadrature(x);
            assert!(
                (got - want).abs() < 1e-9,
                "cdf({x}) = {got}, quadrature {want}"
            );
        }
    }

    #[test]
    fn cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((normal_cdf(-1.0) - 0.158_655_253_931_457_1).abs() < 1e-12);
        assert!((normal_cdf(1.96) - 0.975_002_104_851_779_5).abs() < 1e-12);
    }

    #[test]
    fn cdf_monotone_and_bounded() {
        let mut prev = 0.0;
        let mut x = -8.0;
        while x <= 8.0 {
            let v = normal_cdf(x);
            assert!((0.0..=1.0).contains(&v));
            assert!(v >= prev);
            prev = v;
            x += 0.01;
        }
    }

    #[test]
    fn inverse_roundtrip() {
        for &x in &[-3.5, -1.0, -0.1, 0.0, 0.7, 2.2, 3.9] {
            let p = normal_cdf(x);
            let back = normal_inv_cdf(p).unwrap();
            assert!((back - x).abs() < 1e-9, "roundtrip {x} -> {p} -> {back}");
        }
        assert!(normal_inv_cdf(0.0).is_err());
        assert!(normal_inv_cdf(1.0).is_err());
    }

    #[test]
    fn percentile_examples() {
        let rows = [1.0, 2.0, 3.0, 4.0];
        assert!((percentile(&rows, 0.5) - 2.5).abs() < 1e-12);
        assert!((percentile(&rows, 0.25) - 1.75).abs() < 1e-12);
        assert!((percentile(&rows, 0.75) - 3.25).abs() < 1e-12);

        let times: Vec<f64> = (1..=10).map(|i| (i * 10) as f64).collect();
        assert!((percentile(&times, 0.95) - 95.5).abs() < 1e-12);

        assert_eq!(percentile(&[7.0], 0.5), 7.0);
        assert_eq!(percentile(&[7.0], 0.95), 7.0);
    }

    #[test]
    fn cholesky_reconstructs() {
        // SPD matrix from A = M M^T.
        let n = 4;
        let m = [
            2.0, 0.0, 0.0, 0.0, 0.6, 1.5, 0.0, 0.0, -0.3, 0.2, 1.1, 0.0, 0.9, -0.5, 0.4, 0.8,
        ];
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += m[i * n + k] * m[j * n + k];
                }
                a[i * n + j] = s;
            }
        }
        let orig = a.clone();
        cholesky_in_place(&mut a, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += a[i * n + k] * a[j * n + k];
                }
                assert!((s - orig[i * n + j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(cholesky_in_place(&mut a, 2).is_err());
    }
}
