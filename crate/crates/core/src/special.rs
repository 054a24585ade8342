//! Special functions: log-gamma, digamma and the standard normal CDF pair.
//!
//! `ln_gamma` and `digamma` use the upward recurrence to push the argument
//! past [`ASYMPTOTIC_CUTOFF`] and then the Stirling / de Moivre asymptotic
//! series truncated after the `x^-13` (resp. `x^-14`) term. At the cutoff the
//! first omitted term is below `1e-17`, so relative accuracy is limited by
//! rounding, not truncation.

use crate::math::{abs, exp, ln, sqrt};

const ASYMPTOTIC_CUTOFF: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Natural log of the gamma function for `x > 0`. Returns `NaN` otherwise.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) || x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    let mut x = x;
    let mut shift = 1.0;
    let mut shift_log = 0.0;
    while x < ASYMPTOTIC_CUTOFF {
        shift *= x;
        // keep the running product in range for tiny arguments
        if !(1e-250..=1e250).contains(&shift) {
            shift_log += ln(shift);
            shift = 1.0;
        }
        x += 1.0;
    }
    shift_log += ln(shift);
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number coefficients B_{2k} / (2k (2k-1))
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2 * (-691.0 / 360_360.0 + inv2 * (1.0 / 156.0)))))));
    (x - 0.5) * ln(x) - x + HALF_LN_2PI + series - shift_log
}

/// Digamma function psi(x) = d/dx ln Gamma(x) for `x > 0`.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) || x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < ASYMPTOTIC_CUTOFF {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B_{2k} / (2k)
    let series = inv2
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 120.0
                    + inv2
                        * (1.0 / 252.0
                            + inv2
                                * (-1.0 / 240.0
                                    + inv2
                                        * (1.0 / 132.0
                                            + inv2 * (-691.0 / 32_760.0 + inv2 * (1.0 / 12.0)))))));
    acc + ln(x) - 0.5 * inv - series
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Inverse of the standard normal CDF (Acklam's rational approximation with
/// one Halley correction step). `p` must lie in `(0, 1)`.
pub fn norm_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
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
    const P_LOW: f64 = 0.024_25;
    let x = if p < P_LOW {
        let q = sqrt(-2.0 * ln(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = sqrt(-2.0 * ln(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = norm_cdf(x) - p;
    let u = e * sqrt(2.0 * core::f64::consts::PI) * exp(x * x / 2.0);
    let refined = x - u / (1.0 + x * u / 2.0);
    if refined.is_finite() && abs(refined - x) < 1.0 {
        refined
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn ln_gamma_matches_libm() {
        let mut x = 1e-6;
        while x < 1e6 {
            let want = libm::lgamma(x);
            let got = ln_gamma(x);
            // relative where ln Gamma is away from its zeros at 1 and 2
            let tol = 1e-13 * want.abs().max(1.0);
            assert!((got - want).abs() < tol, "x={x}: {got} vs {want}");
            x *= 1.37;
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        // the recurrence leaves ~1e-15 absolute error at the zeros 1 and 2
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        // Gamma(1/2) = sqrt(pi)
        assert!(rel_err(ln_gamma(0.5), 0.5 * core::f64::consts::PI.ln()) < 1e-14);
        // 10! = 3628800
        assert!(rel_err(ln_gamma(11.0), 3_628_800f64.ln()) < 1e-14);
        assert!(ln_gamma(0.0).is_nan());
        assert!(ln_gamma(-1.0).is_nan());
    }

    #[test]
    fn digamma_known_values() {
        assert!(rel_err(digamma(1.0), -EULER_GAMMA) < 1e-14);
        assert!(rel_err(digamma(2.0), 1.0 - EULER_GAMMA) < 1e-13);
        let half = -EULER_GAMMA - 2.0 * core::f64::consts::LN_2;
        assert!(rel_err(digamma(0.5), half) < 1e-14);
        // psi(x+1) = psi(x) + 1/x across the recurrence cutoff
        for &x in &[0.01, 0.7, 3.3, 9.5, 10.0, 27.0, 1234.5] {
            assert!((digamma(x + 1.0) - digamma(x) - 1.0 / x).abs() < 1e-12 * (1.0 + 1.0 / x));
        }
    }

    #[test]
    fn digamma_is_derivative_of_ln_gamma() {
        // Richardson-extrapolated central differences of the independent libm lgamma
        for &x in &[0.3, 1.5, 4.0, 12.0, 80.0, 500.0] {
            let d = |h: f64| (libm::lgamma(x + h) - libm::lgamma(x - h)) / (2.0 * h);
            let h = 1e-3 * x.max(1.0);
            let fd = (4.0 * d(h / 2.0) - d(h)) / 3.0;
            assert!(rel_err(digamma(x), fd) < 1e-9, "x={x}");
        }
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!((norm_cdf(norm_quantile(p)) - p).abs() < 1e-14);
        }
        for &p in &[1e-12, 1e-6, 1.0 - 1e-6] {
            assert!(rel_err(norm_cdf(norm_quantile(p)), p) < 1e-9);
        }
        assert!(norm_quantile(0.5).abs() < 1e-15);
    }
}
