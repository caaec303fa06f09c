//! Scalar normal-distribution helpers.

use std::f64::consts::SQRT_2;

/// ln(2π)/2
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument `ln Φ` switches to the asymptotic tail series.
pub const LOG_CDF_TAIL_CUTOFF: f64 = -8.0;

/// Standard normal density φ(x).
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - HALF_LN_2PI).exp()
}

/// ln φ(x).
pub fn normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - HALF_LN_2PI
}

/// Standard normal CDF Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// ln Φ(x), finite for every finite `x`.
///
/// Uses the Mills-ratio asymptotic series below [`LOG_CDF_TAIL_CUTOFF`]:
/// Φ(x) = φ(x)/|x| · Σ_k (−1)^k (2k−1)!! / x^{2k}.
pub fn normal_log_cdf(x: f64) -> f64 {
    if x < LOG_CDF_TAIL_CUTOFF {
        normal_log_pdf(x) - (-x).ln() + tail_series(x).ln()
    } else if x > 5.0 {
        // Φ close to 1: ln(1 − Q) with Q the upper tail.
        (-0.5 * libm::erfc(x / SQRT_2)).ln_1p()
    } else {
        normal_cdf(x).ln()
    }
}

fn tail_series(x: f64) -> f64 {
    let inv_x2 = 1.0 / (x * x);
    let mut term = 1.0;
    let mut total = 1.0;
    for k in 1..=12 {
        term *= -((2 * k - 1) as f64) * inv_x2;
        total += term;
    }
    total
}

/// φ(x)/Φ(x), the inverse Mills ratio, evaluated in log space.
pub fn inverse_mills(x: f64) -> f64 {
    (normal_log_pdf(x) - normal_log_cdf(x)).exp()
}

/// ln Σ exp(v_i) with max subtraction. Empty input gives −∞.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_reference_values() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-14);
        assert_relative_eq!(normal_cdf(-3.0), 1.349_898_031_630_094_6e-3, max_relative = 1e-12);
        assert_relative_eq!(normal_cdf(-4.0), 3.167_124_183_311_992e-5, max_relative = 1e-12);
    }

    #[test]
    fn log_cdf_is_continuous_at_tail_cutoff() {
        let below = normal_log_cdf(LOG_CDF_TAIL_CUTOFF - 1e-9);
        let above = normal_log_cdf(LOG_CDF_TAIL_CUTOFF + 1e-9);
        assert!((below - above).abs() < 1e-7, "{below} vs {above}");
        // erfc is still representable here, compare directly
        for &x in &[-8.5, -12.0, -20.0, -30.0] {
            let direct = normal_cdf(x).ln();
            assert_relative_eq!(normal_log_cdf(x), direct, max_relative = 1e-10);
        }
    }

    #[test]
    fn log_cdf_finite_far_in_tail() {
        let v = normal_log_cdf(-60.0);
        assert!(v.is_finite());
        assert!(v < -1800.0);
        assert!(normal_log_cdf(40.0).abs() < 1e-300);
    }

    #[test]
    fn mills_ratio_tends_to_minus_x() {
        assert_relative_eq!(inverse_mills(0.0), normal_pdf(0.0) / 0.5, epsilon = 1e-14);
        let x = -30.0;
        assert!((inverse_mills(x) / -x - 1.0).abs() < 2e-3);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let v = [0.1, -2.0, 3.5];
        let direct = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(log_sum_exp(&v), direct, epsilon = 1e-14);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_relative_eq!(log_sum_exp(&[-1000.0, -1000.0]), -1000.0 + LN_2, epsilon = 1e-12);
    }
}
