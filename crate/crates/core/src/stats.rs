//! Binomial confidence intervals.

use std::sync::OnceLock;

use statrs::distribution::{ContinuousCDF, Normal};

pub const CONFIDENCE: f64 = 0.99;

/// Two-sided standard normal quantile for [`CONFIDENCE`].
pub fn z_value() -> f64 {
    static Z: OnceLock<f64> = OnceLock::new();
    *Z.get_or_init(|| {
        Normal::new(0.0, 1.0)
            .expect("standard normal")
            .inverse_cdf(0.5 + CONFIDENCE / 2.0)
    })
}

/// Wilson score interval for `count` successes out of `trials`.
pub fn wilson(count: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = z_value();
    let n = trials as f64;
    let p = count as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the interval always contains p; clamp rounding at the ends
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// Mean and 99% normal-approximation half-width of a sample.
pub fn mean_halfwidth(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, f64::INFINITY);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, z_value() * (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_is_the_995_quantile() {
        assert!((z_value() - 2.575_829_303_549).abs() < 1e-9);
    }

    #[test]
    fn wilson_basic() {
        let (lo, hi) = wilson(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        let (lo, hi) = wilson(100, 100);
        assert_eq!(hi, 1.0);
        assert!(lo < 1.0);
        let (lo, hi) = wilson(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
        assert!(((0.5 - lo) - (hi - 0.5)).abs() < 1e-12);
        assert_eq!(wilson(0, 0), (0.0, 1.0));
    }

    #[test]
    fn mean_halfwidth_basic() {
        let (m, h) = mean_halfwidth(&[1.0, 1.0, 1.0]);
        assert_eq!((m, h), (1.0, 0.0));
        assert!(mean_halfwidth(&[2.0]).1.is_infinite());
    }
}
