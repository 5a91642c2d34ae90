//! Truncated normal helpers shared by the instance generators and priors.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::rng::SimRng;

fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("valid standard normal")
}

/// Draws from `N(mean, sd)` truncated to `[lo, hi]` by inverting the CDF.
pub fn truncated_normal(rng: &mut SimRng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if sd <= 0.0 {
        return mean.clamp(lo, hi);
    }
    let n = standard();
    let a = n.cdf((lo - mean) / sd);
    let b = n.cdf((hi - mean) / sd);
    let u = a + rng.random::<f64>() * (b - a);
    let z = n.inverse_cdf(u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON));
    (mean + sd * z).clamp(lo, hi)
}

/// Draws from an untruncated `N(mean, sd)`.
pub fn normal(rng: &mut SimRng, mean: f64, sd: f64) -> f64 {
    truncated_normal(rng, mean, sd, f64::NEG_INFINITY, f64::INFINITY)
}

/// `P(X ≤ x)` for `X ~ N(mean, sd)` truncated to `[0, ∞)`.
pub fn truncated_normal_cdf_nonneg(x: f64, mean: f64, sd: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if sd <= 0.0 {
        return if x >= mean { 1.0 } else { 0.0 };
    }
    let n = standard();
    // Work with upper tails to keep precision when mean ≫ 0.
    let tail_x = n.sf((x - mean) / sd);
    let tail_0 = n.sf(-mean / sd);
    (1.0 - tail_x / tail_0).clamp(0.0, 1.0)
}
