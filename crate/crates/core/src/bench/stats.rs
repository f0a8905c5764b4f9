//! Standard normal distribution and the pooled two-proportion z-test.

use serde::{Deserialize, Serialize};

/// Complementary error function for x ≥ 0 (Abramowitz & Stegun 7.1.26,
/// |ε| ≤ 1.5e-7 on erf).
fn erfc_nonneg(x: f64) -> f64 {
    const P: f64 = 0.327_591_1;
    const A1: f64 = 0.254_829_592;
    const A2: f64 = -0.284_496_736;
    const A3: f64 = 1.421_413_741;
    const A4: f64 = -1.453_152_027;
    const A5: f64 = 1.061_405_429;
    let t = 1.0 / (1.0 + P * x);
    let poly = ((((A5 * t + A4) * t + A3) * t + A2) * t + A1) * t;
    poly * (-x * x).exp()
}

/// Upper tail 1 − Φ(x), computed directly so small tails keep precision.
pub fn normal_sf(x: f64) -> f64 {
    if x == 0.0 {
        // the approximation is off by ~1e-9 at the origin
        return 0.5;
    }
    let upper = 0.5 * erfc_nonneg(x.abs() / std::f64::consts::SQRT_2);
    if x >= 0.0 {
        upper
    } else {
        1.0 - upper
    }
}

/// Standard normal CDF. Φ(−x) = 1 − Φ(x) holds by construction.
pub fn normal_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 - normal_sf(x)
    } else {
        normal_sf(-x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    pub p_two_sided: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid counts: need 0 <= k <= n and n >= 1 (got {k1}/{n1}, {k2}/{n2})")]
pub struct CountError {
    pub k1: u64,
    pub n1: u64,
    pub k2: u64,
    pub n2: u64,
}

/// Pooled two-proportion z-test.
///
/// When the pooled proportion is 0 or 1 both samples are identical and
/// z = 0, p = 1 by convention.
pub fn two_prop_ztest(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ZTest, CountError> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(CountError { k1, n1, k2, n2 });
    }
    let (k1f, n1f, k2f, n2f) = (k1 as f64, n1 as f64, k2 as f64, n2 as f64);
    let pooled = (k1f + k2f) / (n1f + n2f);
    if pooled == 0.0 || pooled == 1.0 {
        return Ok(ZTest {
            z: 0.0,
            p_two_sided: 1.0,
        });
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (k1f / n1f - k2f / n2f) / se;
    let p_two_sided = (2.0 * normal_sf(z.abs())).min(1.0);
    Ok(ZTest { z, p_two_sided })
}
