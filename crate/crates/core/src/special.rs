//! Small special-function helpers.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

pub fn ln_factorial(n: u32) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Area of the unit sphere `S^{n−1} ⊂ ℝⁿ`; `sphere_area(2m)` is `ω_{2m−1}`.
pub fn sphere_area(n: u32) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0)
}

/// Volume of the ball of radius `r` in `ℝⁿ`.
pub fn ball_volume(n: u32, r: f64) -> f64 {
    PI.powf(n as f64 / 2.0) * r.powi(n as i32) / gamma(n as f64 / 2.0 + 1.0)
}

/// `P(χ²_k ≤ x)` survival complement, i.e. the upper tail `P(χ²_k > x)`.
pub fn chi_square_sf(k: f64, x: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(k).map(|d| d.sf(x)).unwrap_or(f64::NAN)
}

/// `P(χ²_{2m} ≤ x)` for even degrees of freedom, by the Poisson sum.
pub fn chi_square_even_cdf(m: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let h = 0.5 * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..m {
        term *= h / k as f64;
        sum += term;
    }
    1.0 - (-h).exp() * sum
}
