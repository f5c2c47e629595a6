//! Least-squares helpers for the growth fits.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; 0 for two points or an exact fit.
    pub slope_se: f64,
}

/// Ordinary least squares `y ≈ intercept + slope · x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len().min(y.len());
    assert!(n >= 2, "a line fit needs two points");
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let sxx: f64 = x[..n].iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit { slope, intercept, slope_se }
}
