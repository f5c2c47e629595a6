use serde::Serialize;

use super::{tail_value, volume_tail, TailPower};
use crate::error::{invalid, Result};
use crate::model_geometry::{VolumeLaw, VolumeProfile};
use crate::par;
use crate::quad::{self, golden_min, Tolerance};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EstimateRow {
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs/lhs` for upper estimates, `lhs/rhs` for lower ones; `≥ 1` means
    /// the inequality holds.
    pub slack: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub constant: f64,
    pub rows: Vec<EstimateRow>,
    pub violations: usize,
    pub min_slack: f64,
}

impl EstimateReport {
    fn from_rows(constant: f64, rows: Vec<EstimateRow>) -> Self {
        let violations = rows.iter().filter(|r| !(r.slack >= 1.0)).count();
        let min_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
        EstimateReport { constant, rows, violations, min_slack }
    }
}

fn check_grid(mu: f64, r_grid: &[f64], min_r: f64) -> Result<()> {
    if !(mu > 0.0) {
        return invalid(format!("μ must be positive, got {mu}"));
    }
    if r_grid.is_empty() || r_grid.iter().any(|&r| !(r > min_r && r.is_finite())) {
        return invalid(format!("estimate grid needs radii > {min_r}"));
    }
    Ok(())
}

/// Lower estimate `∫₀^∞ e^{−r²/(μt)} / V(√t) dt/t ≥ c_μ / V(r)` with the
/// explicit `c_μ = e^{−1/μ}/m`.
pub fn est1_check(profile: &VolumeProfile, m: u32, mu: f64, r_grid: &[f64]) -> Result<EstimateReport> {
    profile.validate()?;
    check_grid(mu, r_grid, 0.0)?;
    let c_mu = (-1.0 / mu).exp() / m as f64;
    let rows = par::map_slice(r_grid, |&r| -> Result<EstimateRow> {
        let lhs = tail_value(profile, mu, TailPower::One, r)?;
        let rhs = c_mu / profile.volume_at(r);
        Ok(EstimateRow { r, lhs, rhs, slack: lhs / rhs })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(EstimateReport::from_rows(c_mu, rows))
}

/// `C_μ ≥ r^{2−4m} ∫_{r²}^∞ s^{2m−2} e^{−s/(μr²)} ds`, found by maximising the
/// ratio over `r ∈ [1, 10³]` and certifying the maximum on a grid.
pub fn est2_constant(m: u32, mu: f64) -> Result<f64> {
    let k = 2 * m as i32 - 2;
    let ratio = |r: f64| -> f64 {
        let r2 = r * r;
        let f = |s: f64| ((k as f64) * (s / r2).ln() - s / (mu * r2)).exp();
        let est = quad::integrate_from(&f, r2, mu * r2, Tolerance::rel(1e-12)).map(|e| e.value).unwrap_or(f64::NAN);
        est / r2
    };
    let lr = |u: f64| ratio(u.exp());
    let grid: Vec<f64> = (0..=60).map(|i| (1e3f64).ln() * i as f64 / 60.0).collect();
    let vals: Vec<f64> = grid.iter().map(|&u| lr(u)).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(crate::Error::Quadrature("auxiliary integral for C_μ failed".into()));
    }
    let (imax, vmax) =
        vals.iter().cloned().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, v)| if v > a.1 { (i, v) } else { a });
    let lo = grid[imax.saturating_sub(1)];
    let hi = grid[(imax + 1).min(grid.len() - 1)];
    let (_, neg) = golden_min(|u| -lr(u), lo, hi, 1e-10);
    Ok(vmax.max(-neg) * (1.0 + 1e-12))
}

/// Upper estimate `∫₀^∞ e^{−r²/(μt)} / V(√t) dt ≤ C_μ r²/V(r) + 2∫_r^∞ t dt/V(t)`
/// for radii `r > 1`.
pub fn est2_check(profile: &VolumeProfile, m: u32, mu: f64, r_grid: &[f64]) -> Result<EstimateReport> {
    profile.validate()?;
    check_grid(mu, r_grid, 1.0)?;
    let c_mu = est2_constant(m, mu)?;
    let rows = par::map_slice(r_grid, |&r| -> Result<EstimateRow> {
        let lhs = tail_value(profile, mu, TailPower::Zero, r)?;
        let rhs = c_mu * r * r / profile.volume_at(r) + 2.0 * volume_tail(profile, r)?;
        Ok(EstimateRow { r, lhs, rhs, slack: rhs / lhs })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(EstimateReport::from_rows(c_mu, rows))
}
