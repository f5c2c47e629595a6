use serde::Serialize;

use crate::error::{invalid, Result};
use crate::heat_green::{tail_value, volume_tail, TailPower};
use crate::model_geometry::{ConnectedSumModel, VolumeLaw, VolumeProfile};
use crate::stats::linear_fit;

/// `ln Ξ(r, δ, κ)` with
/// `Ξ = (|κ| + r^{−1}) ∫₀^∞ e^{−r²/(bt)}/V_min(√t) dt / (r ∫₀^∞ e^{−r²/(at)}/V_max(√t) dt/t)^{1+δ}`.
pub fn ln_xi(model: &ConnectedSumModel, r: f64, delta: f64) -> Result<f64> {
    if !(r > 0.0) || !(delta >= 0.0) {
        return invalid(format!("Ξ needs r > 0 and δ ≥ 0 (got r={r}, δ={delta})"));
    }
    let c = model.constants();
    let num = tail_value(&model.v_min(), c.b, TailPower::Zero, r)?;
    let den = tail_value(&model.v_max(), c.a, TailPower::One, r)?;
    Ok((model.kappa().abs() + 1.0 / r).ln() + num.ln() - (1.0 + delta) * (r.ln() + den.ln()))
}

pub fn xi(model: &ConnectedSumModel, r: f64, delta: f64) -> Result<f64> {
    ln_xi(model, r, delta).map(f64::exp)
}

/// `E(r) = V(r) r^{−2} ∫_r^∞ t dt / V(t)`.
pub fn e_growth(profile: &VolumeProfile, r: f64) -> Result<f64> {
    profile.validate()?;
    let tail = volume_tail(profile, r)?;
    Ok((profile.ln_volume(r) - 2.0 * r.ln()).exp() * tail)
}

fn check_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.len() < 3 || r_grid.windows(2).any(|w| w[1] <= w[0]) || r_grid[0] <= 0.0 {
        return invalid("need an increasing grid of at least three positive radii");
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JyReport {
    pub rows: Vec<(f64, f64)>,
    /// Slope of `log⁺E` against `log r` over the upper half of the grid.
    pub limit: f64,
    /// Standard error of that slope.
    pub fit_error: f64,
    /// `log⁺E(r_max) / log r_max`.
    pub last_ratio: f64,
}

/// Estimate of `lim log⁺E(r) / log r`.
pub fn jy_limit(profile: &VolumeProfile, r_grid: &[f64]) -> Result<JyReport> {
    check_grid(r_grid)?;
    let rows: Vec<(f64, f64)> = r_grid.iter().map(|&r| e_growth(profile, r).map(|e| (r, e))).collect::<Result<_>>()?;
    let tail = &rows[rows.len() / 2..];
    let x: Vec<f64> = tail.iter().map(|(r, _)| r.ln()).collect();
    let y: Vec<f64> = tail.iter().map(|(_, e)| e.ln().max(0.0)).collect();
    let fit = if tail.len() >= 2 { linear_fit(&x, &y) } else { linear_fit(&[0.0, 1.0], &[0.0, 0.0]) };
    let (rl, el) = *rows.last().unwrap();
    let last_ratio = if rl > 1.0 { el.ln().max(0.0) / rl.ln() } else { f64::NAN };
    Ok(JyReport { rows, limit: fit.slope, fit_error: fit.slope_se, last_ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XiEnvelope {
    pub name: String,
    /// Constant fitted on the lower half of the grid.
    pub constant: f64,
    /// The envelope with that constant covers the upper half.
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XiAsymptotics {
    /// `(r, log⁺Ξ(r, δ, κ))`.
    pub rows: Vec<(f64, f64)>,
    /// Fitted slope of `ln Ξ` against `ln r`.
    pub log_slope: f64,
    pub log_slope_se: f64,
    /// `(2m−1)(1+δ)`.
    pub polynomial_exponent: f64,
    pub envelopes: Vec<XiEnvelope>,
}

/// Calibrate `sup (y − shape·C)` style envelopes on the lower half of the
/// grid, then test them on the upper half.
fn envelope(name: &str, rows: &[(f64, f64)], excess: &dyn Fn(f64, f64) -> f64) -> XiEnvelope {
    let half = rows.len() / 2;
    let constant = rows[..half.max(1)].iter().map(|&(r, y)| excess(r, y)).fold(f64::NEG_INFINITY, f64::max);
    let holds = rows[half..].iter().all(|&(r, y)| excess(r, y) <= constant + 1e-9 * (1.0 + constant.abs()));
    XiEnvelope { name: name.into(), constant, holds }
}

/// Growth of `log⁺Ξ` against `C r²`, `(2m−1)(1+δ) log r + C` and, on
/// homogeneous models, `log⁺E(r) + (4m−2)δ log r + C`.
pub fn xi_asymptotics(model: &ConnectedSumModel, delta: f64, r_grid: &[f64]) -> Result<XiAsymptotics> {
    check_grid(r_grid)?;
    let ln: Vec<f64> = r_grid.iter().map(|&r| ln_xi(model, r, delta)).collect::<Result<_>>()?;
    let rows: Vec<(f64, f64)> = r_grid.iter().zip(&ln).map(|(&r, &l)| (r, l.max(0.0))).collect();
    let lx: Vec<f64> = r_grid.iter().map(|r| r.ln()).collect();
    let fit = linear_fit(&lx, &ln);
    let m = model.complex_dim() as f64;
    let poly = (2.0 * m - 1.0) * (1.0 + delta);
    let mut envelopes = vec![
        envelope("r_squared", &rows, &|r, y| y / (r * r)),
        envelope("polynomial", &rows, &|r, y| y - poly * r.ln().max(0.0)),
    ];
    if model.is_homogeneous() {
        let p = model.ends()[0].profile.clone();
        let le: Vec<f64> = r_grid.iter().map(|&r| e_growth(&p, r).map(|e| e.ln().max(0.0))).collect::<Result<_>>()?;
        let shifted: Vec<(f64, f64)> = rows.iter().zip(&le).map(|(&(r, y), &e)| (r, y - e)).collect();
        envelopes.push(envelope("log_e", &shifted, &|r, y| y - (4.0 * m - 2.0) * delta * r.ln().max(0.0)));
    }
    Ok(XiAsymptotics { rows, log_slope: fit.slope, log_slope_se: fit.slope_se, polynomial_exponent: poly, envelopes })
}
