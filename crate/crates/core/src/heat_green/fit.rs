use serde::{Deserialize, Serialize};

use super::bounds::{full_shape, FullShape};
use super::{FullBoundConstants, HeatBoundConstants};
use crate::error::{invalid, Error, Result};
use crate::model_geometry::{ConnectedSumModel, SheetPoint, VolumeLaw};
use crate::quad::golden_min;

/// A heat-kernel observation `p(t, o, x)` at distance `ρ` from `o`, known to
/// lie in `[lo, hi]` (`lo = hi` for exact values).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub t: f64,
    pub rho: f64,
    pub lo: f64,
    pub hi: f64,
}

impl KernelSample {
    pub fn exact(t: f64, rho: f64, p: f64) -> Self {
        KernelSample { t, rho, lo: p, hi: p }
    }
}

/// An observation of `p(t, x, y)` for the three-term bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub t: f64,
    pub x: SheetPoint,
    pub y: SheetPoint,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundFit {
    pub constants: HeatBoundConstants,
    /// Mean of `ln(lo_i / lower_i)` over the samples.
    pub lower_log_slack: f64,
    /// Mean of `ln(upper_i / hi_i)` over the samples.
    pub upper_log_slack: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FullBoundFit {
    pub constants: FullBoundConstants,
    pub lower_log_slack: f64,
    pub upper_log_slack: f64,
}

const RATE_LO: f64 = 0.25;
const RATE_HI: f64 = 256.0;
const RATE_GRID: usize = 121;

fn check_samples<'a>(it: impl Iterator<Item = (f64, f64, f64)> + 'a) -> Result<()> {
    for (i, (t, lo, hi)) in it.enumerate() {
        if !(t > 0.0) {
            return invalid(format!("sample {i}: t must be positive"));
        }
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(Error::Infeasible(format!("sample {i}: kernel value {lo:e} is not positive")));
        }
        if lo > hi {
            return Err(Error::Infeasible(format!("sample {i}: lower value {lo:e} exceeds upper value {hi:e}")));
        }
    }
    Ok(())
}

/// One side of the fit: for each rate the tightest admissible prefactor, and
/// the rate minimising the mean log slack. `ln_shape(rate, i)` is the log of
/// the envelope shape at sample `i`; `ln_target(i)` the log of the value it
/// must stay below (`lower`) or above (`upper`).
fn fit_side(
    n: usize,
    ln_shape: &dyn Fn(f64, usize) -> f64,
    ln_target: &dyn Fn(usize) -> f64,
    lower: bool,
) -> Result<(f64, f64, f64)> {
    let eval = |ln_rate: f64| -> (f64, f64) {
        let rate = ln_rate.exp();
        let gaps: Vec<f64> = (0..n).map(|i| ln_target(i) - ln_shape(rate, i)).collect();
        if gaps.iter().any(|g| g.is_nan()) {
            return (f64::NAN, f64::INFINITY);
        }
        let ln_c = if lower {
            gaps.iter().cloned().fold(f64::INFINITY, f64::min)
        } else {
            gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        if !ln_c.is_finite() {
            return (ln_c, f64::INFINITY);
        }
        let slack = gaps.iter().map(|g| if lower { g - ln_c } else { ln_c - g }).sum::<f64>() / n as f64;
        (ln_c, slack)
    };
    let (lo, hi) = (RATE_LO.ln(), RATE_HI.ln());
    let step = (hi - lo) / (RATE_GRID - 1) as f64;
    let mut best = (f64::INFINITY, lo);
    for k in 0..RATE_GRID {
        let u = lo + step * k as f64;
        let (_, s) = eval(u);
        if s < best.0 {
            best = (s, u);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Infeasible("no rate gives a finite envelope on the samples".into()));
    }
    let (u, _) = golden_min(|u| eval(u).1, (best.1 - step).max(lo), (best.1 + step).min(hi), 1e-12);
    let (u, s) = if eval(u).1 <= best.0 { (u, eval(u).1) } else { (best.1, best.0) };
    let (ln_c, _) = eval(u);
    Ok((ln_c.exp(), u.exp(), s))
}

/// Deterministic grid-plus-golden search for `(A, B, a, b)` such that
/// `A/V_max(√t) e^{−ρ²/(at)} ≤ lo` and `hi ≤ B/V_min(√t) e^{−ρ²/(bt)}` on
/// every sample, with the smallest mean log slack on each side.
pub fn fit_bound_constants(model: &ConnectedSumModel, samples: &[KernelSample]) -> Result<BoundFit> {
    if samples.is_empty() {
        return invalid("no kernel samples to fit");
    }
    check_samples(samples.iter().map(|s| (s.t, s.lo, s.hi)))?;
    let vmax: Vec<f64> = samples.iter().map(|s| model.v_max().ln_volume(s.t.sqrt())).collect();
    let vmin: Vec<f64> = samples.iter().map(|s| model.v_min().ln_volume(s.t.sqrt())).collect();
    let expo = |rate: f64, i: usize| -samples[i].rho * samples[i].rho / (rate * samples[i].t);
    let (big_a, a, ls) = fit_side(samples.len(), &|r, i| expo(r, i) - vmax[i], &|i| samples[i].lo.ln(), true)?;
    let (big_b, b, us) = fit_side(samples.len(), &|r, i| expo(r, i) - vmin[i], &|i| samples[i].hi.ln(), false)?;
    let constants = HeatBoundConstants::new(big_a, big_b, a, b)?;
    Ok(BoundFit { constants, lower_log_slack: ls, upper_log_slack: us })
}

/// The same search for `(C₁, c₁, C₂, c₂)` of the three-term bounds.
pub fn fit_full_bound_constants(model: &ConnectedSumModel, samples: &[PairSample]) -> Result<FullBoundFit> {
    if samples.is_empty() {
        return invalid("no kernel samples to fit");
    }
    check_samples(samples.iter().map(|s| (s.t, s.lo, s.hi)))?;
    let shapes: Vec<FullShape> = samples.iter().map(|s| full_shape(model, s.t, &s.x, &s.y)).collect::<Result<_>>()?;
    let shape = |r: f64, i: usize| shapes[i].eval(samples[i].t, r).ln();
    let (big_c1, c1, ls) = fit_side(samples.len(), &shape, &|i| samples[i].lo.ln(), true)?;
    let (big_c2, c2, us) = fit_side(samples.len(), &shape, &|i| samples[i].hi.ln(), false)?;
    let constants = FullBoundConstants { big_c1, c1, big_c2, c2 };
    constants.validate()?;
    Ok(FullBoundFit { constants, lower_log_slack: ls, upper_log_slack: us })
}
