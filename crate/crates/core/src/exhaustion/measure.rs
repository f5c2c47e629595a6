use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{require_contains_k, sphere_volume};
use crate::error::{invalid, Result};
use crate::heat_green::{tail_value, TailPower};
use crate::model_geometry::ConnectedSumModel;
use crate::quad::{self, Tolerance};
use crate::special::sphere_area;

/// Multiplier applied to the Euclidean-certified `c₁, c₂` to get defaults.
pub const CONSTANT_SAFETY: f64 = 4.0;

/// Harmonic measure of the flat ball `B(o, r) ⊂ ℂ^m`: the rotation-invariant
/// probability measure on the sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SphereMeasure {
    pub m: u32,
    pub r: f64,
}

pub fn harmonic_measure_euclidean(m: u32, r: f64) -> Result<SphereMeasure> {
    if m < 1 || !(r > 0.0) {
        return invalid(format!("harmonic measure needs m ≥ 1 and r > 0 (got m={m}, r={r})"));
    }
    Ok(SphereMeasure { m, r })
}

impl SphereMeasure {
    pub fn total_mass(&self) -> f64 {
        1.0
    }

    /// Density against the Euclidean area element, `1/(ω_{2m−1} r^{2m−1})`.
    pub fn density(&self) -> f64 {
        1.0 / sphere_volume(self.m, self.r)
    }

    /// One point of `∂B(r)` relative to `o`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = 2 * self.m as usize;
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let s = crate::model_geometry::norm(&v);
        v.iter_mut().for_each(|x| *x *= self.r / s);
        v
    }
}

/// `c (|κ| + 1/r) ∫₀^∞ e^{−r²/(bt)} / V_min(√t) dt`, the common profile of the
/// gradient and density bounds.
fn bound_profile(model: &ConnectedSumModel, r: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return invalid(format!("bound constant must be positive, got {c}"));
    }
    require_contains_k(model, r)?;
    let k = model.constants();
    Ok(c * (model.kappa().abs() + 1.0 / r) * tail_value(&model.v_min(), k.b, TailPower::Zero, r)?)
}

/// `‖∇g_r(o,x)‖ ≤ c₁(|κ| + r^{−1}) ∫₀^∞ e^{−r²/(bt)}/V_min(√t) dt` on `∂Δ(r)`.
pub fn grad_green_bound(model: &ConnectedSumModel, r: f64, c1: f64) -> Result<f64> {
    bound_profile(model, r, c1)
}

/// `dπ_r ≤ c₂(|κ| + r^{−1}) ∫₀^∞ e^{−r²/(bt)}/V_min(√t) dt · dσ_r`.
pub fn harmonic_measure_bound(model: &ConnectedSumModel, r: f64, c2: f64) -> Result<f64> {
    bound_profile(model, r, c2)
}

/// Exact flat quantity against the bound with unit constant.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundCompare {
    pub r: f64,
    pub exact: f64,
    pub unit_bound: f64,
    /// Smallest admissible constant, `exact / unit_bound`.
    pub admissible: f64,
    /// `CONSTANT_SAFETY × admissible`.
    pub default: f64,
}

fn require_flat(model: &ConnectedSumModel) -> Result<u32> {
    if !model.is_flat_space() {
        return invalid("the comparison mode needs the flat model ℂ^m");
    }
    Ok(model.complex_dim())
}

/// `‖∇G‖ = 2ρ^{1−2m}/ω_{2m−1}` on `∂B(r)` against the gradient bound.
pub fn grad_green_compare_euclidean(model: &ConnectedSumModel, r: f64) -> Result<BoundCompare> {
    let m = require_flat(model)?;
    let exact = 2.0 * r.powi(1 - 2 * m as i32) / sphere_area(2 * m);
    let unit_bound = grad_green_bound(model, r, 1.0)?;
    let admissible = exact / unit_bound;
    Ok(BoundCompare { r, exact, unit_bound, admissible, default: CONSTANT_SAFETY * admissible })
}

/// Uniform density `1/(ω_{2m−1} r^{2m−1})` against the density bound.
pub fn harmonic_measure_compare_euclidean(model: &ConnectedSumModel, r: f64) -> Result<BoundCompare> {
    let m = require_flat(model)?;
    let exact = harmonic_measure_euclidean(m, r)?.density();
    let unit_bound = harmonic_measure_bound(model, r, 1.0)?;
    let admissible = exact / unit_bound;
    Ok(BoundCompare { r, exact, unit_bound, admissible, default: CONSTANT_SAFETY * admissible })
}

/// `π ∫_{H ∩ B(r)} g_r dA` for a complex affine hyperplane `H` at distance
/// `dist` from `o` in `ℂ^m`; this is the counting-function contribution
/// `(π^m/(m−1)!) ∫_{H∩B(r)} g_r α^{m−1}` of `H`.
pub fn hyperplane_slice_integral(m: u32, dist: f64, r: f64) -> Result<f64> {
    if m < 2 || !(dist >= 0.0) || !(r > 0.0) {
        return invalid("slice integral needs m ≥ 2, dist ≥ 0, r > 0");
    }
    if dist == 0.0 {
        return Err(crate::Error::Divergent("hyperplane passes through o, where g_r has its pole".into()));
    }
    if dist >= r {
        return Ok(0.0);
    }
    let n = 2 * m as i32 - 2;
    let wn = sphere_area(n as u32);
    let norm = (m as f64 - 1.0) * sphere_area(2 * m);
    let top = (r * r - dist * dist).sqrt();
    let g = |s: f64| {
        let rho2 = dist * dist + s * s;
        let gr = (rho2.powf(1.0 - m as f64) - r.powi(2 - 2 * m as i32)).max(0.0) / norm;
        gr * wn * s.powi(n - 1)
    };
    let brk = [0.0, dist.min(top), top];
    let brk: Vec<f64> = brk.iter().cloned().fold(Vec::new(), |mut v, x| {
        if v.last().is_none_or(|&l| x > l) {
            v.push(x);
        }
        v
    });
    let est = quad::integrate_with_breaks(&g, &brk, Tolerance::rel(1e-12)).require("hyperplane slice")?;
    Ok(std::f64::consts::PI * est.value)
}
