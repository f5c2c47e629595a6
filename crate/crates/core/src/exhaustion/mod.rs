//! The Green exhaustion `Δ(r) = {G(o,·) > 2A ∫₀^∞ e^{−r²/(at)}/V_max(√t) dt}`,
//! its Dirichlet Green function `g_r`, the harmonic measure `π_r` and the
//! gradient and density bounds on `∂Δ(r)`.

mod measure;

pub use measure::{
    grad_green_bound, grad_green_compare_euclidean, harmonic_measure_bound, harmonic_measure_compare_euclidean,
    harmonic_measure_euclidean, hyperplane_slice_integral, BoundCompare, SphereMeasure, CONSTANT_SAFETY,
};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::heat_green::{green_euclidean, tail_value, TailPower};
use crate::model_geometry::{ConnectedSumModel, SheetPoint};
use crate::quad::{self, Tolerance};
use crate::special::sphere_area;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExhaustionLevel {
    pub r: f64,
    pub level: f64,
}

/// `2A ∫₀^∞ e^{−r²/(at)} / V_max(√t) dt`.
pub fn level(model: &ConnectedSumModel, r: f64) -> Result<f64> {
    let c = model.constants();
    Ok(2.0 * c.big_a * tail_value(&model.v_max(), c.a, TailPower::Zero, r)?)
}

pub fn exhaustion_level(model: &ConnectedSumModel, r: f64) -> Result<ExhaustionLevel> {
    Ok(ExhaustionLevel { r, level: level(model, r)? })
}

/// Radial Green function seen along end `j` (`j = 0` is the seam and uses
/// `V_min`): `2A ∫₀^∞ e^{−ρ²/(at)} / V_j(√t) dt`. On flat ends this is the
/// exact Green function.
pub fn end_green(model: &ConnectedSumModel, j: usize, rho: f64) -> Result<f64> {
    if j > model.theta() {
        return invalid(format!("end {j} outside 0..={}", model.theta()));
    }
    let c = model.constants();
    let law = EndVolume { model, j };
    Ok(2.0 * c.big_a * tail_value(&law, c.a, TailPower::Zero, rho)?)
}

struct EndVolume<'a> {
    model: &'a ConnectedSumModel,
    j: usize,
}

impl crate::model_geometry::VolumeLaw for EndVolume<'_> {
    fn ln_volume(&self, r: f64) -> f64 {
        self.model.end_ln_volume(self.j, r)
    }

    fn kinks(&self) -> Vec<f64> {
        if self.j == 0 {
            self.model.v_min().kinks()
        } else {
            Vec::new()
        }
    }

    fn non_parabolic(&self) -> Result<bool> {
        if self.j == 0 {
            self.model.v_min().non_parabolic()
        } else {
            self.model.ends()[self.j - 1].profile.non_parabolic()
        }
    }
}

/// `G(o, x)` on the model.
pub fn green(model: &ConnectedSumModel, x: &SheetPoint) -> Result<f64> {
    model.check_point(x)?;
    end_green(model, model.end_index(x), model.rho(x))
}

/// Radius `ρ_j(r)` of `∂Δ(r)` along end `j`: the root of `G_j(ρ) = level(r)`.
pub fn boundary_radius(model: &ConnectedSumModel, j: usize, r: f64) -> Result<f64> {
    let target = level(model, r)?;
    let f = |rho: f64| end_green(model, j, rho).map(|g| (g / target).ln()).unwrap_or(f64::NAN);
    let (mut lo, mut hi) = (r, r);
    while f(lo) < 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::Quadrature("boundary bracket collapsed".into()));
        }
    }
    while f(hi) > 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Quadrature("boundary bracket escaped".into()));
        }
    }
    quad::bisect(f, lo, hi, 1e-14)
}

/// `g_r(o, x) = G(o, x) − level(r)` for `x` in the closure of `Δ(r)`.
pub fn g_r(model: &ConnectedSumModel, x: &SheetPoint, r: f64) -> Result<f64> {
    let g = green(model, x)?;
    let l = level(model, r)?;
    let v = g - l;
    if v < -1e-10 * l {
        return invalid(format!("point lies outside Δ({r}) (g_r = {v:e})"));
    }
    Ok(v.max(0.0))
}

/// `(ρ^{2−2m} − r^{2−2m}) / ((m−1) ω_{2m−1})` on `ℂ^m`.
pub fn g_r_euclidean(m: u32, rho: f64, r: f64) -> Result<f64> {
    if !(rho > 0.0) || rho > r * (1.0 + 1e-12) {
        return invalid(format!("ρ = {rho} outside (0, r = {r}]"));
    }
    Ok((green_euclidean(rho, m)? - green_euclidean(r, m)?).max(0.0))
}

/// `2A ∫₀^∞ (e^{−t²/(as)} − e^{−r²/(as)}) / V_max(√s) ds`, the value of `g_r`
/// on `∂Δ(t)`, as a single quadrature of the difference.
pub fn g_r_on_inner_sphere(model: &ConnectedSumModel, t: f64, r: f64) -> Result<f64> {
    if !(t > 0.0) || t > r {
        return invalid(format!("need 0 < t ≤ r, got t = {t}, r = {r}"));
    }
    if t == r {
        return Ok(0.0);
    }
    use crate::model_geometry::VolumeLaw as _;
    let c = model.constants();
    let vmax = model.v_max();
    let (qt, dq) = (t * t / c.a, (r * r - t * t) / c.a);
    let f = |s: f64| -(-qt / s - vmax.ln_volume(s.sqrt())).exp() * (-dq / s).exp_m1();
    let kinks: Vec<f64> = vmax.kinks().iter().map(|k| k * k).collect();
    let est = quad::integrate_half_line_with_breaks(&f, t * t, &kinks, Tolerance::rel(1e-12))?
        .require("inner-sphere Green value")?;
    Ok(2.0 * c.big_a * est.value)
}

/// Smallest `r` with `K ⊂ Δ(r)`, i.e. `level(r) ≤ min_j G_j(πR)`; every seam
/// point lies within intrinsic distance `πR` of `o`.
pub fn k_threshold(model: &ConnectedSumModel) -> Result<f64> {
    let rad = model.central_radius();
    if rad == 0.0 {
        return Ok(0.0);
    }
    let arc = std::f64::consts::PI * rad;
    let mut g_seam = f64::INFINITY;
    for j in 1..=model.theta() {
        g_seam = g_seam.min(end_green(model, j, arc)?);
    }
    let f = |r: f64| level(model, r).map(|l| (l / g_seam).ln()).unwrap_or(f64::NAN);
    let (mut lo, mut hi) = (arc, arc);
    while f(lo) < 0.0 {
        lo *= 0.5;
    }
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    quad::bisect(f, lo, hi, 1e-13)
}

/// Fails when `Δ(r)` does not yet contain the central part.
pub fn require_contains_k(model: &ConnectedSumModel, r: f64) -> Result<()> {
    let thr = k_threshold(model)?;
    if r < thr {
        return invalid(format!("r = {r} is below the central-part threshold {thr}"));
    }
    Ok(())
}

/// Mean of `f(‖s e − c‖)` over unit vectors `e ∈ S^{n−1}`, where `|c| = d`,
/// by quadrature over the polar angle.
pub fn sphere_mean_of_distance(n: usize, s: f64, d: f64, f: &dyn Fn(f64) -> f64, tol: Tolerance) -> Result<f64> {
    if n < 2 || !(s >= 0.0) || !(d >= 0.0) {
        return invalid("sphere mean needs n ≥ 2, s ≥ 0, d ≥ 0");
    }
    if d == 0.0 || s == 0.0 {
        return Ok(f(s.max(d)));
    }
    let k = n as i32 - 2;
    let pi = std::f64::consts::PI;
    let g = |th: f64| th.sin().powi(k) * f((s * s + d * d - 2.0 * s * d * th.cos()).max(0.0).sqrt());
    let num = quad::integrate(&g, 0.0, pi, tol).require("sphere mean")?;
    let den = quad::integrate(&|th: f64| th.sin().powi(k), 0.0, pi, tol).value;
    Ok(num.value / den)
}

/// Total volume of a Euclidean sphere of radius `r` in `ℝ^{2m}`.
pub fn sphere_volume(m: u32, r: f64) -> f64 {
    sphere_area(2 * m) * r.powi(2 * m as i32 - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_levels() {
        let m = ConnectedSumModel::euclidean(2);
        assert!((level(&m, 1.0).unwrap() - 1.0 / (2.0 * PI * PI)).abs() < 1e-12);
        let q = level(&m, 2.0).unwrap() / level(&m, 1.0).unwrap();
        assert!((q - 0.25).abs() < 1e-10);
    }

    #[test]
    fn flat_boundary_is_sphere() {
        let m = ConnectedSumModel::euclidean(2);
        for &r in &[1.0, 2.0, 4.0, 8.0] {
            assert!((boundary_radius(&m, 1, r).unwrap() / r - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn g_r_values() {
        let m = ConnectedSumModel::euclidean(2);
        let x = SheetPoint::new(1, vec![1.0, 0.0, 0.0, 0.0]);
        let exact = 3.0 / (8.0 * PI * PI);
        assert!((g_r(&m, &x, 2.0).unwrap() - exact).abs() < 1e-11);
        assert!((g_r_euclidean(2, 1.0, 2.0).unwrap() - exact).abs() < 1e-15);
        assert!((g_r_on_inner_sphere(&m, 1.0, 2.0).unwrap() - exact).abs() < 1e-11);
        let far = SheetPoint::new(1, vec![3.0, 0.0, 0.0, 0.0]);
        assert!(g_r(&m, &far, 2.0).is_err());
    }

    #[test]
    fn glued_threshold_positive() {
        let m = ConnectedSumModel::glued_euclidean(2, 2);
        let t = k_threshold(&m).unwrap();
        assert!((t - PI).abs() < 1e-9, "{t}");
        assert!(require_contains_k(&m, 1.0).is_err());
    }
}
