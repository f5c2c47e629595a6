//! Tail integrals `∫₀^∞ e^{−r²/(ct)} / (V(√t) t^p) dt`, Euclidean kernels,
//! two-sided heat-kernel and Green bounds, and the integral estimates that
//! compare tail integrals with `1/V(r)`.

mod bounds;
mod estimates;
mod fit;

pub use bounds::{
    green_bounds, hk_full_bounds, hk_two_sided, reduced_sandwich, w_function, FullBoundConstants, GreenBounds,
    HeatBoundConstants, ReducedSandwich, TwoSided,
};
pub use estimates::{est1_check, est2_check, est2_constant, EstimateReport, EstimateRow};
pub use fit::{fit_bound_constants, fit_full_bound_constants, BoundFit, FullBoundFit, KernelSample, PairSample};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::model_geometry::{VolumeLaw, VolumeProfile};
use crate::quad::{self, Estimate, Tolerance};
use crate::special::sphere_area;

/// Relative tolerance handed to the half-line engine for every tail integral.
pub const TAIL_REL_TOL: f64 = 1e-12;

/// `(4πt)^{−m} e^{−ρ²/(4t)}`.
pub fn euclidean_heat_kernel(t: f64, rho: f64, m: u32) -> Result<f64> {
    if !(t > 0.0) {
        return invalid(format!("heat kernel needs t > 0, got {t}"));
    }
    Ok((-(m as f64) * (4.0 * PI * t).ln() - rho * rho / (4.0 * t)).exp())
}

/// `ρ^{2−2m} / ((m−1) ω_{2m−1})`.
pub fn green_euclidean(rho: f64, m: u32) -> Result<f64> {
    if m < 2 {
        return invalid("the flat Green function needs m ≥ 2");
    }
    if !(rho > 0.0) {
        return invalid(format!("Green function has a pole at ρ = 0 (got {rho})"));
    }
    Ok(rho.powi(2 - 2 * m as i32) / ((m as f64 - 1.0) * sphere_area(2 * m)))
}

/// Weight `dt` (`p = 0`) or `dt/t` (`p = 1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailPower {
    Zero,
    One,
}

impl TailPower {
    fn exponent(self) -> f64 {
        match self {
            TailPower::Zero => 0.0,
            TailPower::One => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailIntegralSpec {
    pub profile: VolumeProfile,
    pub c: f64,
    pub p: TailPower,
    pub r: f64,
}

pub fn tail_integral(spec: &TailIntegralSpec) -> Result<Estimate> {
    spec.profile.validate()?;
    tail(&spec.profile, spec.c, spec.p, spec.r)
}

/// `∫₀^∞ e^{−r²/(ct)} / (V(√t) t^p) dt` for any volume law.
pub fn tail<L: VolumeLaw + ?Sized>(law: &L, c: f64, p: TailPower, r: f64) -> Result<Estimate> {
    if !(c > 0.0 && c.is_finite()) {
        return invalid(format!("tail rate must be positive, got {c}"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return invalid(format!("tail radius must be positive, got {r}"));
    }
    if p == TailPower::Zero && !law.non_parabolic()? {
        return Err(Error::Divergent("∫ dt/V(√t) diverges for a parabolic profile".into()));
    }
    let q = r * r / c;
    let pe = p.exponent();
    let f = |t: f64| (-q / t - law.ln_volume(t.sqrt()) - pe * t.ln()).exp();
    let kinks: Vec<f64> = law.kinks().iter().map(|k| k * k).collect();
    let est = quad::integrate_half_line_with_breaks(&f, r * r, &kinks, Tolerance::rel(TAIL_REL_TOL))?;
    est.require("tail integral")
}

/// Value-only form of [`tail`].
pub fn tail_value<L: VolumeLaw + ?Sized>(law: &L, c: f64, p: TailPower, r: f64) -> Result<f64> {
    tail(law, c, p, r).map(|e| e.value)
}

/// `∫_r^∞ t dt / V(t)`.
pub fn volume_tail<L: VolumeLaw + ?Sized>(law: &L, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return invalid(format!("volume tail needs r > 0, got {r}"));
    }
    if !law.non_parabolic()? {
        return Err(Error::Divergent("∫ t dt/V(t) diverges for a parabolic profile".into()));
    }
    let f = |t: f64| (t.ln() - law.ln_volume(t)).exp();
    let est = quad::integrate_from(&f, r, r, Tolerance::rel(TAIL_REL_TOL))?;
    Ok(est.require("volume tail")?.value)
}

/// `(4Aπ^m / ((m−1)! a)) · ∫₀^∞ e^{−t²/(as)} / V_max(√s) ds/s`, which must
/// reduce to `t^{−2m}` on flat space.
pub fn ahlfors_shimizu_weight<L: VolumeLaw + ?Sized>(
    law: &L,
    constants: &HeatBoundConstants,
    m: u32,
    t: f64,
) -> Result<f64> {
    let tl = tail_value(law, constants.a, TailPower::One, t)?;
    let pref = 4.0 * constants.big_a * PI.powi(m as i32) / (crate::special::factorial(m - 1) * constants.a);
    Ok(pref * tl)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        assert!((euclidean_heat_kernel(1.0 / (4.0 * PI), 0.0, 1).unwrap() - 1.0).abs() < 1e-14);
        assert!((euclidean_heat_kernel(1.0, 0.0, 2).unwrap() - 6.332573977646111e-3).abs() < 1e-15);
        assert!(euclidean_heat_kernel(0.0, 1.0, 2).is_err());
    }

    #[test]
    fn euclidean_tails() {
        let v = VolumeProfile::euclidean(2);
        for &r in &[1.0, 2.0, 5.0] {
            let t0 = tail_value(&v, 4.0, TailPower::Zero, r).unwrap();
            let t1 = tail_value(&v, 4.0, TailPower::One, r).unwrap();
            assert!((t0 / (8.0 / (PI * PI * r * r)) - 1.0).abs() < 1e-10);
            assert!((t1 / (32.0 / (PI * PI * r.powi(4))) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn parabolic_tail_diverges() {
        let v = VolumeProfile::power(1.0, 2.0);
        assert!(matches!(tail(&v, 4.0, TailPower::Zero, 1.0), Err(Error::Divergent(_))));
        assert!(tail(&v, 4.0, TailPower::One, 1.0).is_ok());
    }

    #[test]
    fn green_closed_form() {
        assert!((green_euclidean(1.0, 2).unwrap() - 1.0 / (2.0 * PI * PI)).abs() < 1e-15);
        assert!((green_euclidean(2.0, 2).unwrap() - 1.0 / (8.0 * PI * PI)).abs() < 1e-15);
        assert!(green_euclidean(0.0, 2).is_err());
    }

    #[test]
    fn weight_identity() {
        for m in [2u32, 3] {
            let v = VolumeProfile::euclidean(m);
            let c = HeatBoundConstants::euclidean(m);
            for &t in &[0.1, 1.0, 10.0, 100.0] {
                let w = ahlfors_shimizu_weight(&v, &c, m, t).unwrap();
                assert!((w * t.powi(2 * m as i32) - 1.0).abs() < 1e-9);
            }
        }
    }
}
