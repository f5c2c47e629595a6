use serde::{Deserialize, Serialize};

use super::{tail_value, TailPower};
use crate::error::{invalid, Error, Result};
use crate::model_geometry::{h_function, ConnectedSumModel, SheetPoint, VolumeLaw};
use crate::special::ln_factorial;

/// `(A, B, a, b)` of the sandwich
/// `A/V_max(√t) e^{−ρ²/(at)} ≤ p(t,o,x) ≤ B/V_min(√t) e^{−ρ²/(bt)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatBoundConstants {
    #[serde(rename = "A")]
    pub big_a: f64,
    #[serde(rename = "B")]
    pub big_b: f64,
    pub a: f64,
    pub b: f64,
}

impl HeatBoundConstants {
    pub fn new(big_a: f64, big_b: f64, a: f64, b: f64) -> Result<Self> {
        let c = HeatBoundConstants { big_a, big_b, a, b };
        c.validate()?;
        Ok(c)
    }

    /// `A = B = 1/(4^m m!)`, `a = b = 4`: exact for `ℂ^m`.
    pub fn euclidean(m: u32) -> Self {
        let v = (-(m as f64) * 4f64.ln() - ln_factorial(m)).exp();
        HeatBoundConstants { big_a: v, big_b: v, a: 4.0, b: 4.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.big_a, self.big_b, self.a, self.b];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return invalid(format!("heat bound constants must be positive and finite: {self:?}"));
        }
        Ok(())
    }

    /// `A ≤ B`, needed for the sandwich at `ρ = 0` when `V_min = V_max`.
    pub fn ordered(&self) -> bool {
        self.big_a <= self.big_b
    }
}

/// `(C₁, c₁, C₂, c₂)` of the three-term lower and upper bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullBoundConstants {
    #[serde(rename = "C1")]
    pub big_c1: f64,
    pub c1: f64,
    #[serde(rename = "C2")]
    pub big_c2: f64,
    pub c2: f64,
}

impl FullBoundConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [self.big_c1, self.c1, self.big_c2, self.c2];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return invalid(format!("full bound constants must be positive and finite: {self:?}"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwoSided {
    pub lower: f64,
    pub upper: f64,
}

impl TwoSided {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

pub type GreenBounds = TwoSided;

/// `2A ∫ e^{−ρ²/(at)}/V_max(√t) dt ≤ G(o,x) ≤ 2B ∫ e^{−ρ²/(bt)}/V_min(√t) dt`.
pub fn green_bounds(model: &ConnectedSumModel, rho: f64) -> Result<GreenBounds> {
    let c = model.constants();
    let lower = 2.0 * c.big_a * tail_value(&model.v_max(), c.a, TailPower::Zero, rho)?;
    let upper = 2.0 * c.big_b * tail_value(&model.v_min(), c.b, TailPower::Zero, rho)?;
    if lower > upper * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "Green lower bound {lower:e} exceeds upper bound {upper:e} at ρ = {rho}"
        )));
    }
    Ok(TwoSided { lower, upper })
}

/// `A/V_max(√t) e^{−ρ²/(at)}` and `B/V_min(√t) e^{−ρ²/(bt)}`.
pub fn hk_two_sided(model: &ConnectedSumModel, t: f64, rho: f64) -> Result<TwoSided> {
    if !(t > 0.0) {
        return invalid(format!("heat kernel bounds need t > 0, got {t}"));
    }
    let c = model.constants();
    let s = t.sqrt();
    let r2 = rho * rho;
    let lower = (c.big_a.ln() - model.v_max().ln_volume(s) - r2 / (c.a * t)).exp();
    let upper = (c.big_b.ln() - model.v_min().ln_volume(s) - r2 / (c.b * t)).exp();
    Ok(TwoSided { lower, upper })
}

/// Shape factors of the three-term bounds before the constants are applied.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FullShape {
    /// `H(x)H(y)/V_0 + H(x)/V_{i_y} + H(y)/V_{i_x}`, all at `√t`.
    pub seam: f64,
    /// `1/√(V_{i_x} V_{i_y})`.
    pub direct: f64,
    pub d_plus: f64,
    pub d_empty: f64,
}

impl FullShape {
    pub fn eval(&self, t: f64, rate: f64) -> f64 {
        let e = |d: f64| if d.is_finite() { (-d * d / (rate * t)).exp() } else { 0.0 };
        self.seam * e(self.d_plus) + self.direct * e(self.d_empty)
    }
}

pub(crate) fn full_shape(model: &ConnectedSumModel, t: f64, x: &SheetPoint, y: &SheetPoint) -> Result<FullShape> {
    if !(t > 0.0) {
        return invalid(format!("heat kernel bounds need t > 0, got {t}"));
    }
    let d = model.distances(x, y)?;
    let hx = h_function(model, x, t)?;
    let hy = h_function(model, y, t)?;
    let s = t.sqrt();
    let (ix, iy) = (model.end_index(x), model.end_index(y));
    let inv = |i: usize| (-model.end_ln_volume(i, s)).exp();
    let seam = hx * hy * inv(0) + hx * inv(iy) + hy * inv(ix);
    let direct = (-(model.end_ln_volume(ix, s) + model.end_ln_volume(iy, s)) / 2.0).exp();
    Ok(FullShape { seam, direct, d_plus: d.d_plus, d_empty: d.d_empty })
}

/// Three-term lower and upper bounds for `p(t,x,y)` with the end-local
/// volumes taken as `V_{i_x}(√t)`.
pub fn hk_full_bounds(
    model: &ConnectedSumModel,
    constants: &FullBoundConstants,
    t: f64,
    x: &SheetPoint,
    y: &SheetPoint,
) -> Result<TwoSided> {
    constants.validate()?;
    let shape = full_shape(model, t, x, y)?;
    Ok(TwoSided {
        lower: constants.big_c1 * shape.eval(t, constants.c1),
        upper: constants.big_c2 * shape.eval(t, constants.c2),
    })
}

/// `W(x,t) = H(o,t)H(x,t)/V_min(√t) + H(o,t)/V_{i_x}(√t) + H(x,t)/V_{i_o}(√t)`.
pub fn w_function(model: &ConnectedSumModel, x: &SheetPoint, t: f64) -> Result<f64> {
    let o = model.o();
    let ho = h_function(model, &o, t)?;
    let hx = h_function(model, x, t)?;
    let s = t.sqrt();
    let inv = |i: usize| (-model.end_ln_volume(i, s)).exp();
    Ok(ho * hx * model.v_min().volume_at(s).recip() + ho * inv(model.end_index(x)) + hx * inv(model.end_index(&o)))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReducedSandwich {
    pub w: f64,
    /// `γ₀ / V_max(√t)`.
    pub lower: f64,
    /// `3 / V_min(√t)`.
    pub upper: f64,
    pub lower_slack: f64,
    pub upper_slack: f64,
}

impl ReducedSandwich {
    pub fn holds(&self) -> bool {
        self.lower_slack >= 1.0 - 1e-12 && self.upper_slack >= 1.0 - 1e-12
    }
}

/// `γ₀/V_max(√t) ≤ W(x,t) ≤ 3/V_min(√t)` with both slack ratios.
pub fn reduced_sandwich(model: &ConnectedSumModel, x: &SheetPoint, t: f64) -> Result<ReducedSandwich> {
    let w = w_function(model, x, t)?;
    let s = t.sqrt();
    let lower = model.gamma0()? / model.v_max().volume_at(s);
    let upper = 3.0 / model.v_min().volume_at(s);
    Ok(ReducedSandwich { w, lower, upper, lower_slack: w / lower, upper_slack: upper / w })
}
