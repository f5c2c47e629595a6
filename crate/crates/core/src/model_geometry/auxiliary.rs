use serde::Serialize;

use super::model::{ConnectedSumModel, SheetPoint};
use super::profile::{spaceform_ln_volume, VolumeLaw, VolumeProfile};
use crate::error::{invalid, Result};
use crate::quad::{self, Tolerance};
use crate::special::{ball_volume, sphere_area};

/// Relative and absolute slack allowed by every monotonicity test.
pub const MONO_REL_TOL: f64 = 1e-9;
pub const MONO_ABS_TOL: f64 = 1e-12;

/// `b` does not exceed `a` beyond the monotonicity tolerance.
pub fn not_above(b: f64, a: f64) -> bool {
    b <= a + MONO_REL_TOL * a.abs() + MONO_ABS_TOL
}

/// `(∫_lo^hi ds / V(√s))⁺`.
fn clipped_inverse_volume<L: VolumeLaw>(law: &L, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let f = |s: f64| (-law.ln_volume(s.sqrt())).exp();
    quad::integrate(&f, lo, hi, Tolerance::rel(1e-12)).value
}

/// `H(x,t) = min{1, |x|²/V_{i_x}(|x|) + (∫_{|x|²}^t ds/V_{i_x}(√s))⁺}`.
pub fn h_function(model: &ConnectedSumModel, x: &SheetPoint, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return invalid(format!("H needs t > 0, got {t}"));
    }
    model.check_point(x)?;
    let ax = model.abs(x);
    if ax == 0.0 {
        return Ok(1.0);
    }
    let i = model.end_index(x);
    let base = ax * ax * (-model.end_ln_volume(i, ax)).exp();
    if base >= 1.0 {
        return Ok(1.0);
    }
    let law = EndLaw { model, i };
    Ok((base + clipped_inverse_volume(&law, ax * ax, t)).min(1.0))
}

/// `1 + (∫₁^{|x|} dt / V_{i_x}(√t))⁺`, the growth envelope of the
/// non-constant bounded harmonic functions.
pub fn liouville_envelope(model: &ConnectedSumModel, x: &SheetPoint) -> Result<f64> {
    model.check_point(x)?;
    let law = EndLaw { model, i: model.end_index(x) };
    Ok(1.0 + clipped_inverse_volume(&law, 1.0, model.abs(x)))
}

/// `lim_{|x|→∞}` of [`liouville_envelope`] along one end.
pub fn liouville_envelope_limit(profile: &VolumeProfile) -> Result<f64> {
    let f = |t: f64| (-profile.ln_volume(t.sqrt())).exp();
    let tail = quad::integrate_from(&f, 1.0, 1.0, Tolerance::rel(1e-11))?;
    Ok(1.0 + tail.value)
}

struct EndLaw<'a> {
    model: &'a ConnectedSumModel,
    i: usize,
}

impl VolumeLaw for EndLaw<'_> {
    fn ln_volume(&self, r: f64) -> f64 {
        self.model.end_ln_volume(self.i, r)
    }

    fn non_parabolic(&self) -> Result<bool> {
        Ok(true)
    }
}

/// True when `χ(M) ≢ (−1)^k τ(M) mod 4` for `M = M_1 # ⋯ # M_ϑ`, with
/// `χ(M) = Σχ_j − 2(ϑ−1)` and `τ(M) = Στ_j`; such an `M` carries no almost
/// complex structure.
pub fn almost_complex_obstruction(chis: &[i64], taus: &[i64], k: u32) -> Result<bool> {
    if chis.is_empty() || chis.len() != taus.len() {
        return invalid("need equally many (≥ 1) Euler characteristics and signatures");
    }
    if k == 0 {
        return invalid("k must be positive");
    }
    let theta = chis.len() as i64;
    let chi: i64 = chis.iter().sum::<i64>() - 2 * (theta - 1);
    let tau: i64 = taus.iter().sum();
    let sign = if k.is_multiple_of(2) { 1 } else { -1 };
    Ok((chi - sign * tau).rem_euclid(4) != 0)
}

/// `V(K, r)`: ball volume in the simply connected space of constant
/// curvature `K` and dimension `n`.
pub fn comparison_volume(curvature: f64, n: u32, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if curvature == 0.0 {
        ball_volume(n, r)
    } else if curvature < 0.0 {
        spaceform_ln_volume(curvature, n, r).exp()
    } else {
        let s = curvature.sqrt();
        let top = r.min(std::f64::consts::PI / s);
        let f = |t: f64| ((s * t).sin() / s).powi(n as i32 - 1);
        sphere_area(n) * quad::integrate(&f, 0.0, top, Tolerance::rel(1e-13)).value
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub r: f64,
    pub volume: f64,
    pub comparison: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// Grid indices `i` where the ratio at `r_{i+1}` exceeds the one at `r_i`.
    pub ratio_increases: Vec<usize>,
    /// Grid indices where `V(r) > V(K, r)`.
    pub volume_excess: Vec<usize>,
    /// `max_i ratio_{i+1}/ratio_i`; at most 1 for a non-increasing ratio.
    pub worst_step: f64,
}

impl VolumeComparisonReport {
    pub fn holds(&self) -> bool {
        self.ratio_increases.is_empty() && self.volume_excess.is_empty()
    }
}

/// Bishop–Gromov check: `V(r)/V(K, r)` non-increasing and `V(r) ≤ V(K, r)`.
pub fn volume_comparison_check(
    profile: &VolumeProfile,
    curvature: f64,
    n: u32,
    r_grid: &[f64],
) -> Result<VolumeComparisonReport> {
    profile.validate()?;
    if r_grid.iter().any(|&r| !(r > 0.0)) || r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("comparison grid must be positive and strictly increasing");
    }
    let rows: Vec<ComparisonRow> = r_grid
        .iter()
        .map(|&r| {
            let volume = profile.volume_at(r);
            let comparison = comparison_volume(curvature, n, r);
            ComparisonRow { r, volume, comparison, ratio: volume / comparison }
        })
        .collect();
    let mut ratio_increases = Vec::new();
    let mut worst_step = 0.0f64;
    for (i, w) in rows.windows(2).enumerate() {
        worst_step = worst_step.max(w[1].ratio / w[0].ratio);
        if !not_above(w[1].ratio, w[0].ratio) {
            ratio_increases.push(i);
        }
    }
    let volume_excess =
        rows.iter().enumerate().filter(|(_, row)| !not_above(row.volume, row.comparison)).map(|(i, _)| i).collect();
    Ok(VolumeComparisonReport { rows, ratio_increases, volume_excess, worst_step })
}
