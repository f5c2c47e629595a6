use serde::{Deserialize, Serialize};

use super::profile::{VolumeLaw, VolumeProfile};
use crate::error::{invalid, Error, Result};
use crate::heat_green::HeatBoundConstants;
use crate::quad::{bisect, golden_min};

/// One end `E_j` of the connected sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct End {
    pub profile: VolumeProfile,
    /// Lower Ricci bound `κ_j` on the end.
    #[serde(default)]
    pub ricci_lower: f64,
}

impl End {
    pub fn flat(profile: VolumeProfile) -> Self {
        End { profile, ricci_lower: 0.0 }
    }
}

/// `ϑ` copies of `ℝ^{2m}` minus the open ball of radius `central_radius`,
/// glued along the boundary sphere, with one volume profile per end. A
/// central radius of zero is the flat space `ℂ^m` itself (one end, `o = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectedSumModel {
    m: u32,
    ends: Vec<End>,
    central_radius: f64,
    constants: HeatBoundConstants,
    gamma0: Option<f64>,
}

/// Pointwise minimum or maximum of the end profiles.
#[derive(Clone, Copy, Debug)]
pub struct Envelope<'a> {
    ends: &'a [End],
    max: bool,
}

impl VolumeLaw for Envelope<'_> {
    fn ln_volume(&self, r: f64) -> f64 {
        let it = self.ends.iter().map(|e| e.profile.ln_volume(r));
        if self.max {
            it.fold(f64::NEG_INFINITY, f64::max)
        } else {
            it.fold(f64::INFINITY, f64::min)
        }
    }

    fn non_parabolic(&self) -> Result<bool> {
        // The minimum grows like its slowest end and the maximum like its
        // fastest one.
        let flags = self.ends.iter().map(|e| e.profile.non_parabolic()).collect::<Result<Vec<bool>>>()?;
        Ok(if self.max { flags.iter().any(|&f| f) } else { flags.iter().all(|&f| f) })
    }

    /// Crossings between pairs of end profiles, located on a logarithmic
    /// scan of `[1e-8, 1e8]` and refined by bisection.
    fn kinks(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if self.ends.len() < 2 {
            return out;
        }
        let grid: Vec<f64> = (-160..=160).map(|k| 10f64.powf(k as f64 / 20.0)).collect();
        let lv: Vec<Vec<f64>> =
            self.ends.iter().map(|e| grid.iter().map(|&r| e.profile.ln_volume(r)).collect()).collect();
        for i in 0..lv.len() {
            for j in i + 1..lv.len() {
                if self.ends[i].profile == self.ends[j].profile {
                    continue;
                }
                let d = |r: f64| self.ends[i].profile.ln_volume(r) - self.ends[j].profile.ln_volume(r);
                for k in 0..grid.len() - 1 {
                    let (d0, d1) = (lv[i][k] - lv[j][k], lv[i][k + 1] - lv[j][k + 1]);
                    if d0 == 0.0 {
                        out.push(grid[k]);
                    } else if d0 * d1 < 0.0 {
                        if let Ok(x) = bisect(d, grid[k], grid[k + 1], 1e-15) {
                            out.push(x);
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        out
    }
}

/// A point on one sheet of the glued model (sheets are numbered from 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheetPoint {
    pub sheet: usize,
    pub coords: Vec<f64>,
}

impl SheetPoint {
    pub fn new(sheet: usize, coords: Vec<f64>) -> Self {
        SheetPoint { sheet, coords }
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Distances {
    pub d: f64,
    pub d_empty: f64,
    pub d_plus: f64,
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

const SEAM_TOL: f64 = 1e-12;

impl ConnectedSumModel {
    pub fn new(m: u32, ends: Vec<End>, central_radius: f64, constants: HeatBoundConstants) -> Result<Self> {
        if m < 2 {
            return invalid(format!("complex dimension must be ≥ 2, got {m}"));
        }
        if ends.is_empty() {
            return invalid("a model needs at least one end");
        }
        if !(central_radius >= 0.0 && central_radius.is_finite()) {
            return invalid(format!("central radius must be finite and ≥ 0, got {central_radius}"));
        }
        if central_radius == 0.0 && ends.len() != 1 {
            return invalid("several ends need a positive central radius to be glued along");
        }
        constants.validate()?;
        for (j, e) in ends.iter().enumerate() {
            e.profile.validate()?;
            if !e.ricci_lower.is_finite() {
                return invalid(format!("end {}: Ricci lower bound must be finite", j + 1));
            }
            if !e.profile.non_parabolic()? {
                return Err(Error::Hypothesis(format!("end {} has a parabolic volume profile", j + 1)));
            }
        }
        Ok(ConnectedSumModel { m, ends, central_radius, constants, gamma0: None })
    }

    /// `ℂ^m` with its exact heat-kernel constants `A = B = 1/(4^m m!)`,
    /// `a = b = 4`.
    pub fn euclidean(m: u32) -> Self {
        ConnectedSumModel::new(m, vec![End::flat(VolumeProfile::euclidean(m))], 0.0, HeatBoundConstants::euclidean(m))
            .expect("flat space is a valid model")
    }

    /// `ϑ` flat sheets glued along the unit sphere.
    pub fn glued_euclidean(m: u32, theta: usize) -> Self {
        let ends = (0..theta).map(|_| End::flat(VolumeProfile::euclidean(m))).collect();
        ConnectedSumModel::new(m, ends, 1.0, HeatBoundConstants::euclidean(m)).expect("glued flat sheets are valid")
    }

    pub fn with_constants(mut self, constants: HeatBoundConstants) -> Result<Self> {
        constants.validate()?;
        self.constants = constants;
        Ok(self)
    }

    pub fn with_gamma0(mut self, gamma0: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && gamma0 <= 1.0) {
            return invalid(format!("γ₀ must lie in (0, 1], got {gamma0}"));
        }
        self.gamma0 = Some(gamma0);
        Ok(self)
    }

    pub fn complex_dim(&self) -> u32 {
        self.m
    }

    pub fn real_dim(&self) -> usize {
        2 * self.m as usize
    }

    pub fn ends(&self) -> &[End] {
        &self.ends
    }

    pub fn theta(&self) -> usize {
        self.ends.len()
    }

    pub fn central_radius(&self) -> f64 {
        self.central_radius
    }

    pub fn constants(&self) -> &HeatBoundConstants {
        &self.constants
    }

    /// `κ = min_j κ_j`.
    pub fn kappa(&self) -> f64 {
        self.ends.iter().map(|e| e.ricci_lower).fold(f64::INFINITY, f64::min)
    }

    pub fn v_min(&self) -> Envelope<'_> {
        Envelope { ends: &self.ends, max: false }
    }

    pub fn v_max(&self) -> Envelope<'_> {
        Envelope { ends: &self.ends, max: true }
    }

    /// `V_i`, where `i = 0` denotes the central part and uses `V_min`.
    pub fn end_volume(&self, i: usize, r: f64) -> f64 {
        if i == 0 {
            self.v_min().volume_at(r)
        } else {
            self.ends[i - 1].profile.volume_at(r)
        }
    }

    pub fn end_ln_volume(&self, i: usize, r: f64) -> f64 {
        if i == 0 {
            self.v_min().ln_volume(r)
        } else {
            self.ends[i - 1].profile.ln_volume(r)
        }
    }

    pub fn is_flat(&self) -> bool {
        self.ends.iter().all(|e| matches!(e.profile, VolumeProfile::Euclidean { .. }) && e.ricci_lower == 0.0)
    }

    /// True for a single flat end without a seam, i.e. `ℂ^m`.
    pub fn is_flat_space(&self) -> bool {
        self.central_radius == 0.0 && self.is_flat()
    }

    /// All ends share one profile.
    pub fn is_homogeneous(&self) -> bool {
        self.ends.windows(2).all(|w| w[0].profile == w[1].profile)
    }

    /// Reference point: the seam point `(R, 0, …, 0)` on sheet 1, or the origin
    /// of `ℂ^m`.
    pub fn o(&self) -> SheetPoint {
        let mut c = vec![0.0; self.real_dim()];
        c[0] = self.central_radius;
        SheetPoint::new(1, c)
    }

    pub fn point(&self, sheet: usize, coords: Vec<f64>) -> Result<SheetPoint> {
        let p = SheetPoint::new(sheet, coords);
        self.check_point(&p)?;
        Ok(p)
    }

    pub fn check_point(&self, p: &SheetPoint) -> Result<()> {
        if p.coords.len() != self.real_dim() {
            return invalid(format!("point has {} coordinates, model needs {}", p.coords.len(), self.real_dim()));
        }
        if p.sheet == 0 || p.sheet > self.theta() {
            return invalid(format!("sheet {} outside 1..={}", p.sheet, self.theta()));
        }
        if p.coords.iter().any(|c| !c.is_finite()) {
            return invalid("point coordinates must be finite");
        }
        let r = p.norm();
        if r < self.central_radius * (1.0 - SEAM_TOL) {
            return invalid(format!("point at radius {r} lies inside the seam ball of radius {}", self.central_radius));
        }
        Ok(())
    }

    pub fn on_seam(&self, p: &SheetPoint) -> bool {
        self.central_radius > 0.0 && (p.norm() - self.central_radius).abs() <= SEAM_TOL * self.central_radius
    }

    /// `ρ(x) = ‖x‖ − R`, the distance to the seam (zero offset).
    pub fn rho(&self, p: &SheetPoint) -> f64 {
        (p.norm() - self.central_radius).max(0.0)
    }

    /// `|x| = sup_{y∈K} d(x, y)`, bounded extrinsically by `‖x‖ + R`.
    pub fn abs(&self, p: &SheetPoint) -> f64 {
        p.norm() + self.central_radius
    }

    /// `i_x`: 0 on the seam, otherwise the sheet.
    pub fn end_index(&self, p: &SheetPoint) -> usize {
        if self.on_seam(p) {
            0
        } else {
            p.sheet
        }
    }

    /// Extrinsic diameter of the central part.
    pub fn diam_k(&self) -> f64 {
        2.0 * self.central_radius
    }

    /// `γ₀ = min{1, |o|²/V_max(|o|)}` unless configured explicitly.
    pub fn gamma0(&self) -> Result<f64> {
        if let Some(g) = self.gamma0 {
            return Ok(g);
        }
        let o = self.abs(&self.o());
        if o == 0.0 {
            return Err(Error::InvalidArgument("γ₀ degenerates for a point central part; configure it".into()));
        }
        Ok((o * o / self.v_max().volume_at(o)).min(1.0))
    }

    /// `(d, d_∅, d_+)` between two points.
    pub fn distances(&self, x: &SheetPoint, y: &SheetPoint) -> Result<Distances> {
        self.check_point(x)?;
        self.check_point(y)?;
        let rad = self.central_radius;
        let d_empty =
            if x.sheet != y.sheet && rad > 0.0 { f64::INFINITY } else { avoiding_distance(&x.coords, &y.coords, rad) };
        let d_plus = if rad == 0.0 { x.norm() + y.norm() } else { seam_distance(&x.coords, &y.coords, rad) };
        Ok(Distances { d: d_empty.min(d_plus), d_empty, d_plus })
    }
}

/// Shortest path between `x` and `y` in `ℝⁿ` avoiding the open ball of radius
/// `rad`: the segment when it misses the ball, otherwise tangent–arc–tangent
/// in the plane spanned by the two points.
pub fn avoiding_distance(x: &[f64], y: &[f64], rad: f64) -> f64 {
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - a).collect();
    let len2 = dot(&diff, &diff);
    let chord = len2.sqrt();
    if rad == 0.0 || len2 == 0.0 {
        return chord;
    }
    let s = (-dot(x, &diff) / len2).clamp(0.0, 1.0);
    let closest: Vec<f64> = x.iter().zip(&diff).map(|(a, d)| a + s * d).collect();
    if norm(&closest) >= rad {
        return chord;
    }
    let (a, b) = (norm(x), norm(y));
    let cos_theta = (dot(x, y) / (a * b)).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let ta = (a * a - rad * rad).max(0.0).sqrt();
    let tb = (b * b - rad * rad).max(0.0).sqrt();
    let arc = theta - (rad / a).min(1.0).acos() - (rad / b).min(1.0).acos();
    ta + tb + rad * arc.max(0.0)
}

/// `min_{‖p‖=rad} ‖x − p‖ + ‖y − p‖`. The minimiser lies on the arc between
/// the directions of `x` and `y` in their common plane.
pub fn seam_distance(x: &[f64], y: &[f64], rad: f64) -> f64 {
    let a = norm(x);
    let e1: Vec<f64> = x.iter().map(|v| v / a).collect();
    let yc = dot(y, &e1);
    let mut perp: Vec<f64> = y.iter().zip(&e1).map(|(v, e)| v - yc * e).collect();
    let yp = norm(&perp);
    if yp > 0.0 {
        perp.iter_mut().for_each(|v| *v /= yp);
    }
    let theta = yp.atan2(yc);
    let cost = |phi: f64| {
        let (px, py) = (rad * phi.cos(), rad * phi.sin());
        ((a - px).powi(2) + py * py).sqrt() + ((yc - px).powi(2) + (yp - py).powi(2)).sqrt()
    };
    if theta == 0.0 {
        return cost(0.0);
    }
    let n = 64;
    let (mut best, mut best_phi) = (f64::INFINITY, 0.0);
    for k in 0..=n {
        let phi = theta * k as f64 / n as f64;
        let c = cost(phi);
        if c < best {
            best = c;
            best_phi = phi;
        }
    }
    let h = theta / n as f64;
    let (_, refined) = golden_min(cost, (best_phi - h).max(0.0), (best_phi + h).min(theta), 1e-14 * (1.0 + theta));
    refined.min(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p(sheet: usize, c: [f64; 4]) -> SheetPoint {
        SheetPoint::new(sheet, c.to_vec())
    }

    #[test]
    fn opposite_sheets_meet_at_seam_point() {
        let m = ConnectedSumModel::glued_euclidean(2, 2);
        let d = m.distances(&p(1, [2.0, 0.0, 0.0, 0.0]), &p(2, [2.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((d.d_plus - 2.0).abs() < 1e-12);
        assert!(d.d_empty.is_infinite());
        assert!((d.d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_points() {
        let m = ConnectedSumModel::glued_euclidean(2, 2);
        let x = p(1, [0.0, 3.0, 0.0, 0.0]);
        let d = m.distances(&x, &x).unwrap();
        assert_eq!(d.d, 0.0);
        assert_eq!(d.d_empty, 0.0);
        assert!((d.d_plus - 4.0).abs() < 1e-12);
    }

    #[test]
    fn tangent_arc_tangent() {
        let m = ConnectedSumModel::glued_euclidean(2, 2);
        let d = m.distances(&p(1, [0.0, 2.0, 0.0, 0.0]), &p(1, [0.0, -2.0, 0.0, 0.0])).unwrap();
        let exact = 2.0 * 3f64.sqrt() + PI / 3.0;
        assert!((d.d_empty - exact).abs() < 1e-12, "{}", d.d_empty);
    }

    #[test]
    fn inside_seam_rejected() {
        let m = ConnectedSumModel::glued_euclidean(2, 2);
        assert!(m.distances(&p(1, [0.5, 0.0, 0.0, 0.0]), &p(1, [2.0, 0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn seam_points_and_indices() {
        let m = ConnectedSumModel::glued_euclidean(2, 2);
        let o = m.o();
        assert!(m.on_seam(&o));
        assert_eq!(m.end_index(&o), 0);
        assert_eq!(m.rho(&o), 0.0);
        assert_eq!(m.abs(&o), 2.0);
        let x = p(2, [3.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.end_index(&x), 2);
        assert!((m.rho(&x) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn parabolic_end_rejected() {
        let ends = vec![End::flat(VolumeProfile::power(1.0, 2.0))];
        let r = ConnectedSumModel::new(2, ends, 0.0, HeatBoundConstants::euclidean(2));
        assert!(matches!(r, Err(Error::Hypothesis(_))));
    }

    #[test]
    fn envelopes() {
        let ends = vec![End::flat(VolumeProfile::euclidean(2)), End::flat(VolumeProfile::power(1.0, 5.0))];
        let m = ConnectedSumModel::new(2, ends, 1.0, HeatBoundConstants::euclidean(2)).unwrap();
        for &r in &[0.5f64, 1.0, 3.0, 10.0] {
            let a = PI * PI * r.powi(4) / 2.0;
            let b = r.powi(5);
            assert!((m.v_min().volume_at(r) - a.min(b)).abs() <= 1e-12 * a.max(b));
            assert!((m.v_max().volume_at(r) - a.max(b)).abs() <= 1e-12 * a.max(b));
        }
    }
}
