use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{simulate_exit_with, simulate_free, ExitRecord, Observers, PathConfig, PathResult, RadialBins};
use crate::error::{invalid, Error, Result};
use crate::exhaustion::{g_r_euclidean, hyperplane_slice_integral, sphere_mean_of_distance};
use crate::heat_green::{euclidean_heat_kernel, hk_two_sided, TwoSided};
use crate::model_geometry::ConnectedSumModel;
use crate::par::{mean_and_se, pairwise_sum};
use crate::quad::{self, Tolerance};
use crate::special::{chi_square_sf, sphere_area};

/// Test functions with known Laplacian, in simulation coordinates (`o` at
/// the origin); complex coordinates are `z_k = x_{2k} + i x_{2k+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `x_i`.
    Coordinate { index: usize },
    /// `x_0² − x_1²`.
    QuadraticHarmonic,
    /// `‖x‖²`.
    NormSquared,
    /// `log ‖x + shift‖`; `shift = o` makes this `log‖z‖` seen from `o`.
    LogNorm { shift: Vec<f64> },
    /// `log |Σ a_k z_k + c|`, given as `[re, im]` pairs.
    LogAbsAffine { a: Vec<[f64; 2]>, c: [f64; 2] },
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Coordinate { index } => x[*index],
            TestFunction::QuadraticHarmonic => x[0] * x[0] - x[1] * x[1],
            TestFunction::NormSquared => x.iter().map(|v| v * v).sum(),
            TestFunction::LogNorm { shift } => {
                0.5 * x.iter().zip(shift).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().ln()
            }
            TestFunction::LogAbsAffine { a, c } => {
                let mut v = Complex64::new(c[0], c[1]);
                for (k, ak) in a.iter().enumerate() {
                    v += Complex64::new(ak[0], ak[1]) * Complex64::new(x[2 * k], x[2 * k + 1]);
                }
                v.norm().ln()
            }
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let ok = match self {
            TestFunction::Coordinate { index } => *index < n,
            TestFunction::QuadraticHarmonic => n >= 2,
            TestFunction::NormSquared => true,
            TestFunction::LogNorm { shift } => shift.len() == n,
            TestFunction::LogAbsAffine { a, .. } => 2 * a.len() == n && a.iter().any(|v| v[0] != 0.0 || v[1] != 0.0),
        };
        if !ok {
            return invalid(format!("test function {self:?} does not fit dimension {n}"));
        }
        if !self.eval(&vec![0.0; n]).is_finite() {
            return invalid(format!("test function {self:?} is infinite at o"));
        }
        Ok(())
    }

    fn is_harmonic(&self) -> bool {
        matches!(self, TestFunction::Coordinate { .. } | TestFunction::QuadraticHarmonic)
    }

    /// `½ ∫_{B(r)} g_r Δφ dv` on `ℂ^m`.
    fn rhs(&self, m: u32, r: f64) -> Result<f64> {
        let n = 2 * m as usize;
        let radial = |mean_lap: &dyn Fn(f64) -> f64, breaks: &[f64]| -> Result<f64> {
            let w = sphere_area(2 * m);
            let f = |s: f64| {
                if s <= 0.0 || s >= r {
                    return 0.0;
                }
                g_r_euclidean(m, s, r).unwrap_or(0.0) * w * s.powi(n as i32 - 1) * mean_lap(s)
            };
            let est =
                quad::integrate_with_breaks(&f, breaks, Tolerance::rel(1e-10)).require("Dynkin right-hand side")?;
            Ok(0.5 * est.value)
        };
        match self {
            TestFunction::Coordinate { .. } | TestFunction::QuadraticHarmonic => Ok(0.0),
            TestFunction::NormSquared => radial(&|_| 2.0 * n as f64, &[0.0, r]),
            TestFunction::LogNorm { shift } => {
                let c = shift.iter().map(|v| v * v).sum::<f64>().sqrt();
                let lap = |s: f64| sphere_mean_inverse_square(n, s, c) * (n as f64 - 2.0);
                let mut br = vec![0.0, r];
                if c > 0.0 && c < r {
                    br.insert(1, c);
                }
                radial(&lap, &br)
            }
            TestFunction::LogAbsAffine { a, c } => {
                let an = a.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>().sqrt();
                let cn = (c[0] * c[0] + c[1] * c[1]).sqrt();
                hyperplane_slice_integral(m, cn / an, r)
            }
        }
    }
}

/// Mean of `1/‖s e + c‖²` over unit vectors `e ∈ S^{n−1}`, `|c| = c`.
fn sphere_mean_inverse_square(n: usize, s: f64, c: f64) -> f64 {
    let f = |d: f64| 1.0 / (d * d).max(1e-300);
    sphere_mean_of_distance(n, s, c, &f, Tolerance::rel(1e-11)).unwrap_or(f64::NAN)
}

fn require_flat_space(model: &ConnectedSumModel) -> Result<u32> {
    if !model.is_flat_space() {
        return Err(Error::Unsupported("this Monte Carlo check needs the flat model ℂ^m".into()));
    }
    Ok(model.complex_dim())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExitTimeSummary {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    pub censored: usize,
}

/// Mean exit time over uncensored paths, with the censored count.
pub fn exit_time_summary(records: &[ExitRecord]) -> ExitTimeSummary {
    let times: Vec<f64> = records.iter().filter(|r| !r.censored).map(|r| r.exit_time).collect();
    let (mean, se) = mean_and_se(&times);
    ExitTimeSummary { mean, se, n: times.len(), censored: records.len() - times.len() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformityReport {
    pub counts: Vec<u64>,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Chi-square test of exit points against the uniform law on `∂B(r) ⊂ ℂ^m`
/// over `bands × sectors` cells of equal mass: bands in `|z_1|²/r²` (a
/// `Beta(1, m−1)` variable), sectors in `arg z_1`.
pub fn harmonic_uniformity(
    model: &ConnectedSumModel,
    records: &[ExitRecord],
    bands: usize,
    sectors: usize,
) -> Result<UniformityReport> {
    let m = require_flat_space(model)?;
    if bands == 0 || sectors == 0 {
        return invalid("need at least one band and one sector");
    }
    let cells = bands * sectors;
    let mut counts = vec![0u64; cells];
    let mut n = 0u64;
    for rec in records.iter().filter(|r| !r.censored) {
        let x = &rec.exit_point.coords;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let b = (x[0] * x[0] + x[1] * x[1]) / r2;
        let u = 1.0 - (1.0 - b).max(0.0).powi(m as i32 - 1);
        let phase = (x[1].atan2(x[0]) / std::f64::consts::TAU).rem_euclid(1.0);
        let i = ((u * bands as f64) as usize).min(bands - 1);
        let j = ((phase * sectors as f64) as usize).min(sectors - 1);
        counts[i * sectors + j] += 1;
        n += 1;
    }
    if n == 0 {
        return invalid("no uncensored exits to test");
    }
    let expect = n as f64 / cells as f64;
    let chi: Vec<f64> = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).collect();
    let chi_square = pairwise_sum(&chi);
    let dof = cells - 1;
    Ok(UniformityReport { counts, chi_square, dof, p_value: chi_square_sf(dof as f64, chi_square) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SheetMass {
    /// Fraction of uncensored exits per sheet.
    pub fractions: Vec<f64>,
    /// Binomial standard errors.
    pub se: Vec<f64>,
    pub n: usize,
}

pub fn sheet_mass(records: &[ExitRecord], theta: usize) -> SheetMass {
    let mut counts = vec![0usize; theta];
    let mut n = 0;
    for r in records.iter().filter(|r| !r.censored) {
        counts[r.exit_point.sheet - 1] += 1;
        n += 1;
    }
    let nf = n.max(1) as f64;
    let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
    let se = fractions.iter().map(|p| (p * (1.0 - p) / nf).sqrt()).collect();
    SheetMass { fractions, se, n }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DynkinReport {
    /// `𝔼_o[φ(X_τ)] − φ(o)` by Monte Carlo.
    pub lhs: f64,
    pub se: f64,
    /// `½ ∫ g_r Δφ dv` by quadrature.
    pub rhs: f64,
    /// `|lhs − rhs|`.
    pub residual: f64,
    pub n: usize,
    pub censored: usize,
}

impl DynkinReport {
    /// Residual within `k` standard errors.
    pub fn within(&self, k: f64) -> bool {
        self.residual <= k * self.se
    }
}

/// Jensen–Dynkin balance `∫ φ dπ_r − φ(o) = ½ ∫ g_r Δφ dv` on `ℂ^m`.
pub fn dynkin_check(model: &ConnectedSumModel, r: f64, phi: &TestFunction, cfg: &PathConfig) -> Result<DynkinReport> {
    let m = require_flat_space(model)?;
    let n = model.real_dim();
    phi.validate(n)?;
    let rhs = phi.rhs(m, r)?;
    let paths = simulate_exit_with(model, r, cfg, &Observers::default())?;
    let phi0 = phi.eval(&vec![0.0; n]);
    let vals: Vec<f64> = paths.iter().filter(|p| !p.censored).map(|p| phi.eval(&p.coords) - phi0).collect();
    let (lhs, se) = mean_and_se(&vals);
    Ok(DynkinReport { lhs, se, rhs, residual: (lhs - rhs).abs(), n: vals.len(), censored: paths.len() - vals.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MartingalePoint {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
}

/// Path averages of `φ(X_{t∧τ})` at the given times, harmonic `φ` only.
pub fn martingale_check(
    model: &ConnectedSumModel,
    r: f64,
    phi: &TestFunction,
    times: &[f64],
    cfg: &PathConfig,
) -> Result<Vec<MartingalePoint>> {
    require_flat_space(model)?;
    phi.validate(model.real_dim())?;
    if !phi.is_harmonic() {
        return invalid("the martingale check needs a harmonic test function");
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return invalid("times must be sorted");
    }
    let obs = Observers { snapshots: times.to_vec(), ..Default::default() };
    let paths = simulate_exit_with(model, r, cfg, &obs)?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let v: Vec<f64> = paths.iter().map(|p| phi.eval(&p.snapshots[k].1)).collect();
            let (mean, se) = mean_and_se(&v);
            MartingalePoint { t, mean, se }
        })
        .collect())
}

fn shell_volume(n: usize, lo: f64, hi: f64) -> f64 {
    sphere_area(n as u32) * (hi.powi(n as i32) - lo.powi(n as i32)) / n as f64
}

/// Average of a radial function over the shell `lo ≤ ‖x‖ < hi` in `ℝⁿ`.
fn shell_average(n: usize, lo: f64, hi: f64, f: &dyn Fn(f64) -> f64) -> Result<f64> {
    let g = |s: f64| f(s) * sphere_area(n as u32) * s.powi(n as i32 - 1);
    let est = quad::integrate(&g, lo, hi, Tolerance::rel(1e-10)).require("shell average")?;
    Ok(est.value / shell_volume(n, lo, hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OccupationBin {
    pub lo: f64,
    pub hi: f64,
    /// `𝔼[time in bin] / bin volume`.
    pub estimate: f64,
    pub se: f64,
    /// Bin average of `g_r`.
    pub exact: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupationReport {
    pub bins: Vec<OccupationBin>,
    /// `Σ |estimate − exact| vol / Σ exact vol`.
    pub l1_error: f64,
    /// Bins inside `B(r)` that no path visited.
    pub empty_bins: Vec<usize>,
    pub censored: usize,
}

/// Occupation density of paths killed at `∂B(r)` against `g_r` on `ℂ^m`.
pub fn occupation_density(
    model: &ConnectedSumModel,
    r: f64,
    bins: &RadialBins,
    cfg: &PathConfig,
) -> Result<OccupationReport> {
    let m = require_flat_space(model)?;
    if bins.is_empty() || bins.edges[0] < 0.0 {
        return invalid("radial bins must be non-empty and start at a non-negative radius");
    }
    let n = model.real_dim();
    let obs = Observers { bins: Some(bins), ..Default::default() };
    let paths = simulate_exit_with(model, r, cfg, &obs)?;
    let censored = paths.iter().filter(|p| p.censored).count();
    let mut out = Vec::with_capacity(bins.len());
    let mut empty = Vec::new();
    let (mut num, mut den) = (Vec::new(), Vec::new());
    for i in 0..bins.len() {
        let (lo, hi) = (bins.edges[i], bins.edges[i + 1]);
        let vol = shell_volume(n, lo, hi);
        let occ: Vec<f64> = paths.iter().map(|p| p.occupation[i]).collect();
        let (mean, se) = mean_and_se(&occ);
        let exact = if lo >= r {
            0.0
        } else {
            let top = hi.min(r);
            let g = |s: f64| if s > 0.0 { g_r_euclidean(m, s, r).unwrap_or(0.0) } else { 0.0 };
            shell_average(n, lo, top, &g)? * shell_volume(n, lo, top) / vol
        };
        if lo < r && mean == 0.0 {
            empty.push(i);
        }
        let estimate = mean / vol;
        num.push((estimate - exact).abs() * vol);
        den.push(exact * vol);
        out.push(OccupationBin { lo, hi, estimate, se: se / vol, exact });
    }
    let l1_error = pairwise_sum(&num) / pairwise_sum(&den);
    Ok(OccupationReport { bins: out, l1_error, empty_bins: empty, censored })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeatKernelBin {
    pub sheet: usize,
    pub lo: f64,
    pub hi: f64,
    pub estimate: f64,
    /// Batch-means standard error.
    pub se: f64,
    /// Bin average of the exact kernel, on `ℂ^m`.
    pub exact: Option<f64>,
    /// `hk_two_sided` at the bin midpoint, on single-end models.
    pub envelope: Option<TwoSided>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatKernelEstimate {
    pub t: f64,
    pub bins: Vec<HeatKernelBin>,
    /// `Σ estimate · volume` over all bins and sheets.
    pub mass: f64,
    pub mass_se: f64,
    pub censored_fraction: f64,
}

/// Number of batches for batch-means errors.
pub const BATCHES: usize = 20;

/// `p(t, o, ·)` by radial binning of free paths on every sheet. The kernel of
/// `Δ` at time `t` is the law of the `Δ/2`-motion at time `2t`.
pub fn heat_kernel_estimate(
    model: &ConnectedSumModel,
    t: f64,
    bins: &RadialBins,
    cfg: &PathConfig,
) -> Result<HeatKernelEstimate> {
    cfg.validate()?;
    if t < 10.0 * cfg.step {
        return invalid(format!("t = {t} is below 10 h = {}", 10.0 * cfg.step));
    }
    if bins.is_empty() || bins.edges[0] < model.central_radius() {
        return invalid("radial bins must be non-empty and lie outside the seam ball");
    }
    let paths = simulate_free(model, 2.0 * t, cfg, &Observers::default())?;
    let n = model.real_dim();
    let theta = model.theta();
    let nb = bins.len();
    let batches = BATCHES.min(paths.len());
    let per = paths.len() / batches;
    let mut counts = vec![vec![0u64; nb * theta]; batches];
    for (k, p) in paths.iter().take(per * batches).enumerate() {
        if let Some(i) = bins.index(p.coords.iter().map(|v| v * v).sum::<f64>().sqrt()) {
            counts[k / per][(p.sheet - 1) * nb + i] += 1;
        }
    }
    let censored = paths.iter().filter(|p: &&PathResult| p.censored).count();
    let flat = model.is_flat_space();
    let single = model.theta() == 1;
    let mut out = Vec::with_capacity(nb * theta);
    let mut mass_batches = vec![0.0; batches];
    for s in 0..theta {
        for i in 0..nb {
            let (lo, hi) = (bins.edges[i], bins.edges[i + 1]);
            let vol = shell_volume(n, lo, hi);
            let est: Vec<f64> = counts.iter().map(|c| c[s * nb + i] as f64 / (per as f64 * vol)).collect();
            for (mb, e) in mass_batches.iter_mut().zip(&est) {
                *mb += e * vol;
            }
            let (estimate, se) = mean_and_se(&est);
            let exact = if flat {
                let m = model.complex_dim();
                Some(shell_average(n, lo, hi, &|rho| euclidean_heat_kernel(t, rho, m).unwrap_or(0.0))?)
            } else {
                None
            };
            let envelope =
                if single { Some(hk_two_sided(model, t, 0.5 * (lo + hi) - model.central_radius())?) } else { None };
            out.push(HeatKernelBin { sheet: s + 1, lo, hi, estimate, se, exact, envelope });
        }
    }
    let (mass, mass_se) = mean_and_se(&mass_batches);
    Ok(HeatKernelEstimate { t, bins: out, mass, mass_se, censored_fraction: censored as f64 / paths.len() as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_square_mean_in_four_dimensions() {
        for &(s, c) in &[(0.5, 1.0), (2.0, 1.0), (1.5, 0.3)] {
            let want = 1.0 / f64::max(s, c).powi(2);
            assert!((sphere_mean_inverse_square(4, s, c) - want).abs() < 1e-8 * want);
        }
    }

    #[test]
    fn norm_squared_rhs_is_r_squared() {
        for &m in &[2u32, 3] {
            let v = TestFunction::NormSquared.rhs(m, 1.5).unwrap();
            assert!((v - 2.25).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn log_at_o_rejected() {
        let f = TestFunction::LogNorm { shift: vec![0.0; 4] };
        assert!(f.validate(4).is_err());
        let g = TestFunction::LogAbsAffine { a: vec![[1.0, 0.0], [0.0, 0.0]], c: [0.0, 0.0] };
        assert!(g.validate(4).is_err());
    }

    #[test]
    fn coordinate_dynkin_small_run() {
        let m = ConnectedSumModel::euclidean(2);
        let cfg = PathConfig { step: 1e-3, n_paths: 2000, horizon: 50.0, seed: 5, ..PathConfig::for_radius(1.0, 1, 0) };
        let rep = dynkin_check(&m, 1.0, &TestFunction::Coordinate { index: 2 }, &cfg).unwrap();
        assert_eq!(rep.rhs, 0.0);
        assert!(rep.within(4.0), "{rep:?}");
    }
}
