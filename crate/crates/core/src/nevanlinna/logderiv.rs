use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::growth::ln_xi;
use super::{cnorm2, slice_weight, Value};
use crate::error::{invalid, Error, Result};
use crate::exhaustion::sphere_mean_of_distance;
use crate::model_geometry::ConnectedSumModel;
use crate::par;
use crate::quad::{self, Tolerance};

const INNER_TOL: f64 = 1e-10;
const OUTER_TOL: f64 = 1e-8;

/// `ψ(z) = Σ_j a_j z_j + c` on `ℂ^m`, seen from the base point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AffinePsi {
    m: u32,
    a: Vec<Complex64>,
    /// `ψ(o)`.
    at_o: Complex64,
}

impl AffinePsi {
    pub fn new(m: u32, a: Vec<Complex64>, c: Complex64, base: &[Complex64]) -> Result<Self> {
        if m < 2 {
            return invalid(format!("source dimension must be ≥ 2, got {m}"));
        }
        if a.len() != m as usize || base.len() != m as usize {
            return invalid("coefficients and base point must have length m");
        }
        let at_o = a.iter().zip(base).map(|(x, y)| x * y).sum::<Complex64>() + c;
        if cnorm2(&a) == 0.0 && at_o.norm_sqr() == 0.0 {
            return invalid("ψ vanishes identically");
        }
        if at_o.norm_sqr() == 0.0 {
            return Err(Error::Hypothesis("ψ(o) = 0: log|ψ| is singular at the base point".into()));
        }
        Ok(AffinePsi { m, a, at_o })
    }

    /// `z ↦ z_j + c` (`j` counted from 1), based at the origin.
    pub fn coordinate(m: u32, j: usize, c: Complex64) -> Result<Self> {
        if j == 0 || j > m as usize {
            return invalid(format!("coordinate index {j} outside 1..={m}"));
        }
        let mut a = vec![Complex64::new(0.0, 0.0); m as usize];
        a[j - 1] = Complex64::new(1.0, 0.0);
        Self::new(m, a, c, &vec![Complex64::new(0.0, 0.0); m as usize])
    }

    pub fn source_dim(&self) -> u32 {
        self.m
    }

    pub fn is_constant(&self) -> bool {
        cnorm2(&self.a) == 0.0
    }

    fn slope(&self) -> f64 {
        cnorm2(&self.a).sqrt()
    }

    /// `‖∇ψ‖ = √2 |a|` for the flat Kähler metric.
    pub fn gradient_norm(&self) -> f64 {
        SQRT_2 * self.slope()
    }
}

/// Mean of `h(|g + R e^{iθ}|)` over `θ`, with `g ≥ 0`; `kinks` are values of
/// `|ζ|` where `h` is not smooth.
fn circle_mean(g: f64, radius: f64, h: &dyn Fn(f64) -> f64, kinks: &[f64]) -> Result<f64> {
    if radius == 0.0 || g == 0.0 {
        return Ok(h(g.max(radius)));
    }
    let dist = |th: f64| (g * g + radius * radius + 2.0 * g * radius * th.cos()).max(0.0).sqrt();
    let mut br = vec![0.0, PI];
    for &k in kinks {
        let c = (k * k - g * g - radius * radius) / (2.0 * g * radius);
        if c > -1.0 && c < 1.0 {
            br.push(c.acos());
        }
    }
    br.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let est =
        quad::integrate_with_breaks(&|th: f64| h(dist(th)), &br, Tolerance::rel(INNER_TOL)).require("circle mean")?;
    Ok(est.value / PI)
}

/// Mean of `h(|ψ|)` over `∂B(o, r)`: `ψ = |a| u + ψ(o)` with `b = |u|²/r²`
/// distributed as `(m−1)(1−b)^{m−2} db` and the phase of `u` uniform.
fn sphere_mean_of_abs(psi: &AffinePsi, r: f64, h: &dyn Fn(f64) -> f64, kink: f64) -> Result<f64> {
    let g = psi.at_o.norm();
    let bn = psi.slope();
    if bn == 0.0 {
        return Ok(h(g));
    }
    let m = psi.m as f64;
    let mut br = vec![0.0, 1.0];
    let mut lo: f64 = 1.0;
    // The circle mean also has a kink where the circle passes through 0.
    for t in [(g - kink).abs(), g + kink, g] {
        let b = (t / (bn * r)).powi(2);
        if b > 0.0 && b < 1.0 {
            br.push(b);
            lo = lo.min(b / 16.0);
        }
    }
    let br = quad::with_geometric_breaks(br, lo, 1.0);
    let f = |b: f64| {
        let dens = (m - 1.0) * (1.0 - b).max(0.0).powi(psi.m as i32 - 2);
        match circle_mean(g, bn * r * b.max(0.0).sqrt(), h, &[kink]) {
            Ok(v) => dens * v,
            Err(_) => f64::NAN,
        }
    };
    Ok(quad::integrate_with_breaks(&f, &br, Tolerance::rel(OUTER_TOL)).require("sphere mean of |ψ|")?.value)
}

/// `T(r, ψ) = m(r, ψ)`: `ψ` is entire, so `N(r, ψ) = 0`.
fn nevanlinna_t(psi: &AffinePsi, r: f64) -> Result<f64> {
    sphere_mean_of_abs(psi, r, &|x| x.ln().max(0.0), 1.0)
}

/// `m(r, ‖∇ψ‖/|ψ|)`.
fn log_derivative_m(psi: &AffinePsi, r: f64) -> Result<f64> {
    if psi.is_constant() {
        return Ok(0.0);
    }
    let grad = psi.gradient_norm();
    sphere_mean_of_abs(psi, r, &|x| (grad / x).ln().max(0.0), grad)
}

/// `∫_{P¹} N(r, 1/(ψ − ζ)) Ψ(ζ)` with
/// `Ψ = dA / (2π² |ζ|² (1 + log²|ζ|))`.  In `ζ = e^{x+iθ}` the density is
/// `dx/(π(1+x²)) · dθ/2π`, and the preimage of `ζ` is a hyperplane at
/// distance `|ζ − ψ(o)|/|a|` from `o`.
fn psi_energy(psi: &AffinePsi, r: f64) -> Result<f64> {
    if psi.is_constant() {
        return Ok(0.0);
    }
    let g = psi.at_o.norm();
    let bn = psi.slope();
    let m = psi.m;
    let reach = bn * r;
    let w = |rho: f64| slice_weight(m, rho / bn, r);
    let inner = |x: f64| -> f64 {
        let e = x.exp();
        match circle_mean(g, e, &|d| w(d), &[reach]) {
            Ok(v) => v / (PI * (1.0 + x * x)),
            Err(_) => f64::NAN,
        }
    };
    let x_max = (g + reach).ln();
    let mut br = vec![x_max, g.ln()];
    if (g - reach).abs() > 0.0 {
        br.push((g - reach).abs().ln());
    }
    br.retain(|b| b.is_finite());
    br.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let x_lo = br[0] - 1.0;
    br.insert(0, x_lo);
    let tol = Tolerance::rel(OUTER_TOL);
    let mut total = quad::integrate_with_breaks(&inner, &br, tol).require("Ψ energy")?.value;
    // Below x_lo the circle |ζ| = e^x lies inside the support only when g < |a| r.
    if g < reach {
        let tail = |t: f64| {
            if t >= 1.0 {
                return 0.0;
            }
            inner(x_lo - t / (1.0 - t)) / ((1.0 - t) * (1.0 - t))
        };
        total += quad::integrate(&tail, 0.0, 1.0, tol).require("Ψ energy tail")?.value;
    }
    Ok(total)
}

/// `∫_{P¹} Ψ`, which must be 1: the radial density `dρ/(πρ(1 + ln²ρ))`
/// integrated in `x = ln ρ`.
pub fn psi_total_mass() -> Result<Value> {
    let density = |x: f64| 1.0 / (PI * (1.0 + x * x));
    let est = quad::integrate_real_line(&density, Tolerance::rel(1e-12)).require("Ψ mass")?;
    Ok(Value { value: est.value, error: est.error })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogDerivativeRow {
    pub r: f64,
    /// `T(r, ψ)`.
    pub t: f64,
    /// `∫ N(r, 1/(ψ−ζ)) Ψ(ζ)`.
    pub energy: f64,
    /// `m(r, ‖∇ψ‖/|ψ|)`.
    pub lhs: f64,
    /// `((2 + (1+δ)²)/2) log⁺T(r, ψ) + ½ log⁺Ξ(r, δ, κ)`, without the constant.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogDerivativeReport {
    pub rows: Vec<LogDerivativeRow>,
    /// `max (energy − T)` over the first quarter of the grid.
    pub lemma_constant: f64,
    /// How far `energy − T` rises above that constant later on, relative to
    /// the range of `T`.
    pub lemma_stability: f64,
    /// `max (lhs − bound)`: the constant the estimate needs on the grid.
    pub theorem_constant: f64,
}

impl LogDerivativeReport {
    /// The constant fitted on the first quarter needs to grow by less than
    /// a tenth of the range of `T`.
    pub fn lemma_stable(&self) -> bool {
        self.lemma_stability < 0.1
    }
}

fn check_increasing(r_grid: &[f64]) -> Result<()> {
    if r_grid.len() < 2 || r_grid[0] <= 0.0 || r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("need a strictly increasing grid of at least two positive radii");
    }
    Ok(())
}

/// Energy identity and logarithmic-derivative estimate for an affine
/// function on a flat model.
pub fn log_derivative_lemma_check(
    psi: &AffinePsi,
    model: &ConnectedSumModel,
    r_grid: &[f64],
    delta: f64,
) -> Result<LogDerivativeReport> {
    check_increasing(r_grid)?;
    if !model.is_flat_space() {
        return Err(Error::Unsupported("affine test functions live on the flat model ℂ^m".into()));
    }
    if model.complex_dim() != psi.m {
        return invalid("ψ and the model disagree on the dimension");
    }
    if !(delta >= 0.0) {
        return invalid(format!("δ must be ≥ 0, got {delta}"));
    }
    let coef = (2.0 + (1.0 + delta).powi(2)) / 2.0;
    let rows: Vec<LogDerivativeRow> = par::map_slice(r_grid, |&r| {
        let t = nevanlinna_t(psi, r)?;
        Ok(LogDerivativeRow {
            r,
            t,
            energy: psi_energy(psi, r)?,
            lhs: log_derivative_m(psi, r)?,
            bound: coef * t.ln().max(0.0) + 0.5 * ln_xi(model, r, delta)?.max(0.0),
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let diff: Vec<f64> = rows.iter().map(|row| row.energy - row.t).collect();
    let fold_max = |v: &mut dyn Iterator<Item = f64>| v.fold(f64::NEG_INFINITY, f64::max);
    let fold_min = |v: &mut dyn Iterator<Item = f64>| v.fold(f64::INFINITY, f64::min);
    let calib = (rows.len() / 4).max(1);
    let lemma_constant = fold_max(&mut diff[..calib].iter().copied());
    let excess = (fold_max(&mut diff.iter().copied()) - lemma_constant).max(0.0);
    let t_range = fold_max(&mut rows.iter().map(|row| row.t)) - fold_min(&mut rows.iter().map(|row| row.t));
    let lemma_stability = if excess == 0.0 {
        0.0
    } else if t_range > 0.0 {
        excess / t_range
    } else {
        f64::INFINITY
    };
    let theorem_constant = fold_max(&mut rows.iter().map(|row| row.lhs - row.bound));
    Ok(LogDerivativeReport { rows, lemma_constant, lemma_stability, theorem_constant })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BorelReport {
    /// Maximal runs of sample intervals on which `u' > u^{1+δ}`.
    pub intervals: Vec<(f64, f64)>,
    pub measure: f64,
    /// `min_i [1/(δ u(r_i)^δ) + r_i − r₀]` over samples with `u(r_i) > 0`.
    pub bound: f64,
}

impl BorelReport {
    pub fn within_bound(&self) -> bool {
        self.measure <= self.bound * (1.0 + 1e-12)
    }
}

/// Exceptional set of Borel's growth lemma for a sampled non-decreasing `u`.
pub fn borel_exceptional(r: &[f64], u: &[f64], delta: f64) -> Result<BorelReport> {
    if r.len() != u.len() {
        return invalid("radii and samples differ in length");
    }
    if r.len() < 2 || r[0] < 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("radii must be non-negative and strictly increasing");
    }
    if !(delta > 0.0) {
        return invalid(format!("δ must be positive, got {delta}"));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return invalid("samples must be finite");
    }
    if u.windows(2).any(|w| w[1] < w[0]) {
        return invalid("samples must be non-decreasing");
    }
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for i in 0..r.len() - 1 {
        let q = (u[i + 1] - u[i]) / (r[i + 1] - r[i]);
        if q > u[i + 1].max(0.0).powf(1.0 + delta) {
            match intervals.last_mut() {
                Some(last) if last.1 == r[i] => last.1 = r[i + 1],
                _ => intervals.push((r[i], r[i + 1])),
            }
        }
    }
    let measure = intervals.iter().fold(0.0, |s, (a, b)| s + (b - a));
    let bound = r
        .iter()
        .zip(u)
        .filter(|(_, &x)| x > 0.0)
        .map(|(&ri, &x)| 1.0 / (delta * x.powf(delta)) + ri - r[0])
        .fold(f64::INFINITY, f64::min);
    Ok(BorelReport { intervals, measure, bound })
}

/// Non-negative integrand `k` for the calculus lemma on `ℂ^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CalculusIntegrand {
    Constant {
        value: f64,
    },
    /// `‖∇z₁‖² = 2`.
    GradCoordinate,
    /// `|x − p|^{−power}` with `|p| = distance`.
    Pole {
        distance: f64,
        power: f64,
    },
}

impl CalculusIntegrand {
    fn validate(&self, m: u32) -> Result<()> {
        match *self {
            CalculusIntegrand::Constant { value } if !(value > 0.0 && value.is_finite()) => {
                invalid(format!("constant integrand must be positive, got {value}"))
            }
            CalculusIntegrand::Pole { distance, power } => {
                if !(distance > 0.0) {
                    return Err(Error::Hypothesis("the pole must avoid the base point".into()));
                }
                let max = 2.0 * m as f64 - 2.0;
                if !(power > 0.0 && power < max) {
                    return Err(Error::Hypothesis(format!(
                        "pole order {power} must lie in (0, {max}), weaker than the Green singularity"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn sphere_mean(&self, m: u32, s: f64) -> Result<f64> {
        match *self {
            CalculusIntegrand::Constant { value } => Ok(value),
            CalculusIntegrand::GradCoordinate => Ok(2.0),
            CalculusIntegrand::Pole { distance, power } => {
                sphere_mean_of_distance(2 * m as usize, s, distance, &|x| x.powf(-power), Tolerance::rel(INNER_TOL))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalculusReport {
    /// `(r, ∫_{∂B(r)} k dπ_r)`.
    pub lhs: Vec<(f64, f64)>,
    /// `∫_{B(r)} g_r k dv`.
    pub integrals: Vec<f64>,
    /// `Ξ(r, δ, κ) (∫ g_r k)^{(1+δ)²}`.
    pub rhs_unit: Vec<f64>,
    /// Constant fitted on the first quarter of the grid.
    pub constant: f64,
    /// Radii where `lhs > C · rhs_unit`.
    pub violations: Vec<f64>,
    pub violation_fraction: f64,
    /// Total length of the grid cells starting at a violation.
    pub violation_measure: f64,
}

/// `∫_{∂B(r)} k dπ_r ≤ C Ξ (∫_{B(r)} g_r k dv)^{(1+δ)²}` outside a set of
/// finite measure, on flat `ℂ^m`.
pub fn calculus_lemma_check(
    model: &ConnectedSumModel,
    k: &CalculusIntegrand,
    r_grid: &[f64],
    delta: f64,
) -> Result<CalculusReport> {
    check_increasing(r_grid)?;
    if !model.is_flat_space() {
        return Err(Error::Unsupported("the calculus-lemma check runs on flat ℂ^m".into()));
    }
    if !(delta >= 0.0) {
        return invalid(format!("δ must be ≥ 0, got {delta}"));
    }
    let m = model.complex_dim();
    k.validate(m)?;
    let rows: Vec<(f64, f64, f64)> = par::map_slice(r_grid, |&r| {
        let lhs = k.sphere_mean(m, r)?;
        let radial = |s: f64| {
            let w = (s - s.powi(2 * m as i32 - 1) * r.powi(2 - 2 * m as i32)) / (m as f64 - 1.0);
            k.sphere_mean(m, s).map_or(f64::NAN, |v| w * v)
        };
        let mut br = vec![0.0, r];
        if let CalculusIntegrand::Pole { distance, .. } = *k {
            if distance < r {
                br.push(distance);
            }
            br = quad::with_geometric_breaks(br, distance / 8.0, r);
        }
        let integral = quad::integrate_with_breaks(&radial, &br, Tolerance::rel(OUTER_TOL))
            .require("calculus-lemma integral")?
            .value;
        let unit = ln_xi(model, r, delta)?.exp() * integral.powf((1.0 + delta).powi(2));
        Ok((lhs, integral, unit))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let calib = (r_grid.len() / 4).max(1);
    let constant = rows[..calib].iter().map(|&(l, _, u)| l / u).fold(f64::NEG_INFINITY, f64::max);
    let mut violations = Vec::new();
    let mut violation_measure = 0.0;
    for (i, &(l, _, u)) in rows.iter().enumerate() {
        if l > constant * u * (1.0 + 1e-9) {
            violations.push(r_grid[i]);
            if i + 1 < r_grid.len() {
                violation_measure += r_grid[i + 1] - r_grid[i];
            }
        }
    }
    Ok(CalculusReport {
        lhs: r_grid.iter().zip(&rows).map(|(&r, row)| (r, row.0)).collect(),
        integrals: rows.iter().map(|row| row.1).collect(),
        rhs_unit: rows.iter().map(|row| row.2).collect(),
        constant,
        violation_fraction: violations.len() as f64 / r_grid.len() as f64,
        violations,
        violation_measure,
    })
}
