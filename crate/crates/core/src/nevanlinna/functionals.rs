use num_complex::Complex64;
use serde::Serialize;

use super::{cnorm2, growth, lagrange, preimage, slice_weight, smt, Budget, DivisorSpec, LineMap, TestMap};
use crate::error::{invalid, Error, Result};
use crate::exhaustion::hyperplane_slice_integral;
use crate::model_geometry::ConnectedSumModel;
use crate::qmc::{complex_sphere_point, random_shifts, sphere_dim, Kronecker};
use crate::quad::{self, Tolerance};
use crate::{par, Error as E};

/// A computed functional with its error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Value {
    pub value: f64,
    pub error: f64,
}

impl Value {
    pub fn exact(value: f64) -> Self {
        Value { value, error: 0.0 }
    }

    fn scale(self, s: f64) -> Self {
        Value { value: s * self.value, error: s.abs() * self.error }
    }
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return invalid(format!("radius must be positive, got {r}"));
    }
    Ok(())
}

/// Unit-sphere point sets, one per shift.
fn sphere_points(m: usize, budget: &Budget, tag: u64) -> Vec<Vec<Vec<Complex64>>> {
    let dim = sphere_dim(m);
    let seq = Kronecker::new(dim);
    let shifts = random_shifts(budget.seed, tag, budget.qmc_shifts, dim);
    let mut u = vec![0.0; dim];
    shifts
        .iter()
        .map(|sh| {
            (0..budget.qmc_points as u64)
                .map(|i| {
                    seq.point(i, sh, &mut u);
                    let mut z = vec![Complex64::new(0.0, 0.0); m];
                    complex_sphere_point(&u, &mut z);
                    z
                })
                .collect()
        })
        .collect()
}

fn mean_over_shifts(vals: &[f64]) -> Value {
    let (value, error) = par::mean_and_se(vals);
    Value { value, error }
}

/// Density of `b = |u|²/r²` for the projection `u` of a uniform point of
/// `S^{2m−1}(r)` on a complex line: `(m−1)(1−b)^{m−2}`.
fn beta_density(m: u32, b: f64) -> f64 {
    (m as f64 - 1.0) * (1.0 - b).max(0.0).powi(m as i32 - 2)
}

fn line_t(line: &LineMap, m: u32, r: f64, tol: Tolerance) -> Result<Value> {
    let k = line.wedge();
    if k == 0.0 {
        return Ok(Value::exact(0.0));
    }
    // Angular mean of 1/(P + Q cos)² is P/(P² − Q²)^{3/2}.
    let f = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let (p, q) = line.circle(s);
        let d = ((p - q) * (p + q)).max(1e-300);
        slice_weight(m, s, r) * s * p / (d * d.sqrt())
    };
    let an2 = cnorm2(&line.alpha);
    let centre = super::herm(&line.c, &line.alpha).norm() / an2;
    let scale = centre.max((cnorm2(&line.c) / an2).sqrt());
    let mut br = vec![0.0, r];
    if centre > 0.0 && centre < r {
        br.push(centre);
    }
    let br = quad::with_geometric_breaks(br, scale / 8.0, r);
    let est = quad::integrate_with_breaks(&f, &br, tol).require("characteristic function")?;
    Ok(Value { value: 2.0 * k * est.value, error: 2.0 * k * est.error })
}

fn qmc_t(f: &TestMap, r: f64, budget: &Budget) -> Result<Value> {
    let m = f.source_dim();
    let pts = sphere_points(m as usize, budget, 0x7431);
    let tol = Tolerance::rel(budget.rel_tol.max(1e-8));
    let per_shift: Vec<Result<f64>> = par::map_slice(&pts, |set| {
        let g = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let mut w = vec![Complex64::new(0.0, 0.0); m as usize];
            let mean = set
                .iter()
                .map(|z| {
                    w.iter_mut().zip(z).for_each(|(o, x)| *o = x * s);
                    f.trace_ddbar(&w)
                })
                .sum::<f64>()
                / set.len() as f64;
            let radial = (s - s.powi(2 * m as i32 - 1) * r.powi(2 - 2 * m as i32)) / (m as f64 - 1.0);
            radial * mean
        };
        let br = quad::with_geometric_breaks(vec![0.0, r], 1.0 / 64.0, r);
        Ok(quad::integrate_with_breaks(&g, &br, tol).require("characteristic function")?.value)
    });
    let vals: Vec<f64> = per_shift.into_iter().collect::<Result<_>>()?;
    Ok(mean_over_shifts(&vals))
}

/// `T_f(r) = T_f(r, O(1)) = ∫_{B(o,r)} g_r Σ_j ∂_j∂̄_j log‖F‖² dv`, the
/// Ahlfors–Shimizu characteristic `∫₀^r t^{1−2m} ∫_{B(t)} f*ω ∧ α^{m−1} dt`.
pub fn characteristic_t(f: &TestMap, r: f64, budget: &Budget) -> Result<Value> {
    check_r(r)?;
    budget.validate()?;
    if f.is_constant() {
        return Ok(Value::exact(0.0));
    }
    match f.line_reduction() {
        Some(line) if !budget.force_qmc => line_t(&line, f.source_dim(), r, Tolerance::rel(budget.rel_tol)),
        _ => qmc_t(f, r, budget),
    }
}

fn check_divisor(f: &TestMap, d: &DivisorSpec) -> Result<()> {
    d.check_target(f)?;
    for (j, l) in d.forms().iter().enumerate() {
        let (beta, gamma) = preimage(f, l);
        if cnorm2(&beta) == 0.0 && gamma.norm_sqr() == 0.0 {
            return Err(Error::Hypothesis(format!("f(ℂ^m) lies inside component {j} of D")));
        }
    }
    Ok(())
}

fn line_m(line: &LineMap, d: &DivisorSpec, m: u32, r: f64, tol: Tolerance) -> Result<Value> {
    let mut pulled = Vec::new();
    let mut breaks = vec![0.0, 1.0];
    let an2 = cnorm2(&line.alpha);
    let mut lo = if an2 > 0.0 { (cnorm2(&line.c) / an2) / (64.0 * r * r) } else { 1.0 };
    for l in d.forms() {
        let (beta, gamma) = line.pull(l);
        let l2 = cnorm2(l);
        let ln_l = 0.5 * l2.ln();
        let spread = lagrange(l, &line.alpha);
        if beta.norm() > 0.0 {
            let b = (gamma.norm() / (beta.norm() * r)).powi(2);
            if b > 0.0 && b < 1.0 {
                breaks.push(b);
                lo = lo.min(b / 16.0);
            }
        }
        pulled.push((beta, gamma, ln_l, l2, spread));
    }
    let breaks = quad::with_geometric_breaks(breaks, lo, 1.0);
    let f = |b: f64| {
        let s = r * b.max(0.0).sqrt();
        let (p, q) = line.circle(s);
        let half_ln_v2 = 0.5 * ((p + ((p - q) * (p + q)).max(0.0).sqrt()) / 2.0).ln();
        let mut sum = 0.0;
        for (beta, gamma, ln_l, l2, spread) in &pulled {
            // Jensen on a circle: mean ln|βu + γ| = ln|β| + ln max(s, |γ/β|).
            let bn = beta.norm();
            if bn > 0.0 && s > gamma.norm() / bn && an2 > 0.0 {
                let excess = l2 * line.circle_excess(s) + spread;
                sum += 0.5 * (excess / (bn * bn)).ln_1p();
                continue;
            }
            let mean_ln = if bn > 0.0 { bn.ln() + s.max(gamma.norm() / bn).ln() } else { gamma.norm().ln() };
            sum += ln_l + half_ln_v2 - mean_ln;
        }
        beta_density(m, b) * sum
    };
    let est = quad::integrate_with_breaks(&f, &breaks, tol).require("proximity function")?;
    Ok(Value { value: est.value.max(0.0), error: est.error })
}

fn qmc_m(f: &TestMap, d: &DivisorSpec, r: f64, budget: &Budget) -> Result<Value> {
    let m = f.source_dim() as usize;
    for attempt in 0..3u64 {
        let pts = sphere_points(m, budget, 0x6d66 + attempt);
        let vals: Vec<f64> = par::map_slice(&pts, |set| {
            let mut w = vec![Complex64::new(0.0, 0.0); m];
            let mut v = vec![Complex64::new(0.0, 0.0); f.target_dim() + 1];
            let s: Vec<f64> = set
                .iter()
                .map(|z| {
                    w.iter_mut().zip(z).for_each(|(o, x)| *o = x * r);
                    f.eval(&w, &mut v);
                    d.log_inv_norm(&v)
                })
                .collect();
            par::pairwise_sum(&s) / s.len() as f64
        });
        if vals.iter().all(|v| v.is_finite()) {
            return Ok(mean_over_shifts(&vals));
        }
    }
    Err(E::Divergent(format!("proximity integrand hits the divisor on ∂B({r}) after re-jittering")))
}

/// `m_f(r, D) = ∫_{∂B(o,r)} log 1/‖s_D ∘ f‖ dπ_r`.
pub fn proximity_m(f: &TestMap, d: &DivisorSpec, r: f64, budget: &Budget) -> Result<Value> {
    check_r(r)?;
    budget.validate()?;
    check_divisor(f, d)?;
    if f.is_constant() {
        let v = d.log_inv_norm(f.f_at_o());
        if !v.is_finite() {
            return Err(Error::Hypothesis("the constant map lies in Supp D".into()));
        }
        return Ok(Value::exact(v));
    }
    match f.line_reduction() {
        Some(line) if !budget.force_qmc => line_m(&line, d, f.source_dim(), r, Tolerance::rel(budget.rel_tol)),
        _ => qmc_m(f, d, r, budget),
    }
}

/// `N_f(r, D) = (π^m/(m−1)!) ∫_{f*D ∩ B(r)} g_r α^{m−1}`; each component
/// pulls back to an affine hyperplane and contributes its slice integral.
pub fn counting_n(f: &TestMap, d: &DivisorSpec, r: f64) -> Result<Value> {
    check_r(r)?;
    check_divisor(f, d)?;
    let m = f.source_dim();
    let mut total = 0.0;
    for l in d.forms() {
        let (beta, gamma) = preimage(f, l);
        let bn = cnorm2(&beta).sqrt();
        if bn == 0.0 {
            continue;
        }
        let dist = gamma.norm() / bn;
        if dist == 0.0 {
            return Err(Error::Hypothesis("f(o) lies in Supp D; the counting function diverges".into()));
        }
        total += hyperplane_slice_integral(m, dist, r)?;
    }
    Ok(Value { value: total, error: 1e-12 * total.abs() })
}

/// Simple counting function; the pulled-back hyperplanes are reduced, so it
/// agrees with [`counting_n`].
pub fn counting_nbar(f: &TestMap, d: &DivisorSpec, r: f64) -> Result<Value> {
    counting_n(f, d, r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FmtReport {
    pub r: f64,
    /// `T_f(r, L)` with `L = O(deg D)`.
    pub t: f64,
    pub m: f64,
    pub n: f64,
    /// `log 1/‖s_D(f(o))‖`.
    pub boundary: f64,
    /// `|T + boundary − m − N|`.
    pub residual: f64,
    /// Sum of the per-term error estimates.
    pub error_budget: f64,
}

/// First main theorem balance `T_f(r,L) + log 1/‖s_D∘f(o)‖ = m_f(r,D) + N_f(r,D)`.
pub fn fmt_residual(f: &TestMap, d: &DivisorSpec, r: f64, budget: &Budget) -> Result<FmtReport> {
    check_divisor(f, d)?;
    let boundary = d.log_inv_norm(f.f_at_o());
    if !boundary.is_finite() {
        return Err(Error::Hypothesis("f(o) ∈ Supp D".into()));
    }
    let t = characteristic_t(f, r, budget)?.scale(d.degree() as f64);
    let m = proximity_m(f, d, r, budget)?;
    let n = counting_n(f, d, r)?;
    let residual = (t.value + boundary - m.value - n.value).abs();
    Ok(FmtReport {
        r,
        t: t.value,
        m: m.value,
        n: n.value,
        boundary,
        residual,
        error_budget: t.error + m.error + n.error,
    })
}

/// `T(r, 𝓡)` for `𝓡 = −dd^c log det(g)`; zero on flat ends, where `det g`
/// is constant, and on the seam, which has measure zero.
pub fn ricci_characteristic(model: &ConnectedSumModel, r: f64) -> Result<f64> {
    check_r(r)?;
    if !model.is_flat() {
        return Err(Error::Unsupported("the Ricci characteristic is implemented for flat ends".into()));
    }
    Ok(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RGridRow {
    pub r: f64,
    pub t: f64,
    pub m: f64,
    pub n: f64,
    pub nbar: f64,
    pub t_ricci: f64,
    pub xi: f64,
    /// `E(r)` on homogeneous models.
    pub e: Option<f64>,
    pub fmt_residual: f64,
    /// `N̄ − (T_f(L) + T_f(K_X) + T(𝓡))`, before error terms.
    pub smt_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RGridReport {
    pub rows: Vec<RGridRow>,
    pub t_monotone: bool,
    pub n_monotone: bool,
    pub nbar_le_n: bool,
    /// `max (N − T)`, the constant in `N ≤ T + O(1)`.
    pub n_minus_t_max: f64,
}

/// Every functional on a grid of radii.
pub fn r_grid_report(
    f: &TestMap,
    d: &DivisorSpec,
    model: &ConnectedSumModel,
    r_grid: &[f64],
    delta: f64,
    budget: &Budget,
) -> Result<RGridReport> {
    if r_grid.is_empty() || r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("r grid must be non-empty and strictly increasing");
    }
    let homogeneous = model.is_homogeneous().then(|| model.ends()[0].profile.clone());
    let rows: Vec<Result<RGridRow>> = par::map_slice(r_grid, |&r| {
        let fmt = fmt_residual(f, d, r, budget)?;
        let nbar = counting_nbar(f, d, r)?.value;
        let t_ricci = ricci_characteristic(model, r)?;
        let xi = growth::xi(model, r, delta)?;
        let e = homogeneous.as_ref().map(|p| growth::e_growth(p, r)).transpose()?;
        let lhs = smt::lhs(f, d, fmt.t, t_ricci);
        Ok(RGridRow {
            r,
            t: fmt.t,
            m: fmt.m,
            n: fmt.n,
            nbar,
            t_ricci,
            xi,
            e,
            fmt_residual: fmt.residual,
            smt_margin: nbar - lhs,
        })
    });
    let rows: Vec<RGridRow> = rows.into_iter().collect::<Result<_>>()?;
    let mono =
        |g: &dyn Fn(&RGridRow) -> f64| rows.windows(2).all(|w| crate::model_geometry::not_above(g(&w[0]), g(&w[1])));
    Ok(RGridReport {
        t_monotone: mono(&|row| row.t),
        n_monotone: mono(&|row| row.n),
        nbar_le_n: rows.iter().all(|row| row.nbar <= row.n * (1.0 + 1e-12)),
        n_minus_t_max: rows.iter().map(|row| row.n - row.t).fold(f64::NEG_INFINITY, f64::max),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nevanlinna::P1Point;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn z1() -> TestMap {
        TestMap::coordinate(2, 1, vec![c(1.0), c(0.0)]).unwrap()
    }

    fn zero_divisor() -> DivisorSpec {
        DivisorSpec::points(&[P1Point::Finite { re: 0.0, im: 0.0 }]).unwrap()
    }

    #[test]
    fn fmt_balances_for_coordinate_map() {
        let b = Budget::default();
        for &r in &[2.0, 4.0, 8.0] {
            let rep = fmt_residual(&z1(), &zero_divisor(), r, &b).unwrap();
            assert!(rep.residual < 1e-8, "{rep:?}");
        }
    }

    #[test]
    fn qmc_path_agrees_with_line_reduction() {
        let exact = Budget::default();
        let q = Budget { force_qmc: true, qmc_points: 4096, ..Budget::default() };
        let t0 = characteristic_t(&z1(), 3.0, &exact).unwrap();
        let t1 = characteristic_t(&z1(), 3.0, &q).unwrap();
        assert!((t0.value - t1.value).abs() < 5.0 * t1.error + 1e-3, "{t0:?} {t1:?}");
        let m0 = proximity_m(&z1(), &zero_divisor(), 3.0, &exact).unwrap();
        let m1 = proximity_m(&z1(), &zero_divisor(), 3.0, &q).unwrap();
        assert!((m0.value - m1.value).abs() < 5.0 * m1.error + 1e-3, "{m0:?} {m1:?}");
    }

    #[test]
    fn constant_map_degenerate_identity() {
        let f = TestMap::constant(2, vec![c(1.0), c(2.0)], vec![c(1.0), c(0.0)]).unwrap();
        let d = zero_divisor();
        let b = Budget::default();
        assert_eq!(characteristic_t(&f, 3.0, &b).unwrap().value, 0.0);
        assert_eq!(counting_n(&f, &d, 3.0).unwrap().value, 0.0);
        let rep = fmt_residual(&f, &d, 3.0, &b).unwrap();
        assert_eq!(rep.m, rep.boundary);
        assert_eq!(rep.residual, 0.0);
    }

    #[test]
    fn hypothesis_violation_detected() {
        let f = TestMap::coordinate(2, 1, vec![c(0.0), c(0.0)]).unwrap();
        assert!(matches!(fmt_residual(&f, &zero_divisor(), 2.0, &Budget::default()), Err(Error::Hypothesis(_))));
    }
}
