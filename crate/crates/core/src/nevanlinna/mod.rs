//! Value-distribution functionals of affine-linear test maps `f: ℂ^m → P^n`
//! against hyperplane divisors, on the flat exhaustion `Δ(r) = B(o, r)`:
//! characteristic, proximity and counting functions, the first and second
//! main theorem balances, `Ξ` and `E`, the logarithmic-derivative estimates,
//! Borel's lemma and simple defects.

mod functionals;
mod growth;
mod logderiv;
mod smt;

pub use functionals::{
    characteristic_t, counting_n, counting_nbar, fmt_residual, proximity_m, r_grid_report, ricci_characteristic,
    FmtReport, RGridReport, RGridRow, Value,
};
pub use growth::{e_growth, jy_limit, ln_xi, xi, xi_asymptotics, JyReport, XiAsymptotics, XiEnvelope};
pub use logderiv::{
    borel_exceptional, calculus_lemma_check, log_derivative_lemma_check, psi_total_mass, AffinePsi, BorelReport,
    CalculusIntegrand, CalculusReport, LogDerivativeReport, LogDerivativeRow,
};
pub use smt::{defect, smt_margin, smt_sweep, DefectReport, ErrorTerm, SmtMargin, SmtSweep};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::ln_factorial;

/// Budgets for the quadratures behind every functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    /// Relative tolerance of the adaptive 1-D quadratures.
    pub rel_tol: f64,
    /// Quasi-random points per shift for sphere averages.
    pub qmc_points: usize,
    /// Independent random shifts, for the error estimate.
    pub qmc_shifts: usize,
    pub seed: u64,
    /// Use the quasi-random path even when a closed reduction exists.
    #[serde(default)]
    pub force_qmc: bool,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { rel_tol: 1e-10, qmc_points: 2048, qmc_shifts: 8, seed: 0, force_qmc: false }
    }
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return invalid(format!("rel_tol must lie in (0,1), got {}", self.rel_tol));
        }
        if self.qmc_points == 0 || self.qmc_shifts < 2 {
            return invalid("need qmc_points ≥ 1 and qmc_shifts ≥ 2");
        }
        Ok(())
    }
}

/// `f = [F₀ : … : F_n]` with affine components `F_i(z) = Σ_j a_ij z_j + b_i`,
/// seen from the base point `o`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestMap {
    m: u32,
    /// `a_ij`, one row per component.
    coeffs: Vec<Vec<Complex64>>,
    /// `F_i(o)`.
    at_o: Vec<Complex64>,
    base: Vec<Complex64>,
}

fn cnorm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `Σ x_i ȳ_i`.
fn herm(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a * b.conj()).sum()
}

/// `‖x‖²‖y‖² − |Σ x_i y_i|²` as the sum `Σ_{i<j} |x_i y_j − x_j y_i|²`.
fn lagrange(x: &[Complex64], y: &[Complex64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            s += (x[i] * y[j] - x[j] * y[i]).norm_sqr();
        }
    }
    s
}

/// Rank of a small complex matrix by Gaussian elimination with pivoting.
fn rank(rows: &[Vec<Complex64>], tol: f64) -> usize {
    let mut a: Vec<Vec<Complex64>> = rows.to_vec();
    let cols = a.first().map_or(0, |r| r.len());
    let scale = a.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let mut rk = 0;
    for c in 0..cols {
        let piv = (rk..a.len()).max_by(|&i, &j| a[i][c].norm().partial_cmp(&a[j][c].norm()).unwrap());
        let Some(p) = piv else { break };
        if a[p][c].norm() <= tol * scale {
            continue;
        }
        a.swap(rk, p);
        let (head, tail) = a.split_at_mut(rk + 1);
        let pivot = &head[rk];
        for row in tail {
            let f = row[c] / pivot[c];
            for (x, v) in row[c..cols].iter_mut().zip(&pivot[c..cols]) {
                *x -= f * v;
            }
        }
        rk += 1;
    }
    rk
}

const RANK_TOL: f64 = 1e-12;

impl TestMap {
    /// Components given as `(a_i, b_i)` pairs; `base` is `o`.
    pub fn affine(m: u32, components: Vec<(Vec<Complex64>, Complex64)>, base: Vec<Complex64>) -> Result<Self> {
        if m < 2 {
            return invalid(format!("source dimension must be ≥ 2, got {m}"));
        }
        let n1 = components.len();
        if n1 < 2 {
            return invalid("a map to P^n needs at least two components");
        }
        if n1 - 1 > m as usize {
            return Err(Error::Hypothesis(format!("target dimension {} exceeds source dimension {m}", n1 - 1)));
        }
        if base.len() != m as usize || components.iter().any(|(a, _)| a.len() != m as usize) {
            return invalid("coefficient rows and the base point must have length m");
        }
        let coeffs: Vec<Vec<Complex64>> = components.iter().map(|(a, _)| a.clone()).collect();
        let at_o: Vec<Complex64> =
            components.iter().map(|(a, b)| a.iter().zip(&base).map(|(x, y)| x * y).sum::<Complex64>() + b).collect();
        if components.iter().all(|(a, b)| cnorm2(a) == 0.0 && b.norm_sqr() == 0.0) {
            return invalid("all components vanish identically");
        }
        if cnorm2(&at_o) == 0.0 {
            return Err(Error::Hypothesis("f(o) is undefined: every component vanishes at o".into()));
        }
        let augmented: Vec<Vec<Complex64>> =
            coeffs.iter().zip(&at_o).map(|(a, c)| a.iter().cloned().chain([*c]).collect()).collect();
        if rank(&coeffs, RANK_TOL) > 0 && rank(&augmented, RANK_TOL) == 1 {
            return invalid("the components share a common affine factor; the map is not reduced");
        }
        Ok(TestMap { m, coeffs, at_o, base })
    }

    /// `z ↦ [1 : z_j]` (`j` counted from 1).
    pub fn coordinate(m: u32, j: usize, base: Vec<Complex64>) -> Result<Self> {
        if j == 0 || j > m as usize {
            return invalid(format!("coordinate index {j} outside 1..={m}"));
        }
        let zero = Complex64::new(0.0, 0.0);
        let mut a = vec![zero; m as usize];
        a[j - 1] = Complex64::new(1.0, 0.0);
        Self::affine(m, vec![(vec![zero; m as usize], Complex64::new(1.0, 0.0)), (a, zero)], base)
    }

    /// The constant map `[v₀ : … : v_n]`.
    pub fn constant(m: u32, value: Vec<Complex64>, base: Vec<Complex64>) -> Result<Self> {
        let zero = vec![Complex64::new(0.0, 0.0); m as usize];
        Self::affine(m, value.into_iter().map(|v| (zero.clone(), v)).collect(), base)
    }

    pub fn source_dim(&self) -> u32 {
        self.m
    }

    pub fn target_dim(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn base(&self) -> &[Complex64] {
        &self.base
    }

    pub fn f_at_o(&self) -> &[Complex64] {
        &self.at_o
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|a| cnorm2(a) == 0.0)
    }

    /// `df` has rank `n` somewhere; for affine maps this is `rank(A) ≥ n` on
    /// the projectivised differential, tested as `rank [A | F(o)] = n + 1`.
    pub fn is_nondegenerate(&self) -> bool {
        let aug: Vec<Vec<Complex64>> =
            self.coeffs.iter().zip(&self.at_o).map(|(a, c)| a.iter().cloned().chain([*c]).collect()).collect();
        rank(&aug, RANK_TOL) == self.coeffs.len()
    }

    /// `F(o + w)`.
    pub fn eval(&self, w: &[Complex64], out: &mut [Complex64]) {
        for ((o, a), c) in out.iter_mut().zip(&self.coeffs).zip(&self.at_o) {
            *o = a.iter().zip(w).map(|(x, y)| x * y).sum::<Complex64>() + c;
        }
    }

    /// `Σ_j ∂_j ∂̄_j log ‖F‖²` at `o + w`; `Δ log‖F‖ / 2`.
    pub fn trace_ddbar(&self, w: &[Complex64]) -> f64 {
        let mut v = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        self.eval(w, &mut v);
        let v2 = cnorm2(&v);
        let fro: f64 = self.coeffs.iter().map(|a| cnorm2(a)).sum();
        let m = self.m as usize;
        let mut adj = 0.0;
        for j in 0..m {
            let s: Complex64 = self.coeffs.iter().zip(&v).map(|(a, vi)| a[j] * vi.conj()).sum();
            adj += s.norm_sqr();
        }
        fro / v2 - adj / (v2 * v2)
    }

    /// When all rows are multiples of one vector `e`, `F(o + w) = α u + c`
    /// with `u = e·w/|e|` a unit-speed coordinate.
    fn line_reduction(&self) -> Option<LineMap> {
        let e = self.coeffs.iter().max_by(|a, b| cnorm2(a).partial_cmp(&cnorm2(b)).unwrap())?.clone();
        let en2 = cnorm2(&e);
        if en2 == 0.0 {
            return None;
        }
        let mut alpha = Vec::with_capacity(self.coeffs.len());
        for a in &self.coeffs {
            // a = λ e ⇒ λ = ⟨a, e⟩/|e|².
            let lam = herm(a, &e) / en2;
            let resid: f64 = a.iter().zip(&e).map(|(x, y)| (x - lam * y).norm_sqr()).sum();
            if resid > 1e-24 * en2.max(cnorm2(a)) {
                return None;
            }
            alpha.push(lam * en2.sqrt());
        }
        Some(LineMap { alpha, c: self.at_o.clone() })
    }
}

/// `v(u) = α u + c` on `u ∈ ℂ`.
#[derive(Clone, Debug)]
pub(crate) struct LineMap {
    pub alpha: Vec<Complex64>,
    pub c: Vec<Complex64>,
}

impl LineMap {
    /// On `|u| = s`: `|v|² = P + Q cos(θ + φ)`.
    pub fn circle(&self, s: f64) -> (f64, f64) {
        let p = cnorm2(&self.alpha) * s * s + cnorm2(&self.c);
        let q = 2.0 * s * herm(&self.alpha, &self.c).norm();
        (p, q)
    }

    /// `|α|²|c|² − |⟨c, α⟩|²`, the numerator of `∂∂̄ log|v|²`.
    pub fn wedge(&self) -> f64 {
        let c: Vec<Complex64> = self.c.iter().map(|z| z.conj()).collect();
        lagrange(&self.alpha, &c)
    }

    /// `X/s² − |α|²`, where `ln X` is the mean of `ln|v|²` on `|u| = s`
    /// (`X = (P + √(P² − Q²))/2`), evaluated without cancellation.
    pub fn circle_excess(&self, s: f64) -> f64 {
        let a = cnorm2(&self.alpha);
        let c = cnorm2(&self.c);
        let h2 = herm(&self.alpha, &self.c).norm_sqr();
        let inv2 = 1.0 / (s * s);
        let p = a + c * inv2;
        let q2 = 4.0 * h2 * inv2;
        let root = ((p - q2.sqrt()) * (p + q2.sqrt())).max(0.0).sqrt();
        let d = (2.0 * a * c * inv2 + c * c * inv2 * inv2 - q2) / (root + a);
        0.5 * (c * d * inv2 + 4.0 * self.wedge() * inv2 + c * c * inv2 * inv2) / (root + a)
    }

    /// `ℓ(v(u)) = β u + γ` for a linear form `ℓ`.
    pub fn pull(&self, l: &[Complex64]) -> (Complex64, Complex64) {
        let beta = l.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let gamma = l.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        (beta, gamma)
    }
}

/// A point of `P¹` for [`DivisorSpec::points`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P1Point {
    /// `[1 : a]`.
    Finite { re: f64, im: f64 },
    /// `[0 : 1]`.
    Infinity,
}

/// Reduced hyperplane divisor `D = Σ_j {ℓ_j = 0}` on `P^n`, with the
/// Fubini–Study metric on `L = O(deg D)`, so that
/// `‖s_D(ζ)‖ = Π_j |ℓ_j(ζ)| / (|ℓ_j| |ζ|) ≤ 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivisorSpec {
    forms: Vec<Vec<Complex64>>,
}

impl DivisorSpec {
    pub fn hyperplanes(n: usize, forms: Vec<Vec<Complex64>>) -> Result<Self> {
        if forms.is_empty() {
            return invalid("a divisor needs at least one component");
        }
        if forms.iter().any(|l| l.len() != n + 1 || cnorm2(l) == 0.0) {
            return invalid(format!("each component must be a nonzero linear form on ℂ^{}", n + 1));
        }
        // Simple normal crossings: any n + 1 (or fewer) components independent.
        let k = forms.len().min(n + 1);
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let sub: Vec<Vec<Complex64>> = idx.iter().map(|&i| forms[i].clone()).collect();
            if rank(&sub, 1e-10) < k {
                return invalid(format!("components {idx:?} are not in general position"));
            }
            let mut i = k;
            loop {
                if i == 0 {
                    return Ok(DivisorSpec { forms });
                }
                i -= 1;
                if idx[i] < forms.len() - k + i {
                    idx[i] += 1;
                    for j in i + 1..k {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    /// Distinct points of `P¹` in the chart `ζ₁/ζ₀`.
    pub fn points(points: &[P1Point]) -> Result<Self> {
        let forms = points
            .iter()
            .map(|p| match *p {
                P1Point::Finite { re, im } => vec![Complex64::new(-re, -im), Complex64::new(1.0, 0.0)],
                P1Point::Infinity => vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            })
            .collect();
        Self::hyperplanes(1, forms)
    }

    pub fn degree(&self) -> usize {
        self.forms.len()
    }

    pub fn forms(&self) -> &[Vec<Complex64>] {
        &self.forms
    }

    fn check_target(&self, f: &TestMap) -> Result<()> {
        if self.forms[0].len() != f.target_dim() + 1 {
            return invalid(format!(
                "divisor lives on P^{}, map targets P^{}",
                self.forms[0].len() - 1,
                f.target_dim()
            ));
        }
        Ok(())
    }

    /// `log 1/‖s_D(ζ)‖ ≥ 0`.
    pub fn log_inv_norm(&self, zeta: &[Complex64]) -> f64 {
        let zn = cnorm2(zeta).sqrt();
        self.forms
            .iter()
            .map(|l| {
                let v: Complex64 = l.iter().zip(zeta).map(|(a, b)| a * b).sum();
                (cnorm2(l).sqrt() * zn / v.norm()).ln()
            })
            .sum()
    }
}

/// Hyperplane `ℓ ∘ F = β·w + γ` pulled back to `ℂ^m`, `w = z − o`.
pub(crate) fn preimage(f: &TestMap, l: &[Complex64]) -> (Vec<Complex64>, Complex64) {
    let m = f.source_dim() as usize;
    let beta = (0..m).map(|j| l.iter().zip(&f.coeffs).map(|(a, row)| a * row[j]).sum()).collect();
    let gamma = l.iter().zip(&f.at_o).map(|(a, c)| a * c).sum();
    (beta, gamma)
}

/// `f` omits the hyperplane `{ℓ = 0}` entirely.
pub(crate) fn preimage_is_empty(f: &TestMap, l: &[Complex64]) -> bool {
    let (beta, gamma) = preimage(f, l);
    cnorm2(&beta) == 0.0 && gamma.norm_sqr() > 0.0
}

/// `∫_s^r t^{1−2m} (t² − s²)^{m−1} dt`; with `o` on the axis,
/// `π^{−1} w(|u|, r)` is the mass of `g_r` on the slice `{u = const}` and
/// `w(d, r)` is the counting contribution of a hyperplane at distance `d`.
pub fn slice_weight(m: u32, s: f64, r: f64) -> f64 {
    if s >= r {
        return 0.0;
    }
    if s <= 0.0 {
        return f64::INFINITY;
    }
    let k1 = m as i32 - 1;
    let mut sum = (r / s).ln();
    for k in 0..k1 {
        let ln_binom = ln_factorial(k1 as u32) - ln_factorial(k as u32) - ln_factorial((k1 - k) as u32);
        let sign = if (k1 - k) % 2 == 0 { 1.0 } else { -1.0 };
        let e = 2 * k + 2 - 2 * m as i32;
        let integral = (r.powi(e) - s.powi(e)) / e as f64;
        sum += sign * ln_binom.exp() * s.powi(2 * (k1 - k)) * integral;
    }
    sum.max(0.0)
}
