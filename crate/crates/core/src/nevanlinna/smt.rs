use serde::{Deserialize, Serialize};

use super::functionals::{characteristic_t, counting_nbar, ricci_characteristic};
use super::growth::{e_growth, ln_xi};
use super::{preimage_is_empty, Budget, DivisorSpec, TestMap};
use crate::error::{invalid, Error, Result};
use crate::model_geometry::ConnectedSumModel;
use crate::par;
use crate::stats::linear_fit;

/// Error term of the second main theorem, added to `log⁺T_f(r, L)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorTerm {
    /// `log⁺Ξ(r, δ, κ)`.
    Xi,
    /// `r²`.
    R2,
    /// `log r`.
    LogR,
    /// `log⁺E(r) + δ log r`.
    E,
}

impl std::str::FromStr for ErrorTerm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xi" => Ok(ErrorTerm::Xi),
            "r2" => Ok(ErrorTerm::R2),
            "log_r" => Ok(ErrorTerm::LogR),
            "e" => Ok(ErrorTerm::E),
            other => invalid(format!("unknown error term {other:?}")),
        }
    }
}

fn plus(x: f64) -> f64 {
    x.max(0.0)
}

impl ErrorTerm {
    pub fn eval(self, model: &ConnectedSumModel, t_l: f64, r: f64, delta: f64) -> Result<f64> {
        let extra = match self {
            ErrorTerm::Xi => plus(ln_xi(model, r, delta)?),
            ErrorTerm::R2 => r * r,
            ErrorTerm::LogR => plus(r.ln()),
            ErrorTerm::E => {
                if !model.is_homogeneous() {
                    return Err(Error::Hypothesis("the E(r) error term needs equal ends".into()));
                }
                plus(e_growth(&model.ends()[0].profile, r)?.ln()) + delta * plus(r.ln())
            }
        };
        Ok(plus(t_l.ln()) + extra)
    }
}

/// `T_f(r, L) + T_f(r, K_X) + T(r, 𝓡)` for `X = P^n`, `L = O(d)`: with
/// `K_{P^n} = O(−(n+1))`, `T_f(r, K_X) = −((n+1)/d) T_f(r, L)`.
pub(crate) fn lhs(f: &TestMap, d: &DivisorSpec, t_l: f64, t_ricci: f64) -> f64 {
    let deg = d.degree() as f64;
    let n1 = f.target_dim() as f64 + 1.0;
    t_l - n1 / deg * t_l + t_ricci
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmtMargin {
    pub r: f64,
    /// `T_f(r, L)`.
    pub t_l: f64,
    /// `T_f(r, K_X)`.
    pub t_k: f64,
    pub t_ricci: f64,
    pub lhs: f64,
    pub nbar: f64,
    /// Error term before its coefficient.
    pub error_term: f64,
    /// `N̄ − LHS`.
    pub raw_margin: f64,
    /// `f` is not differentiably non-degenerate; the row is a diagnostic.
    pub hypothesis_violating: bool,
}

/// Both sides of the second main theorem at one radius.
pub fn smt_margin(
    f: &TestMap,
    d: &DivisorSpec,
    model: &ConnectedSumModel,
    r: f64,
    delta: f64,
    term: ErrorTerm,
    budget: &Budget,
) -> Result<SmtMargin> {
    if !model.is_flat_space() {
        return Err(Error::Unsupported("test maps live on the flat model ℂ^m".into()));
    }
    let t_l = characteristic_t(f, r, budget)?.value * d.degree() as f64;
    let t_ricci = ricci_characteristic(model, r)?;
    let nbar = counting_nbar(f, d, r)?.value;
    let l = lhs(f, d, t_l, t_ricci);
    Ok(SmtMargin {
        r,
        t_l,
        t_k: -(f.target_dim() as f64 + 1.0) / d.degree() as f64 * t_l,
        t_ricci,
        lhs: l,
        nbar,
        error_term: term.eval(model, t_l, r, delta)?,
        raw_margin: nbar - l,
        hypothesis_violating: !f.is_nondegenerate(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmtSweep {
    pub term: ErrorTerm,
    pub rows: Vec<SmtMargin>,
    /// Smallest `κ ≥ 0` with `N̄ + κ · error ≥ LHS` on the rows where the
    /// error term is positive.
    pub kappa_fit: f64,
    /// Rows with `N̄ < LHS` and a vanishing error term, which no `κ` can
    /// absorb (small radii, where `log⁺T = log⁺Ξ = 0`).
    pub unabsorbed_rows: Vec<usize>,
    /// `N̄ + κ_fit · error − LHS`.
    pub margins: Vec<f64>,
    /// Slope of the margin against `log r` over the last decade of the grid.
    pub last_decade_slope: f64,
    /// Growth coefficients of `LHS` and `N̄` against `T_f(r, O(1))`.
    pub lhs_coefficient: f64,
    pub nbar_coefficient: f64,
}

pub fn smt_sweep(
    f: &TestMap,
    d: &DivisorSpec,
    model: &ConnectedSumModel,
    r_grid: &[f64],
    delta: f64,
    term: ErrorTerm,
    budget: &Budget,
) -> Result<SmtSweep> {
    if r_grid.len() < 2 || r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("r grid must be strictly increasing with at least two radii");
    }
    let rows: Vec<SmtMargin> = par::map_slice(r_grid, |&r| smt_margin(f, d, model, r, delta, term, budget))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut kappa: f64 = 0.0;
    let mut unabsorbed = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.raw_margin < 0.0 {
            if row.error_term <= 0.0 {
                unabsorbed.push(i);
            } else {
                kappa = kappa.max(-row.raw_margin / row.error_term);
            }
        }
    }
    let margins: Vec<f64> =
        rows.iter().map(|row| row.raw_margin + if kappa > 0.0 { kappa * row.error_term } else { 0.0 }).collect();
    let r_max = *r_grid.last().unwrap();
    let tail: Vec<usize> = (0..rows.len()).filter(|&i| r_grid[i] >= r_max / 10.0).collect();
    let last_decade_slope = if tail.len() >= 2 {
        let x: Vec<f64> = tail.iter().map(|&i| r_grid[i].ln()).collect();
        let y: Vec<f64> = tail.iter().map(|&i| margins[i]).collect();
        linear_fit(&x, &y).slope
    } else {
        f64::NAN
    };
    let deg = d.degree() as f64;
    let t1: Vec<f64> = rows.iter().map(|row| row.t_l / deg).collect();
    let coeff = |ys: Vec<f64>| if t1.len() >= 2 { linear_fit(&t1, &ys).slope } else { f64::NAN };
    let lhs_coefficient = coeff(rows.iter().map(|row| row.lhs).collect());
    let nbar_coefficient = coeff(rows.iter().map(|row| row.nbar).collect());
    Ok(SmtSweep {
        term,
        rows,
        kappa_fit: kappa,
        unabsorbed_rows: unabsorbed,
        margins,
        last_decade_slope,
        lhs_coefficient,
        nbar_coefficient,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectReport {
    /// `(r, N̄_f(r, D) / T_f(r, L))`.
    pub ratios: Vec<(f64, f64)>,
    /// `(window length, mean ratio)` over the last 2, 4, 8, … radii.
    pub windows: Vec<(usize, f64)>,
    /// Largest windowed mean.
    pub limsup: f64,
    /// `1 − limsup`, clamped to `[0, 1]`.
    pub estimate: f64,
    /// Unclamped `1 − limsup`.
    pub raw: f64,
    /// Intercept of the ratio against `1/log r` over the upper half.
    pub trend_limit: f64,
    /// `(n+1)/d`, the bound on the defect sum for `X = P^n`, `L = O(d)`.
    pub bound: f64,
    /// Components whose preimage is empty: `f` omits them.
    pub omitted_components: Vec<usize>,
}

/// Simple defect `δ̄_f(D) = 1 − limsup N̄_f(r,D)/T_f(r,L)` on a grid.
pub fn defect(f: &TestMap, d: &DivisorSpec, r_grid: &[f64], budget: &Budget) -> Result<DefectReport> {
    if r_grid.len() < 4 || r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("defect estimation needs an increasing grid of at least four radii");
    }
    if f.is_constant() {
        return Err(Error::Undecidable("T_f does not grow for a constant map".into()));
    }
    let deg = d.degree() as f64;
    let vals: Vec<(f64, f64)> = par::map_slice(r_grid, |&r| {
        let t = characteristic_t(f, r, budget)?.value * deg;
        let nb = counting_nbar(f, d, r)?.value;
        Ok((t, nb))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let (t0, t1) = (vals[0].0, vals[vals.len() - 1].0);
    if !(t1 > t0 * (1.0 + 1e-9) && t1 > 0.0) {
        return Err(Error::Undecidable("T_f does not grow on the grid".into()));
    }
    let ratios: Vec<(f64, f64)> = r_grid.iter().zip(&vals).map(|(&r, &(t, nb))| (r, nb / t)).collect();
    let mut windows = Vec::new();
    let mut len = 2;
    while len <= ratios.len() / 2 || windows.is_empty() {
        let w = &ratios[ratios.len() - len.min(ratios.len())..];
        windows.push((w.len(), w.iter().map(|p| p.1).sum::<f64>() / w.len() as f64));
        if len >= ratios.len() {
            break;
        }
        len *= 2;
    }
    let limsup = windows.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);
    let upper = &ratios[ratios.len() / 2..];
    let x: Vec<f64> = upper.iter().map(|(r, _)| 1.0 / r.ln().max(1e-3)).collect();
    let y: Vec<f64> = upper.iter().map(|p| p.1).collect();
    let trend_limit = if upper.len() >= 2 { linear_fit(&x, &y).intercept } else { f64::NAN };
    let raw = 1.0 - limsup;
    let omitted_components = (0..d.degree()).filter(|&j| preimage_is_empty(f, &d.forms()[j])).collect();
    Ok(DefectReport {
        ratios,
        windows,
        limsup,
        estimate: raw.clamp(0.0, 1.0),
        raw,
        trend_limit,
        bound: (f.target_dim() as f64 + 1.0) / deg,
        omitted_components,
    })
}
