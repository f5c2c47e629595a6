//! The check registry. Every check turns a resolved configuration into one
//! table with a fixed column schema plus a list of hard assertions.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nevlab::brownian::{
    dynkin_check, exit_time_summary, harmonic_uniformity, heat_kernel_estimate, occupation_density, sheet_mass,
    simulate_exit, PathConfig, RadialBins, TestFunction,
};
use nevlab::exhaustion::{boundary_radius, end_green, g_r, g_r_euclidean, g_r_on_inner_sphere, green, level};
use nevlab::heat_green::{
    ahlfors_shimizu_weight, est1_check, est2_check, fit_full_bound_constants, green_euclidean, hk_full_bounds,
    PairSample,
};
use nevlab::model_geometry::{ConnectedSumModel, SheetPoint, VolumeProfile};
use nevlab::nevanlinna::{
    borel_exceptional, defect, e_growth, fmt_residual, jy_limit, smt_sweep, xi, xi_asymptotics, Budget, DivisorSpec,
    TestMap,
};
use nevlab::rng::{substream_seed, STREAM_PATHS};
use nevlab::special::factorial;
use nevlab::{Error, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Version of every CSV column schema; written as the first column.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    B(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.into())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-4, 1e15)`.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::F(v) => format_f64(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::B(b) => b.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Passes when `value ≤ threshold`.
    AtMost,
    /// Passes when `value ≥ threshold`.
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub threshold: f64,
    pub passed: bool,
    /// Distance to the threshold, positive on the passing side.
    pub slack: f64,
}

impl Assertion {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Assertion {
            name: name.into(),
            value,
            bound: Bound::AtMost,
            threshold,
            passed: value <= threshold,
            slack: threshold - value,
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Assertion {
            name: name.into(),
            value,
            bound: Bound::AtLeast,
            threshold,
            passed: value >= threshold,
            slack: value - threshold,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub rows: Vec<Vec<Cell>>,
    pub assertions: Vec<Assertion>,
    /// Reported quantities that are not asserted.
    pub metrics: BTreeMap<String, f64>,
}

impl Outcome {
    fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    fn assert(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    fn metric(&mut self, name: &str, v: f64) {
        self.metrics.insert(name.into(), v);
    }
}

/// Everything a check may read.
pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub model: ConnectedSumModel,
    pub radii: Vec<f64>,
    pub budget: Budget,
}

impl<'a> Context<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Result<Self> {
        Ok(Context { config, model: config.model()?, radii: config.radii(), budget: config.budget() })
    }

    /// Path settings for exits from `Δ(mc.radius)`; each check draws from
    /// its own sub-stream of `mc/paths`.
    fn exit_paths(&self, check: &str) -> PathConfig {
        let mc = &self.config.mc;
        let r2 = mc.radius * mc.radius;
        PathConfig {
            step: mc.step_factor * r2,
            n_paths: mc.n_paths,
            horizon: mc.horizon_factor * r2,
            seed: self.path_seed(check),
            ..PathConfig::for_radius(mc.radius, mc.n_paths, 0)
        }
    }

    /// Path settings for free paths up to `2t`.
    fn free_paths(&self, check: &str, t: f64) -> PathConfig {
        let mc = &self.config.mc;
        PathConfig {
            step: mc.kernel_step,
            n_paths: mc.n_paths,
            horizon: 4.0 * t,
            seed: self.path_seed(check),
            ..PathConfig::for_radius(1.0, mc.n_paths, 0)
        }
    }

    fn path_seed(&self, check: &str) -> u64 {
        substream_seed(substream_seed(self.config.seed, STREAM_PATHS), check)
    }

    fn test_map(&self) -> Result<TestMap> {
        self.config.test_map()
    }

    fn flat_space(&self, check: &str) -> Result<u32> {
        if !self.model.is_flat_space() {
            return Err(Error::Unsupported(format!("{check} runs on the flat model ℂ^m only")));
        }
        Ok(self.model.complex_dim())
    }

    fn first_profile(&self) -> VolumeProfile {
        self.model.ends()[0].profile.clone()
    }
}

pub type Runner = fn(&Context) -> Result<Outcome>;

pub struct Check {
    pub name: &'static str,
    /// The statement being verified.
    pub anchor: &'static str,
    pub description: &'static str,
    pub columns: &'static [&'static str],
    pub monte_carlo: bool,
    pub run: Runner,
}

pub fn registry() -> &'static [Check] {
    REGISTRY
}

pub fn find(name: &str) -> Option<&'static Check> {
    REGISTRY.iter().find(|c| c.name == name)
}

static REGISTRY: &[Check] = &[
    Check {
        name: "green_identity",
        anchor: "g_r(o,x) = G(o,x) - 2A ∫_0^∞ e^{-r²/(at)} / V_max(√t) dt on Δ(r)",
        description: "At x on ∂Δ(r/2): G(o,x) and level(r) from separate tail quadratures, g_r = G - level \
                      against a single quadrature of the difference (and the closed form on ℂ^m).",
        columns: &["r", "level", "G", "g_r", "residual"],
        monte_carlo: false,
        run: green_identity,
    },
    Check {
        name: "green_closed_form",
        anchor: "G(o,x) = ‖x‖^{2-2m} / ((m-1) ω_{2m-1}) on ℂ^m",
        description: "2A times the tail integral against the classical Green function, with ρ on the grid.",
        columns: &["rho", "value", "closed_form", "rel_error"],
        monte_carlo: false,
        run: green_closed_form,
    },
    Check {
        name: "ahlfors_shimizu",
        anchor: "T_f(r, L) has the Ahlfors-Shimizu's form, which is just the Ahlfors-Shimizu's characteristic function",
        description: "The weight (4Aπ^m/((m-1)! a)) ∫ e^{-t²/(as)} / V_max(√s) ds/s against t^{-2m}, t on the grid.",
        columns: &["t", "weight", "expected", "rel_error"],
        monte_carlo: false,
        run: ahlfors_shimizu,
    },
    Check {
        name: "boundary_identification",
        anchor: "Δ(r) = B(r) and g_r(o,x) = (‖x‖^{2-2m} - r^{2-2m}) / ((m-1) ω_{2m-1}) on ℂ^m",
        description: "Root of G_j(ρ) = level(r) on every end; equals r on ℂ^m.",
        columns: &["r", "end", "root", "level_residual", "closed_form_error"],
        monte_carlo: false,
        run: boundary_identification,
    },
    Check {
        name: "fmt_residual",
        anchor: "First Main Theorem: T_f(r, L) + log 1/‖s_D∘f(o)‖ = m_f(r, D) + N_f(r, D)",
        description: "Residual of the first main theorem for the configured test map and divisor.",
        columns: &["r", "T", "m", "N", "boundary", "residual", "error_budget"],
        monte_carlo: false,
        run: fmt_residual_check,
    },
    Check {
        name: "xi_closed_form",
        anchor: "Ξ(r,δ,κ) = (|κ| + r^{-1}) ∫ e^{-r²/(bt)}/V_min(√t) dt / (r ∫ e^{-r²/(at)}/V_max(√t) dt/t)^{1+δ}",
        description: "Ξ(r,0,0) = 1/(4(m-1)) and the log-slope (2m-1)δ of Ξ(r,δ,0) on ℂ^m.",
        columns: &["r", "delta", "xi", "expected", "rel_error"],
        monte_carlo: false,
        run: xi_closed_form,
    },
    Check {
        name: "e_growth",
        anchor: "E(r) = V(r) r^{-2} ∫_r^∞ t dt / V(t), with lim log⁺E(r) / log r = 0",
        description: "E(r) of the first end against 1/(α-2) for power laws, plus the fitted limit of log⁺E / log r.",
        columns: &["r", "E", "expected", "rel_error"],
        monte_carlo: false,
        run: e_growth_check,
    },
    Check {
        name: "est1",
        anchor: "there exists a constant c_μ>0 with ∫_0^∞ e^{-r²/(μt)} / V(√t) dt/t ≥ c_μ / V(r)",
        description: "Slack ratios of the lower integral estimate for the first end, every μ and r.",
        columns: &["mu", "r", "lhs", "rhs", "slack"],
        monte_carlo: false,
        run: est1,
    },
    Check {
        name: "est2",
        anchor: "there exists a constant C_μ>0 with ∫_0^∞ e^{-r²/(μt)} / V(√t) dt ≤ C_μ r²/V(r) + 2 ∫_r^∞ t dt / V(t)",
        description: "Slack ratios of the upper integral estimate for the first end, every μ and r > 1.",
        columns: &["mu", "r", "lhs", "rhs", "slack"],
        monte_carlo: false,
        run: est2,
    },
    Check {
        name: "exit_time",
        anchor: "E_o[τ_r] = r²/n and π_r is uniform on ∂B(r) ⊂ ℝ^n",
        description: "Mean exit time from Δ(mc.radius) and a chi-square test of exit-point uniformity.",
        columns: &["r", "n", "mean", "se", "expected", "rel_error", "chi_square", "dof", "p_value"],
        monte_carlo: true,
        run: exit_time,
    },
    Check {
        name: "occupation_density",
        anchor: "g_r(o,·) is the occupation density of Brownian motion killed on ∂Δ(r)",
        description: "Radial occupation density of killed paths against the bin averages of g_r.",
        columns: &["lo", "hi", "estimate", "se", "exact"],
        monte_carlo: true,
        run: occupation,
    },
    Check {
        name: "dynkin",
        anchor: "Jensen-Dynkin Formula: ∫_{∂Δ(r)} φ dπ_r - φ(o) = ½ ∫_{Δ(r)} g_r(o,x) Δφ(x) dv(x)",
        description: "Both sides for x₁, x₁² - x₂², ‖x‖² and log‖x - r e₁/2‖.",
        columns: &["function", "lhs", "se", "rhs", "residual", "z"],
        monte_carlo: true,
        run: dynkin,
    },
    Check {
        name: "sheet_symmetry",
        anchor: "isometric ends: Brownian motion from the seam splits evenly between the sheets",
        description: "Exit mass per sheet and heat-kernel bins of every sheet against sheet 1.",
        columns: &["quantity", "index", "value", "reference", "se", "z"],
        monte_carlo: true,
        run: sheet_symmetry,
    },
    Check {
        name: "hk_bounds_fit",
        anchor: "p(t,x,y) ≍ (H(x)H(y)/V_0 + H(x)/V_{i_y} + H(y)/V_{i_x}) e^{-d_+²/(ct)} + e^{-d_∅²/(ct)} / √(V_{i_x} V_{i_y})",
        description: "Three-term bound constants fitted to Monte Carlo kernel bins at t/2, t, 2t; every bin's \
                      3σ interval must meet the envelope.",
        columns: &["t", "sheet", "lo", "hi", "estimate", "se", "lower", "upper", "contained"],
        monte_carlo: true,
        run: hk_bounds_fit,
    },
    Check {
        name: "borel",
        anchor: "Borel's Lemma: u'(r) ≤ u(r)^{1+δ} outside a set E_δ of finite Lebesgue measure",
        description: "Sampled exceptional sets of u(r) = r (the interval (0,1) for every δ) and u(r) = e^r (empty at δ = 1).",
        columns: &["function", "delta", "measure", "bound", "interval_lo", "interval_hi"],
        monte_carlo: false,
        run: borel,
    },
    Check {
        name: "defect",
        anchor: "defect relation: Σ_j δ̄_f(D_j) ≤ (n+1)/d, from the second main theorem",
        description: "Simple defect of the configured map on the three-point divisor, and the second-main-theorem \
                      margin over the grid.",
        columns: &["r", "T_L", "Nbar", "ratio", "lhs", "error_term", "margin"],
        monte_carlo: false,
        run: defect_check,
    },
];

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn max_of(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(f64::NEG_INFINITY, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

fn green_identity(ctx: &Context) -> Result<Outcome> {
    let model = &ctx.model;
    let mut out = Outcome::default();
    let mut worst: f64 = 0.0;
    for &r in &ctx.radii {
        let t = r / 2.0;
        let rho = boundary_radius(model, 1, t)?;
        let mut coords = vec![0.0; model.real_dim()];
        coords[0] = model.central_radius() + rho;
        let x = SheetPoint::new(1, coords);
        let l = level(model, r)?;
        let g = green(model, &x)?;
        let gr = g_r(model, &x, r)?;
        let reference = g_r_on_inner_sphere(model, t, r)?;
        let mut res = rel(gr, reference);
        if model.is_flat_space() {
            res = res.max(rel(gr, g_r_euclidean(model.complex_dim(), rho, r)?));
        }
        worst = worst.max(res);
        out.push(vec![r.into(), l.into(), g.into(), gr.into(), res.into()]);
    }
    out.assert(Assertion::at_most("max_residual", worst, 1e-8));
    Ok(out)
}

fn green_closed_form(ctx: &Context) -> Result<Outcome> {
    let m = ctx.flat_space("green_closed_form")?;
    let mut out = Outcome::default();
    let mut worst: f64 = 0.0;
    for &rho in &ctx.radii {
        let v = end_green(&ctx.model, 1, rho)?;
        let c = green_euclidean(rho, m)?;
        let e = rel(v, c);
        worst = worst.max(e);
        out.push(vec![rho.into(), v.into(), c.into(), e.into()]);
    }
    out.assert(Assertion::at_most("max_rel_error", worst, 1e-8));
    Ok(out)
}

fn ahlfors_shimizu(ctx: &Context) -> Result<Outcome> {
    let m = ctx.flat_space("ahlfors_shimizu")?;
    let mut out = Outcome::default();
    let mut worst: f64 = 0.0;
    let model = &ctx.model;
    for &t in &ctx.radii {
        let w = ahlfors_shimizu_weight(&model.v_max(), model.constants(), m, t)?;
        let want = t.powi(-2 * m as i32);
        let e = rel(w, want);
        worst = worst.max(e);
        out.push(vec![t.into(), w.into(), want.into(), e.into()]);
    }
    out.assert(Assertion::at_most("max_rel_error", worst, 1e-8));
    Ok(out)
}

fn boundary_identification(ctx: &Context) -> Result<Outcome> {
    let model = &ctx.model;
    let flat = model.is_flat_space();
    let mut out = Outcome::default();
    let (mut worst_level, mut worst_closed): (f64, f64) = (0.0, 0.0);
    for &r in &ctx.radii {
        let l = level(model, r)?;
        for j in 1..=model.theta() {
            let root = boundary_radius(model, j, r)?;
            let lr = rel(end_green(model, j, root)?, l);
            let ce = if flat { rel(root, r) } else { f64::NAN };
            worst_level = worst_level.max(lr);
            if flat {
                worst_closed = worst_closed.max(ce);
            }
            out.push(vec![r.into(), j.into(), root.into(), lr.into(), ce.into()]);
        }
    }
    out.assert(Assertion::at_most("max_level_residual", worst_level, 1e-9));
    if flat {
        out.assert(Assertion::at_most("max_closed_form_error", worst_closed, 1e-9));
    }
    Ok(out)
}

fn fmt_residual_check(ctx: &Context) -> Result<Outcome> {
    let f = ctx.test_map()?;
    let d = DivisorSpec::points(&ctx.config.map.divisor)?;
    let mut out = Outcome::default();
    let mut worst: f64 = 0.0;
    for &r in &ctx.radii {
        let rep = fmt_residual(&f, &d, r, &ctx.budget)?;
        worst = worst.max(rep.residual);
        out.push(vec![
            r.into(),
            rep.t.into(),
            rep.m.into(),
            rep.n.into(),
            rep.boundary.into(),
            rep.residual.into(),
            rep.error_budget.into(),
        ]);
    }
    out.assert(Assertion::at_most("max_residual", worst, 1e-2));
    Ok(out)
}

/// `Ξ(r, δ, 0)` on `ℂ^m`, where both tails are Gamma integrals.
pub fn xi_flat(m: u32, r: f64, delta: f64) -> f64 {
    let mf = factorial(m);
    let den = r * mf * 4f64.powi(m as i32) * factorial(m - 1) / (PI.powi(m as i32) * r.powi(2 * m as i32));
    den.powf(-delta) / (4.0 * (m as f64 - 1.0))
}

fn xi_closed_form(ctx: &Context) -> Result<Outcome> {
    let m = ctx.flat_space("xi_closed_form")?;
    let mut out = Outcome::default();
    let mut at_zero: f64 = 0.0;
    let mut deltas = vec![0.0];
    deltas.extend(&ctx.config.params.xi_deltas);
    for &delta in &deltas {
        for &r in &ctx.radii {
            let v = xi(&ctx.model, r, delta)?;
            let want = xi_flat(m, r, delta);
            if delta == 0.0 {
                at_zero = at_zero.max((v - want).abs());
            }
            out.push(vec![r.into(), delta.into(), v.into(), want.into(), rel(v, want).into()]);
        }
    }
    out.assert(Assertion::at_most("max_abs_error_delta0", at_zero, 1e-8));
    for &delta in &ctx.config.params.xi_deltas {
        let rep = xi_asymptotics(&ctx.model, delta, &ctx.radii)?;
        let expected = (2.0 * m as f64 - 1.0) * delta;
        out.metric(&format!("log_slope_delta_{delta}"), rep.log_slope);
        out.assert(Assertion::at_most(&format!("slope_error_delta_{delta}"), (rep.log_slope - expected).abs(), 0.02));
    }
    Ok(out)
}

fn power_exponent(p: &VolumeProfile) -> Option<f64> {
    match *p {
        VolumeProfile::Euclidean { m } => Some(2.0 * m as f64),
        VolumeProfile::Power { alpha, .. } => Some(alpha),
        _ => None,
    }
}

fn e_growth_check(ctx: &Context) -> Result<Outcome> {
    let p = ctx.first_profile();
    let expected = power_exponent(&p).map(|a| 1.0 / (a - 2.0));
    let mut out = Outcome::default();
    let mut worst: f64 = 0.0;
    for &r in &ctx.radii {
        let e = e_growth(&p, r)?;
        let (want, err) = match expected {
            Some(w) => (w, rel(e, w)),
            None => (f64::NAN, f64::NAN),
        };
        if expected.is_some() {
            worst = worst.max(err);
        }
        out.push(vec![r.into(), e.into(), want.into(), err.into()]);
    }
    if expected.is_some() {
        out.assert(Assertion::at_most("max_rel_error", worst, 1e-6));
    }
    let jy = jy_limit(&p, &ctx.radii)?;
    out.metric("jy_limit", jy.limit);
    out.metric("jy_fit_error", jy.fit_error);
    out.assert(Assertion::at_most("jy_abs_limit", jy.limit.abs(), 0.01));
    Ok(out)
}

fn estimates(ctx: &Context, second: bool) -> Result<Outcome> {
    let p = ctx.first_profile();
    let m = ctx.model.complex_dim();
    let radii: Vec<f64> =
        if second { ctx.radii.iter().cloned().filter(|&r| r > 1.0).collect() } else { ctx.radii.clone() };
    if radii.is_empty() {
        return Err(Error::InvalidArgument("the upper estimate needs grid radii above 1".into()));
    }
    let mut out = Outcome::default();
    let mut violations = 0usize;
    let mut min_slack = f64::INFINITY;
    for &mu in &ctx.config.params.mus {
        let rep = if second { est2_check(&p, m, mu, &radii)? } else { est1_check(&p, m, mu, &radii)? };
        violations += rep.violations;
        min_slack = min_slack.min(rep.min_slack);
        out.metric(&format!("constant_mu_{mu}"), rep.constant);
        for row in &rep.rows {
            out.push(vec![mu.into(), row.r.into(), row.lhs.into(), row.rhs.into(), row.slack.into()]);
        }
    }
    out.metric("min_slack", min_slack);
    out.assert(Assertion::at_most("violations", violations as f64, 0.0));
    Ok(out)
}

fn est1(ctx: &Context) -> Result<Outcome> {
    estimates(ctx, false)
}

fn est2(ctx: &Context) -> Result<Outcome> {
    estimates(ctx, true)
}

fn exit_time(ctx: &Context) -> Result<Outcome> {
    let m = ctx.flat_space("exit_time")?;
    let r = ctx.config.mc.radius;
    let cfg = ctx.exit_paths("exit_time");
    let recs = simulate_exit(&ctx.model, r, &cfg, &[])?;
    let s = exit_time_summary(&recs);
    let expected = r * r / (2.0 * m as f64);
    let e = rel(s.mean, expected);
    let u = harmonic_uniformity(&ctx.model, &recs, 4, 5)?;
    let mut out = Outcome::default();
    out.push(vec![
        r.into(),
        s.n.into(),
        s.mean.into(),
        s.se.into(),
        expected.into(),
        e.into(),
        u.chi_square.into(),
        u.dof.into(),
        u.p_value.into(),
    ]);
    out.metric("censored", s.censored as f64);
    out.assert(Assertion::at_most("mean_rel_error", e, 0.02));
    out.assert(Assertion::at_least("uniformity_p_value", u.p_value, 0.01));
    Ok(out)
}

fn occupation(ctx: &Context) -> Result<Outcome> {
    ctx.flat_space("occupation_density")?;
    let r = ctx.config.mc.radius;
    let bins = RadialBins::uniform(0.0, r, ctx.config.mc.bins);
    let rep = occupation_density(&ctx.model, r, &bins, &ctx.exit_paths("occupation_density"))?;
    let mut out = Outcome::default();
    for b in &rep.bins {
        out.push(vec![b.lo.into(), b.hi.into(), b.estimate.into(), b.se.into(), b.exact.into()]);
    }
    out.metric("empty_bins", rep.empty_bins.len() as f64);
    out.assert(Assertion::at_most("l1_error", rep.l1_error, 0.05));
    Ok(out)
}

/// Residuals are compared with `4σ` plus a floor for the exit-location
/// resolution of the bridge bisection.
const DYNKIN_SIGMAS: f64 = 4.0;
const DYNKIN_FLOOR: f64 = 1e-8;

fn dynkin(ctx: &Context) -> Result<Outcome> {
    ctx.flat_space("dynkin")?;
    let r = ctx.config.mc.radius;
    let n = ctx.model.real_dim();
    let mut shift = vec![0.0; n];
    shift[0] = -r / 2.0;
    let functions = [
        ("coordinate", TestFunction::Coordinate { index: 1 }),
        ("quadratic_harmonic", TestFunction::QuadraticHarmonic),
        ("norm_squared", TestFunction::NormSquared),
        ("log_norm_shifted", TestFunction::LogNorm { shift }),
    ];
    let cfg = ctx.exit_paths("dynkin");
    let mut out = Outcome::default();
    let mut worst = f64::NEG_INFINITY;
    for (name, phi) in &functions {
        let rep = dynkin_check(&ctx.model, r, phi, &cfg)?;
        let z = if rep.se > 0.0 { rep.residual / rep.se } else { 0.0 };
        let excess = rep.residual - DYNKIN_SIGMAS * rep.se - DYNKIN_FLOOR * (1.0 + rep.rhs.abs());
        worst = worst.max(excess);
        out.push(vec![(*name).into(), rep.lhs.into(), rep.se.into(), rep.rhs.into(), rep.residual.into(), z.into()]);
    }
    out.assert(Assertion::at_most("max_excess_over_4sigma", worst, 0.0));
    Ok(out)
}

fn kernel_bins(model: &ConnectedSumModel, t: f64, count: usize) -> RadialBins {
    let r0 = model.central_radius();
    RadialBins::uniform(r0, r0 + 5.0 * t.sqrt(), count)
}

fn sheet_symmetry(ctx: &Context) -> Result<Outcome> {
    let model = &ctx.model;
    let theta = model.theta();
    if theta < 2 {
        return Err(Error::Unsupported("sheet symmetry needs at least two ends".into()));
    }
    if !model.is_homogeneous() {
        return Err(Error::Unsupported("sheet symmetry needs equal ends".into()));
    }
    let mut out = Outcome::default();
    let r = ctx.config.mc.radius;
    let recs = simulate_exit(model, r, &ctx.exit_paths("sheet_symmetry/exit"), &[])?;
    let mass = sheet_mass(&recs, theta);
    let even = 1.0 / theta as f64;
    let mut worst_mass: f64 = 0.0;
    for (s, (&f, &se)) in mass.fractions.iter().zip(&mass.se).enumerate() {
        let z = (f - even).abs() / se;
        worst_mass = worst_mass.max(z);
        out.push(vec!["exit_mass".into(), (s + 1).into(), f.into(), even.into(), se.into(), z.into()]);
    }
    let t = ctx.config.mc.kernel_time;
    let bins = kernel_bins(model, t, ctx.config.mc.bins);
    let est = heat_kernel_estimate(model, t, &bins, &ctx.free_paths("sheet_symmetry/kernel", t))?;
    let nb = bins.len();
    let mut worst_bin: f64 = 0.0;
    for s in 1..theta {
        for i in 0..nb {
            let (a, b) = (&est.bins[i], &est.bins[s * nb + i]);
            let se = (a.se * a.se + b.se * b.se).sqrt();
            let diff = (b.estimate - a.estimate).abs();
            let z = if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst_bin = worst_bin.max(z);
            out.push(vec![
                format!("kernel_bin_sheet_{}", s + 1).as_str().into(),
                i.into(),
                b.estimate.into(),
                a.estimate.into(),
                se.into(),
                z.into(),
            ]);
        }
    }
    out.assert(Assertion::at_most("max_exit_mass_z", worst_mass, 3.0));
    out.assert(Assertion::at_most("max_kernel_bin_z", worst_bin, 3.0));
    Ok(out)
}

/// A representative point of the shell at radius `rho` on `sheet`,
/// orthogonal to the direction of `o`.
fn shell_point(model: &ConnectedSumModel, sheet: usize, rho: f64) -> SheetPoint {
    let mut c = vec![0.0; model.real_dim()];
    c[1] = rho;
    SheetPoint::new(sheet, c)
}

fn hk_bounds_fit(ctx: &Context) -> Result<Outcome> {
    let model = &ctx.model;
    let t0 = ctx.config.mc.kernel_time;
    let mut bins_all = Vec::new();
    for (k, &t) in [0.5 * t0, t0, 2.0 * t0].iter().enumerate() {
        let cfg = ctx.free_paths(&format!("hk_bounds_fit/{k}"), t);
        let est = heat_kernel_estimate(model, t, &kernel_bins(model, t, ctx.config.mc.bins), &cfg)?;
        bins_all.extend(est.bins.into_iter().map(|b| (t, b)));
    }
    let o = model.o();
    let samples: Vec<PairSample> = bins_all
        .iter()
        .filter(|(_, b)| b.estimate - 3.0 * b.se > 0.0)
        .map(|(t, b)| PairSample {
            t: *t,
            x: o.clone(),
            y: shell_point(model, b.sheet, 0.5 * (b.lo + b.hi)),
            lo: b.estimate - 3.0 * b.se,
            hi: b.estimate + 3.0 * b.se,
        })
        .collect();
    let fit = fit_full_bound_constants(model, &samples)?;
    let c = fit.constants;
    let mut out = Outcome::default();
    out.metric("C1", c.big_c1);
    out.metric("c1", c.c1);
    out.metric("C2", c.big_c2);
    out.metric("c2", c.c2);
    out.metric("fitted_bins", samples.len() as f64);
    let mut inside = 0usize;
    for (t, b) in &bins_all {
        let y = shell_point(model, b.sheet, 0.5 * (b.lo + b.hi));
        let env = hk_full_bounds(model, &c, *t, &o, &y)?;
        let (lo, hi) = (b.estimate - 3.0 * b.se, b.estimate + 3.0 * b.se);
        let tol = 1e-12 * env.upper;
        let ok = env.lower <= hi + tol && env.upper + tol >= lo;
        inside += ok as usize;
        out.push(vec![
            (*t).into(),
            b.sheet.into(),
            b.lo.into(),
            b.hi.into(),
            b.estimate.into(),
            b.se.into(),
            env.lower.into(),
            env.upper.into(),
            ok.into(),
        ]);
    }
    let frac = inside as f64 / bins_all.len() as f64;
    out.assert(Assertion::at_least("contained_fraction", frac, 1.0));
    Ok(out)
}

fn borel(ctx: &Context) -> Result<Outcome> {
    let delta = ctx.config.params.borel_delta;
    let mut out = Outcome::default();
    let n = 2000;
    let r: Vec<f64> = (0..n).map(|i| 1e-3 * 1e4f64.powf(i as f64 / (n - 1) as f64)).collect();
    let lin = borel_exceptional(&r, &r, delta)?;
    let rows = |out: &mut Outcome, name: &str, rep: &nevlab::nevanlinna::BorelReport| {
        if rep.intervals.is_empty() {
            out.push(vec![
                name.into(),
                delta.into(),
                rep.measure.into(),
                rep.bound.into(),
                f64::NAN.into(),
                f64::NAN.into(),
            ]);
        }
        for &(a, b) in &rep.intervals {
            out.push(vec![name.into(), delta.into(), rep.measure.into(), rep.bound.into(), a.into(), b.into()]);
        }
    };
    rows(&mut out, "linear", &lin);
    let lo = lin.intervals.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = max_of(lin.intervals.iter().map(|p| p.1));
    out.assert(Assertion::at_most("linear_measure", lin.measure, 1.0));
    out.assert(Assertion::at_least("linear_interval_start", lo, f64::MIN_POSITIVE));
    out.assert(Assertion::at_most("linear_interval_end", hi, 1.0));
    let r: Vec<f64> = (0..=1000).map(|i| 0.01 * i as f64).collect();
    let u: Vec<f64> = r.iter().map(|x| x.exp()).collect();
    let ex = borel_exceptional(&r, &u, 1.0)?;
    rows(&mut out, "exponential", &ex);
    out.assert(Assertion::at_most("exponential_measure", ex.measure, 0.0));
    Ok(out)
}

fn defect_check(ctx: &Context) -> Result<Outcome> {
    ctx.flat_space("defect")?;
    let f = ctx.test_map()?;
    let d = DivisorSpec::points(&ctx.config.map.smt_divisor)?;
    let p = &ctx.config.params;
    let rep = defect(&f, &d, &ctx.radii, &ctx.budget)?;
    let sweep = smt_sweep(&f, &d, &ctx.model, &ctx.radii, p.smt_delta, p.smt_error_term, &ctx.budget)?;
    let mut out = Outcome::default();
    for ((row, &(_, ratio)), &margin) in sweep.rows.iter().zip(&rep.ratios).zip(&sweep.margins) {
        out.push(vec![
            row.r.into(),
            row.t_l.into(),
            row.nbar.into(),
            ratio.into(),
            row.lhs.into(),
            row.error_term.into(),
            margin.into(),
        ]);
    }
    out.metric("defect_bound", rep.bound);
    out.metric("defect_raw", rep.raw);
    out.metric("trend_limit", rep.trend_limit);
    out.metric("kappa_fit", sweep.kappa_fit);
    out.metric("smt_unabsorbed_rows", sweep.unabsorbed_rows.len() as f64);
    out.metric("omitted_components", rep.omitted_components.len() as f64);
    out.assert(Assertion::at_most("defect_estimate", rep.estimate, 0.05));
    out.assert(Assertion::at_least("smt_last_decade_slope", sweep.last_decade_slope, 0.0));
    Ok(out)
}
