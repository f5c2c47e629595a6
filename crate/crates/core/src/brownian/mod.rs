//! Brownian motion generated by `Δ/2` on `ℂ^m` and on the glued flat model:
//! Gaussian increments of variance `h` per real coordinate, exits resolved
//! by Brownian-bridge bisection, and seam crossings by the `uniform` rule.

mod checks;
mod dump;

pub use checks::{
    dynkin_check, exit_time_summary, harmonic_uniformity, heat_kernel_estimate, martingale_check, occupation_density,
    sheet_mass, DynkinReport, ExitTimeSummary, HeatKernelBin, HeatKernelEstimate, MartingalePoint, OccupationBin,
    OccupationReport, SheetMass, TestFunction, UniformityReport,
};
pub use dump::{read_path_dump, write_path_dump, DumpRecord, DUMP_MAGIC, DUMP_VERSION};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exhaustion::{boundary_radius, k_threshold};
use crate::model_geometry::{ConnectedSumModel, SheetPoint};
use crate::{par, rng};

/// What a path does when a step meets the gluing sphere.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeamRule {
    /// Stop at the hit point, pick a sheet uniformly among all `ϑ` (the
    /// current one included) and finish the step there with the normal
    /// component of the increment reversed and the tangential one kept.
    #[default]
    Uniform,
}

impl std::str::FromStr for SeamRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SeamRule::Uniform),
            other => invalid(format!("unknown seam rule {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    /// Time step `h`.
    pub step: f64,
    pub n_paths: usize,
    /// Paths still running at this time are censored.
    pub horizon: f64,
    pub seed: u64,
    #[serde(default)]
    pub seam_rule: SeamRule,
}

impl PathConfig {
    /// `h = 10⁻⁴ r²`, horizon `50 r²`.
    pub fn for_radius(r: f64, n_paths: usize, seed: u64) -> Self {
        PathConfig { step: 1e-4 * r * r, n_paths, horizon: 50.0 * r * r, seed, seam_rule: SeamRule::Uniform }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return invalid(format!("step must be positive, got {}", self.step));
        }
        if self.n_paths == 0 {
            return invalid("n_paths must be positive");
        }
        if !(self.horizon > self.step) {
            return invalid("horizon must exceed the step");
        }
        Ok(())
    }
}

/// Exit data of one path from `Δ(r)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExitRecord {
    pub exit_point: SheetPoint,
    pub exit_time: f64,
    pub censored: bool,
    /// `∫₀^{τ_r} w(X_t) dt` for each registered weight.
    pub path_integrals: Vec<f64>,
}

/// Weight `w(sheet, x)` integrated along paths.
pub type Weight<'a> = &'a (dyn Fn(usize, &[f64]) -> f64 + Sync);

/// The region a path lives in: `ϑ` sheets of `{‖x‖ ≥ R}` glued at `‖x‖ = R`,
/// killed at `‖x‖ = exit_radius[sheet − 1]` when killing is on.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub dim: usize,
    pub seam: f64,
    pub theta: usize,
    pub exit_radius: Vec<f64>,
}

impl Domain {
    /// `Δ(r)` of the model, sheet by sheet.
    pub fn exhaustion(model: &ConnectedSumModel, r: f64) -> Result<Self> {
        let thr = k_threshold(model)?;
        if r < thr {
            return invalid(format!("r = {r} is below the central-part threshold {thr}"));
        }
        if !model.is_flat() {
            return Err(Error::Unsupported("Brownian paths are simulated on flat ends only".into()));
        }
        let seam = model.central_radius();
        let exit_radius =
            (1..=model.theta()).map(|j| boundary_radius(model, j, r).map(|b| seam + b)).collect::<Result<_>>()?;
        Ok(Domain { dim: model.real_dim(), seam, theta: model.theta(), exit_radius })
    }

    /// The whole model, without killing.
    pub fn free(model: &ConnectedSumModel) -> Result<Self> {
        if !model.is_flat() {
            return Err(Error::Unsupported("Brownian paths are simulated on flat ends only".into()));
        }
        Ok(Domain {
            dim: model.real_dim(),
            seam: model.central_radius(),
            theta: model.theta(),
            exit_radius: vec![f64::INFINITY; model.theta()],
        })
    }
}

/// Radial histogram on `‖x‖`, one copy per sheet.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialBins {
    pub edges: Vec<f64>,
}

impl RadialBins {
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Self {
        RadialBins { edges: (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect() }
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, rho: f64) -> Option<usize> {
        let n = self.len();
        if rho < self.edges[0] || rho >= self.edges[n] {
            return None;
        }
        let i = self.edges.partition_point(|&e| e <= rho);
        Some((i - 1).min(n - 1))
    }
}

/// What to record along a path besides its endpoint.
#[derive(Default)]
pub struct Observers<'a> {
    pub weights: Vec<Weight<'a>>,
    pub bins: Option<&'a RadialBins>,
    /// Times at which the (stopped) position is captured.
    pub snapshots: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PathResult {
    pub sheet: usize,
    pub coords: Vec<f64>,
    pub time: f64,
    /// Killed at the outer boundary.
    pub exited: bool,
    pub censored: bool,
    pub integrals: Vec<f64>,
    /// Time spent per `(sheet − 1) · bins + bin`.
    pub occupation: Vec<f64>,
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

struct Walker<'a> {
    dom: &'a Domain,
    cfg: &'a PathConfig,
    rng: ChaCha8Rng,
    sheet: usize,
    x: Vec<f64>,
    t: f64,
    buf: Vec<f64>,
}

impl Walker<'_> {
    fn gauss(&mut self, sd: f64) {
        for v in self.buf.iter_mut() {
            *v = sd * self.rng.sample::<f64, _>(StandardNormal);
        }
    }

    /// Moves from `x` by `inc`, resolving seam crossings; `inc` is consumed.
    fn displace(&mut self, from: &[f64], sheet: usize, inc: &mut [f64], out: &mut [f64]) -> usize {
        let r2 = self.dom.seam * self.dom.seam;
        let mut sheet = sheet;
        for (o, (a, d)) in out.iter_mut().zip(from.iter().zip(inc.iter())) {
            *o = a + d;
        }
        if self.dom.seam == 0.0 {
            return sheet;
        }
        // First intersection of the segment with the seam sphere, if any.
        let dd = norm2(inc);
        if dd == 0.0 {
            return sheet;
        }
        let b = from.iter().zip(inc.iter()).map(|(a, d)| a * d).sum::<f64>();
        let c = norm2(from) - r2;
        let disc = b * b - dd * c;
        if disc < 0.0 {
            return sheet;
        }
        let s = (-b - disc.sqrt()) / dd;
        if !(0.0..=1.0).contains(&s) || b >= 0.0 {
            return sheet;
        }
        let p: Vec<f64> = from.iter().zip(inc.iter()).map(|(a, d)| a + s * d).collect();
        let pn = norm2(&p).sqrt();
        let rest: Vec<f64> = inc.iter().map(|d| (1.0 - s) * d).collect();
        let vn = rest.iter().zip(&p).map(|(v, q)| v * q).sum::<f64>() / pn;
        match self.cfg.seam_rule {
            SeamRule::Uniform => {
                if self.dom.theta > 1 {
                    sheet = 1 + self.rng.gen_range(0..self.dom.theta);
                }
            }
        }
        for ((o, q), v) in out.iter_mut().zip(&p).zip(&rest) {
            *o = q + v - 2.0 * vn * q / pn;
        }
        sheet
    }

    fn outside(&self, sheet: usize, x: &[f64]) -> bool {
        let b = self.dom.exit_radius[sheet - 1];
        b.is_finite() && norm2(x) >= b * b
    }

    fn dist(&self, sheet: usize, x: &[f64]) -> f64 {
        self.dom.exit_radius[sheet - 1] - norm2(x).sqrt()
    }

    /// Probability that a bridge of duration `dt` between two interior points
    /// at boundary distances `d0, d1` touched the boundary (half-space law).
    fn bridge_hit(&mut self, d0: f64, d1: f64, dt: f64) -> bool {
        let e = 2.0 * d0 * d1 / dt;
        if e > 40.0 {
            return false;
        }
        self.rng.gen::<f64>() < (-e).exp()
    }
}

/// One path from `start` on `start_sheet`; killed at the outer boundary of
/// `dom`, or run until `until` when the boundary is infinite.
pub fn run_path(
    dom: &Domain,
    cfg: &PathConfig,
    stream: u64,
    index: u64,
    start: &SheetPoint,
    until: f64,
    obs: &Observers,
) -> PathResult {
    let n = dom.dim;
    let mut w = Walker {
        dom,
        cfg,
        rng: rng::indexed_rng(stream, index),
        sheet: start.sheet,
        x: start.coords.clone(),
        t: 0.0,
        buf: vec![0.0; n],
    };
    if dom.seam > 0.0 && dom.theta > 1 && (norm2(&w.x).sqrt() - dom.seam).abs() <= 1e-12 * dom.seam {
        w.sheet = 1 + w.rng.gen_range(0..dom.theta);
    }
    let nb = obs.bins.map_or(0, |b| b.len());
    let mut occupation = vec![0.0; nb * dom.theta];
    let mut integrals = vec![0.0; obs.weights.len()];
    let mut snapshots = Vec::with_capacity(obs.snapshots.len());
    let mut next_snap = 0;
    let h = cfg.step;
    let mut y = vec![0.0; n];
    let mut inc = vec![0.0; n];
    let mut x0 = vec![0.0; n];

    let accumulate = |w: &Walker, dt: f64, occupation: &mut Vec<f64>, integrals: &mut Vec<f64>| {
        if let Some(b) = obs.bins {
            if let Some(i) = b.index(norm2(&w.x).sqrt()) {
                occupation[(w.sheet - 1) * nb + i] += dt;
            }
        }
        for (acc, f) in integrals.iter_mut().zip(&obs.weights) {
            *acc += dt * f(w.sheet, &w.x);
        }
    };

    loop {
        while next_snap < obs.snapshots.len() && obs.snapshots[next_snap] <= w.t {
            snapshots.push((w.sheet, w.x.clone()));
            next_snap += 1;
        }
        let limit = until.min(cfg.horizon);
        if w.t >= limit - 1e-12 * limit {
            let censored = w.t >= cfg.horizon - 1e-12 * cfg.horizon && until > cfg.horizon;
            while next_snap < obs.snapshots.len() {
                snapshots.push((w.sheet, w.x.clone()));
                next_snap += 1;
            }
            return PathResult {
                sheet: w.sheet,
                coords: w.x,
                time: w.t,
                exited: false,
                censored,
                integrals,
                occupation,
                snapshots,
            };
        }
        let dt = h.min(limit - w.t);
        w.gauss(dt.sqrt());
        inc.copy_from_slice(&w.buf);
        x0.copy_from_slice(&w.x);
        let s0 = w.sheet;
        let s1 = w.displace(&x0, s0, &mut inc, &mut y);
        let b = dom.exit_radius[s1 - 1];
        let near = (b - 5.0 * dt.sqrt()).max(0.0);
        let exit = if w.outside(s1, &y) {
            true
        } else if b.is_finite() && s1 == s0 && (norm2(&y) > near * near || norm2(&x0) > near * near) {
            let (d0, d1) = (w.dist(s0, &x0), w.dist(s1, &y));
            w.bridge_hit(d0, d1, dt)
        } else {
            false
        };
        if !exit {
            accumulate(&w, dt, &mut occupation, &mut integrals);
            w.x.copy_from_slice(&y);
            w.sheet = s1;
            w.t += dt;
            continue;
        }
        // Bridge bisection on [t, t + dt] down to sub-steps of h².
        let (mut xa, mut ta, mut sa) = (x0.clone(), w.t, s0);
        let (mut xb, mut tb, mut sb) = (y.clone(), w.t + dt, s1);
        let mut hit_inside = !w.outside(sb, &xb);
        let tol = h * h;
        while tb - ta > tol && !hit_inside {
            let half = 0.5 * (tb - ta);
            w.gauss((half / 2.0).sqrt());
            let mut mid_inc: Vec<f64> = xa.iter().zip(&xb).zip(&w.buf).map(|((a, b), g)| 0.5 * (b - a) + g).collect();
            if sa != sb {
                // The bridge crossed the seam; bisect on the starting sheet.
                mid_inc.iter_mut().zip(&xa).zip(&xb).for_each(|((m, a), b)| *m = 0.5 * (b - a));
            }
            let mut xm = vec![0.0; n];
            let sm = w.displace(&xa, sa, &mut mid_inc, &mut xm);
            if w.outside(sm, &xm) {
                xb = xm;
                tb = ta + half;
                sb = sm;
            } else {
                let (da, dm) = (w.dist(sa, &xa), w.dist(sm, &xm));
                if sa == sm && w.bridge_hit(da, dm, half) {
                    xb = xm;
                    tb = ta + half;
                    sb = sm;
                    hit_inside = true;
                } else {
                    xa = xm;
                    ta += half;
                    sa = sm;
                }
            }
        }
        let tau = if hit_inside { 0.5 * (ta + tb) } else { tb };
        w.x.copy_from_slice(&xa);
        w.sheet = sa;
        accumulate(&w, tau - w.t, &mut occupation, &mut integrals);
        let b = dom.exit_radius[sb - 1];
        let nb2 = norm2(&xb).sqrt();
        let exit_x: Vec<f64> = xb.iter().map(|v| v * b / nb2).collect();
        w.t = tau;
        while next_snap < obs.snapshots.len() {
            snapshots.push((sb, exit_x.clone()));
            next_snap += 1;
        }
        return PathResult {
            sheet: sb,
            coords: exit_x,
            time: tau,
            exited: true,
            censored: false,
            integrals,
            occupation,
            snapshots,
        };
    }
}

/// Starting point of every path: `o`.
fn start_point(model: &ConnectedSumModel) -> SheetPoint {
    model.o()
}

/// `n_paths` independent exits from `Δ(r)` started at `o`.
pub fn simulate_exit_with(
    model: &ConnectedSumModel,
    r: f64,
    cfg: &PathConfig,
    obs: &Observers,
) -> Result<Vec<PathResult>> {
    cfg.validate()?;
    let dom = Domain::exhaustion(model, r)?;
    let stream = rng::substream_seed(cfg.seed, rng::STREAM_PATHS);
    let start = start_point(model);
    Ok(par::map_indexed(cfg.n_paths, |i| run_path(&dom, cfg, stream, i as u64, &start, f64::INFINITY, obs)))
}

/// Exit records with the registered path integrals.
pub fn simulate_exit(
    model: &ConnectedSumModel,
    r: f64,
    cfg: &PathConfig,
    weights: &[Weight],
) -> Result<Vec<ExitRecord>> {
    let obs = Observers { weights: weights.to_vec(), ..Default::default() };
    Ok(simulate_exit_with(model, r, cfg, &obs)?
        .into_iter()
        .map(|p| ExitRecord {
            exit_point: SheetPoint::new(p.sheet, p.coords),
            exit_time: p.time,
            censored: p.censored,
            path_integrals: p.integrals,
        })
        .collect())
}

/// Positions at time `t` of free paths started at `o`.
pub fn simulate_free(model: &ConnectedSumModel, t: f64, cfg: &PathConfig, obs: &Observers) -> Result<Vec<PathResult>> {
    cfg.validate()?;
    if !(t > 0.0) {
        return invalid("free paths need a positive time");
    }
    let dom = Domain::free(model)?;
    let stream = rng::substream_seed(cfg.seed, rng::STREAM_PATHS);
    let start = start_point(model);
    let mut cfg = *cfg;
    cfg.horizon = cfg.horizon.max(t);
    Ok(par::map_indexed(cfg.n_paths, |i| run_path(&dom, &cfg, stream, i as u64, &start, t, obs)))
}
