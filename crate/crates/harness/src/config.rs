//! Experiment configuration: a TOML tree with a fixed schema. Unknown keys
//! are rejected at every level; optional sections take the defaults listed
//! on each field.

use std::fmt;
use std::path::Path;

use nevlab::heat_green::HeatBoundConstants;
use nevlab::model_geometry::{ConnectedSumModel, End, VolumeProfile};
use nevlab::nevanlinna::{Budget, DivisorSpec, ErrorTerm, P1Point, TestMap};
use nevlab::rng::{substream_seed, STREAM_JITTER};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every random stream.
    pub seed: u64,
    /// Names from the check registry, run in this order.
    pub checks: Vec<String>,
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub map: MapConfig,
    #[serde(default)]
    pub params: CheckParams,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Complex dimension.
    pub m: u32,
    /// Radius of the gluing sphere; `0` is `ℂ^m` itself.
    #[serde(default)]
    pub central_radius: f64,
    /// One entry per end. Empty means a single (or, with a positive central
    /// radius, two) Euclidean end(s) of dimension `m`.
    #[serde(default)]
    pub ends: Vec<End>,
    /// `(A, B, a, b)`; defaults to the exact flat values.
    #[serde(default)]
    pub constants: Option<HeatBoundConstants>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_spacing() -> Spacing {
    Spacing::Log
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub rel_tol: f64,
    pub qmc_points: usize,
    pub qmc_shifts: usize,
    pub force_qmc: bool,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        let b = Budget::default();
        BudgetConfig { rel_tol: b.rel_tol, qmc_points: b.qmc_points, qmc_shifts: b.qmc_shifts, force_qmc: b.force_qmc }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    /// Exit radius `r` of the Monte Carlo checks.
    pub radius: f64,
    /// `h = step_factor · r²`.
    pub step_factor: f64,
    /// Censoring time as a multiple of `r²`.
    pub horizon_factor: f64,
    /// Time `t` of the heat-kernel checks.
    pub kernel_time: f64,
    /// Absolute step `h` of the heat-kernel checks.
    pub kernel_step: f64,
    /// Radial bins of the density checks.
    pub bins: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_paths: 20_000,
            radius: 1.0,
            step_factor: 1e-4,
            horizon_factor: 50.0,
            kernel_time: 1.0,
            kernel_step: 0.01,
            bins: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapKind {
    /// `[1 : z_index]`.
    Coordinate { index: usize },
    /// `[F₀ : … : F_n]` with `F_i(z) = Σ_j a_ij z_j + b_i`.
    Affine { components: Vec<AffineComponent> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineComponent {
    /// `[re, im]` per source coordinate.
    pub a: Vec<[f64; 2]>,
    pub b: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub map: MapKind,
    /// Base point `o` as `[re, im]` pairs; defaults to `(1, 0, …, 0)`.
    pub base: Vec<[f64; 2]>,
    /// Divisor for the first main theorem.
    pub divisor: Vec<P1Point>,
    /// Three points for the second main theorem and the defect.
    pub smt_divisor: Vec<P1Point>,
}

impl Default for MapConfig {
    fn default() -> Self {
        let p = |a: f64| P1Point::Finite { re: a, im: 0.0 };
        MapConfig {
            map: MapKind::Coordinate { index: 1 },
            base: Vec::new(),
            divisor: vec![p(0.0)],
            smt_divisor: vec![p(0.0), p(-1.0), p(2.0)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckParams {
    /// `δ` values of the Ξ slope check.
    pub xi_deltas: Vec<f64>,
    /// `μ` values of the integral estimates.
    pub mus: Vec<f64>,
    pub smt_delta: f64,
    pub smt_error_term: ErrorTerm,
    pub borel_delta: f64,
}

impl Default for CheckParams {
    fn default() -> Self {
        CheckParams {
            xi_deltas: vec![0.1, 0.5],
            mus: vec![0.25, 1.0, 4.0, 16.0],
            smt_delta: 0.1,
            smt_error_term: ErrorTerm::Xi,
            borel_delta: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for the CSV files, `summary.json` and `config.toml`;
    /// relative paths are taken from the working directory.
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "nevlab-out".into() }
    }
}

/// A schema violation, located by its dotted key path.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(path: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { path: path.into(), message: message.into() })
}

fn cpx(v: &[f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let path = match e.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                }
                None => String::new(),
            };
            ConfigError { path, message }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.checks.is_empty() {
            return err("checks", "select at least one check");
        }
        for (i, name) in self.checks.iter().enumerate() {
            if crate::checks::find(name).is_none() {
                return err(&format!("checks[{i}]"), format!("unknown check {name:?}"));
            }
            if self.checks[..i].contains(name) {
                return err(&format!("checks[{i}]"), format!("check {name:?} selected twice"));
            }
        }
        self.model().map_err(|e| ConfigError { path: "model".into(), message: e.to_string() })?;
        let g = &self.grid;
        if !(g.min > 0.0 && g.min.is_finite() && g.max.is_finite()) {
            return err("grid.min", "grid bounds must be finite with min > 0");
        }
        if g.count < 2 {
            return err("grid.count", "need at least two radii");
        }
        if !(g.max > g.min) {
            return err("grid.max", "max must exceed min");
        }
        self.budget().validate().map_err(|e| ConfigError { path: "budget".into(), message: e.to_string() })?;
        let mc = &self.mc;
        if mc.n_paths == 0 {
            return err("mc.n_paths", "must be positive");
        }
        if !(mc.radius > 0.0 && mc.radius.is_finite()) {
            return err("mc.radius", "must be positive");
        }
        if !(mc.step_factor > 0.0 && mc.step_factor < 1.0) {
            return err("mc.step_factor", "must lie in (0, 1)");
        }
        if !(mc.horizon_factor > mc.step_factor && mc.horizon_factor.is_finite()) {
            return err("mc.horizon_factor", "must exceed step_factor");
        }
        if !(mc.kernel_time > 0.0 && mc.kernel_time.is_finite()) {
            return err("mc.kernel_time", "must be positive");
        }
        if !(mc.kernel_step > 0.0 && mc.kernel_step * 10.0 <= mc.kernel_time / 2.0) {
            return err("mc.kernel_step", "must be positive and at most kernel_time / 20");
        }
        if mc.bins == 0 {
            return err("mc.bins", "must be positive");
        }
        self.test_map().map_err(|e| ConfigError { path: "map".into(), message: e.to_string() })?;
        DivisorSpec::points(&self.map.divisor)
            .map_err(|e| ConfigError { path: "map.divisor".into(), message: e.to_string() })?;
        DivisorSpec::points(&self.map.smt_divisor)
            .map_err(|e| ConfigError { path: "map.smt_divisor".into(), message: e.to_string() })?;
        let p = &self.params;
        if p.xi_deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return err("params.xi_deltas", "every δ must be positive");
        }
        if p.mus.is_empty() || p.mus.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return err("params.mus", "need at least one positive μ");
        }
        if !(p.smt_delta > 0.0) {
            return err("params.smt_delta", "must be positive");
        }
        if !(p.borel_delta > 0.0) {
            return err("params.borel_delta", "must be positive");
        }
        if self.output.dir.is_empty() {
            return err("output.dir", "must not be empty");
        }
        Ok(())
    }

    pub fn model(&self) -> nevlab::Result<ConnectedSumModel> {
        let m = &self.model;
        let constants = m.constants.unwrap_or_else(|| HeatBoundConstants::euclidean(m.m));
        let ends = if m.ends.is_empty() {
            let k = if m.central_radius > 0.0 { 2 } else { 1 };
            vec![End::flat(VolumeProfile::euclidean(m.m)); k]
        } else {
            m.ends.clone()
        };
        ConnectedSumModel::new(m.m, ends, m.central_radius, constants)
    }

    /// Radii of the grid, endpoints included.
    pub fn radii(&self) -> Vec<f64> {
        let g = &self.grid;
        let n = g.count;
        (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                if i == n - 1 {
                    return g.max;
                }
                match g.spacing {
                    Spacing::Log => g.min * (g.max / g.min).powf(s),
                    Spacing::Linear => g.min + (g.max - g.min) * s,
                }
            })
            .collect()
    }

    pub fn budget(&self) -> Budget {
        let b = &self.budget;
        Budget {
            rel_tol: b.rel_tol,
            qmc_points: b.qmc_points,
            qmc_shifts: b.qmc_shifts,
            seed: substream_seed(self.seed, STREAM_JITTER),
            force_qmc: b.force_qmc,
        }
    }

    pub fn test_map(&self) -> nevlab::Result<TestMap> {
        let dim = self.model.m;
        let base: Vec<Complex64> = if self.map.base.is_empty() {
            (0..dim).map(|j| Complex64::new(if j == 0 { 1.0 } else { 0.0 }, 0.0)).collect()
        } else {
            self.map.base.iter().map(cpx).collect()
        };
        match &self.map.map {
            MapKind::Coordinate { index } => TestMap::coordinate(dim, *index, base),
            MapKind::Affine { components } => TestMap::affine(
                dim,
                components.iter().map(|c| (c.a.iter().map(cpx).collect(), cpx(&c.b))).collect(),
                base,
            ),
        }
    }
}
