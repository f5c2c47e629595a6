use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::quad::{self, Tolerance};
use crate::special::{ln_factorial, sphere_area};

/// Radial volume-growth law `V(r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VolumeProfile {
    /// `V(r) = π^m r^{2m} / m!`.
    Euclidean {
        m: u32,
    },
    /// `V(r) = c r^α`.
    Power {
        c: f64,
        alpha: f64,
    },
    /// `V(r) = c r^α log^β(e + r)`.
    PowerLog {
        c: f64,
        alpha: f64,
        beta: f64,
    },
    /// Ball volume of the simply connected space form of curvature `K < 0`
    /// and real dimension `n`.
    Spaceform {
        curvature: f64,
        n: u32,
    },
    Tabulated(TabulatedProfile),
}

/// Must be implemented by anything that can stand in for `V` inside the
/// heat-kernel integrals.
pub trait VolumeLaw: Sync {
    fn ln_volume(&self, r: f64) -> f64;

    fn volume_at(&self, r: f64) -> f64 {
        self.ln_volume(r).exp()
    }

    /// True iff `∫₁^∞ dt / V(√t) < ∞`.
    fn non_parabolic(&self) -> Result<bool>;

    /// Radii where `ln V` fails to be smooth.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl VolumeProfile {
    pub fn euclidean(m: u32) -> Self {
        VolumeProfile::Euclidean { m }
    }

    pub fn power(c: f64, alpha: f64) -> Self {
        VolumeProfile::Power { c, alpha }
    }

    pub fn spaceform(curvature: f64, n: u32) -> Self {
        VolumeProfile::Spaceform { curvature, n }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            VolumeProfile::Euclidean { m: 0 } => invalid("euclidean profile needs m ≥ 1"),
            VolumeProfile::Power { c, alpha } if !(c > 0.0 && alpha > 0.0) => {
                invalid(format!("power profile needs c > 0, α > 0 (got c={c}, α={alpha})"))
            }
            VolumeProfile::PowerLog { c, alpha, beta } if !(c > 0.0 && alpha > 0.0 && beta >= 0.0) => {
                invalid(format!("power-log profile needs c > 0, α > 0, β ≥ 0 (got {c}, {alpha}, {beta})"))
            }
            VolumeProfile::Spaceform { curvature, n } if !(curvature < 0.0 && n >= 2) => {
                invalid(format!("spaceform profile needs K < 0 and n ≥ 2 (got K={curvature}, n={n})"))
            }
            _ => Ok(()),
        }
    }

    /// `V(r)`; fails for negative or non-finite `r`.
    pub fn volume(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || !r.is_finite() {
            return invalid(format!("volume radius must be finite and ≥ 0, got {r}"));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok(self.ln_volume(r).exp())
    }

    /// `V'(r)`.
    pub fn derivative(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return match *self {
                VolumeProfile::Tabulated(ref t) => t.derivative(0.0),
                _ => 0.0,
            };
        }
        match *self {
            VolumeProfile::Euclidean { m } => {
                let m = m as f64;
                (2.0 * m) * (m * PI.ln() + (2.0 * m - 1.0) * r.ln() - ln_factorial(m as u32)).exp()
            }
            VolumeProfile::Power { c, alpha } => c * alpha * r.powf(alpha - 1.0),
            VolumeProfile::PowerLog { c, alpha, beta } => {
                let l = (std::f64::consts::E + r).ln();
                c * r.powf(alpha - 1.0) * l.powf(beta - 1.0) * (alpha * l + beta * r / (std::f64::consts::E + r))
            }
            VolumeProfile::Spaceform { curvature, n } => {
                let s = (-curvature).sqrt();
                sphere_area(n) * ((s * r).sinh() / s).powi(n as i32 - 1)
            }
            VolumeProfile::Tabulated(ref t) => t.derivative(r),
        }
    }

    /// Parabolicity read off the growth law; tabulated data goes through the
    /// tail-exponent test.
    fn analytic_non_parabolic(&self) -> Result<bool> {
        match *self {
            VolumeProfile::Euclidean { m } => Ok(m >= 2),
            VolumeProfile::Power { alpha, .. } => Ok(alpha > 2.0),
            VolumeProfile::PowerLog { alpha, beta, .. } => Ok(alpha > 2.0 || (alpha == 2.0 && beta > 1.0)),
            VolumeProfile::Spaceform { n, .. } => Ok(n >= 2),
            VolumeProfile::Tabulated(ref t) => t.non_parabolic(),
        }
    }
}

impl VolumeLaw for VolumeProfile {
    fn ln_volume(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            VolumeProfile::Euclidean { m } => {
                let mf = m as f64;
                mf * PI.ln() + 2.0 * mf * r.ln() - ln_factorial(m)
            }
            VolumeProfile::Power { c, alpha } => c.ln() + alpha * r.ln(),
            VolumeProfile::PowerLog { c, alpha, beta } => {
                c.ln() + alpha * r.ln() + beta * (std::f64::consts::E + r).ln().ln()
            }
            VolumeProfile::Spaceform { curvature, n } => spaceform_ln_volume(curvature, n, r),
            VolumeProfile::Tabulated(ref t) => t.ln_volume(r),
        }
    }

    fn non_parabolic(&self) -> Result<bool> {
        self.validate()?;
        self.analytic_non_parabolic()
    }
}

/// `ln V` for the space form of curvature `K < 0`:
/// `V(r) = ω_{n−1} ∫₀^r (sinh(√−K t)/√−K)^{n−1} dt`, evaluated with the
/// factor `e^{(n−1)√−K r}` pulled out so that large radii do not overflow.
pub(crate) fn spaceform_ln_volume(curvature: f64, n: u32, r: f64) -> f64 {
    let s = (-curvature).sqrt();
    let k = n as i32 - 1;
    // In τ = r − t: 2 sinh(st) e^{−sr} = e^{−sτ} (1 − e^{−2s(r−τ)}).
    let q = |tau: f64| ((-s * tau).exp() * (-(-2.0 * s * (r - tau)).exp_m1())).powi(k);
    let width = 40.0 / (k.max(1) as f64 * s);
    let breaks: Vec<f64> = if width < r { vec![0.0, width, r] } else { vec![0.0, r] };
    let integral = quad::integrate_with_breaks(&q, &breaks, Tolerance::rel(1e-13)).value;
    sphere_area(n).ln() - k as f64 * (2.0 * s).ln() + k as f64 * s * r + integral.ln()
}

/// Monotone samples `(r_i, V_i)`, interpolated by a monotone cubic
/// (Fritsch–Carlson) in `(ln r, ln V)` so that power laws are reproduced
/// exactly, and extrapolated by the first and last local power-law exponents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabulatedSpec", into = "TabulatedSpec")]
pub struct TabulatedProfile {
    radii: Vec<f64>,
    volumes: Vec<f64>,
    ln_r: Vec<f64>,
    ln_v: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedSpec {
    pub radii: Vec<f64>,
    pub volumes: Vec<f64>,
}

impl TryFrom<TabulatedSpec> for TabulatedProfile {
    type Error = Error;
    fn try_from(s: TabulatedSpec) -> Result<Self> {
        TabulatedProfile::new(s.radii, s.volumes)
    }
}

impl From<TabulatedProfile> for TabulatedSpec {
    fn from(t: TabulatedProfile) -> Self {
        TabulatedSpec { radii: t.radii, volumes: t.volumes }
    }
}

/// Exponents within this distance of the critical value 2 are not decided.
pub const CRITICAL_EXPONENT_MARGIN: f64 = 0.05;

impl TabulatedProfile {
    pub fn new(radii: Vec<f64>, volumes: Vec<f64>) -> Result<Self> {
        if radii.len() != volumes.len() {
            return invalid("tabulated radii and volumes differ in length");
        }
        if radii.iter().chain(&volumes).any(|v| !v.is_finite()) {
            return invalid("tabulated samples must be finite");
        }
        if radii.first().is_some_and(|&r| r < 0.0 || (r == 0.0 && volumes[0] != 0.0)) {
            return invalid("tabulated profile must start at r ≥ 0 with V(0) = 0");
        }
        for w in radii.windows(2) {
            if !(w[1] > w[0]) {
                return invalid("tabulated radii must be strictly increasing");
            }
        }
        let skip = usize::from(radii.first() == Some(&0.0));
        if radii.len() - skip < 2 {
            return invalid("tabulated profile needs at least two samples with r > 0");
        }
        for w in volumes[skip..].windows(2) {
            if !(w[0] > 0.0 && w[1] > w[0]) {
                return invalid("tabulated volumes must be positive and strictly increasing");
            }
        }
        let ln_r: Vec<f64> = radii[skip..].iter().map(|r| r.ln()).collect();
        let ln_v: Vec<f64> = volumes[skip..].iter().map(|v| v.ln()).collect();
        let slopes = pchip_slopes(&ln_r, &ln_v);
        Ok(TabulatedProfile { radii, volumes, ln_r, ln_v, slopes })
    }

    /// Sample `V` on `radii` from another law.
    pub fn sample<L: VolumeLaw>(law: &L, radii: Vec<f64>) -> Result<Self> {
        let vols = radii.iter().map(|&r| if r == 0.0 { 0.0 } else { law.volume_at(r) }).collect();
        TabulatedProfile::new(radii, vols)
    }

    fn segment_exponent(&self, i: usize) -> f64 {
        (self.ln_v[i + 1] - self.ln_v[i]) / (self.ln_r[i + 1] - self.ln_r[i])
    }

    pub fn tail_exponent(&self) -> f64 {
        self.segment_exponent(self.ln_r.len() - 2)
    }

    fn head_exponent(&self) -> f64 {
        self.segment_exponent(0)
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.ln_r.len();
        match self.ln_r.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(i) => (i.max(1) - 1).min(n - 2),
        }
    }

    /// `(ln V, d ln V / d ln r)` inside the table.
    fn hermite(&self, x: f64) -> (f64, f64) {
        let i = self.locate(x);
        let (x0, x1) = (self.ln_r[i], self.ln_r[i + 1]);
        let (y0, y1) = (self.ln_v[i], self.ln_v[i + 1]);
        let (d0, d1) = (self.slopes[i], self.slopes[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * d1;
        let dv = ((6.0 * t2 - 6.0 * t) * y0 + (-6.0 * t2 + 6.0 * t) * y1) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * d0
            + (3.0 * t2 - 2.0 * t) * d1;
        (v, dv)
    }

    fn log_eval(&self, r: f64) -> (f64, f64) {
        let n = self.ln_r.len();
        let x = r.ln();
        if x > self.ln_r[n - 1] {
            let b = self.tail_exponent();
            (self.ln_v[n - 1] + b * (x - self.ln_r[n - 1]), b)
        } else if x < self.ln_r[0] {
            let b = self.head_exponent();
            (self.ln_v[0] + b * (x - self.ln_r[0]), b)
        } else {
            self.hermite(x)
        }
    }

    pub fn ln_volume(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.log_eval(r).0
    }

    pub fn derivative(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return if self.head_exponent() < 1.0 { f64::INFINITY } else { 0.0 };
        }
        let (lv, s) = self.log_eval(r);
        s * lv.exp() / r
    }

    /// Parabolicity from the tail: the extrapolation exponent decides, but
    /// only when it is clearly away from 2 and the last segments agree.
    pub fn non_parabolic(&self) -> Result<bool> {
        let n = self.ln_r.len();
        if n < 4 {
            return Err(Error::Undecidable(format!(
                "tabulated profile has {n} positive samples; at least four are needed"
            )));
        }
        let exps: Vec<f64> = (n - 4..n - 1).map(|i| self.segment_exponent(i)).collect();
        let beta = exps[2];
        if (beta - 2.0).abs() < CRITICAL_EXPONENT_MARGIN {
            return Err(Error::Undecidable(format!(
                "tail exponent {beta:.4} is within {CRITICAL_EXPONENT_MARGIN} of the critical value 2"
            )));
        }
        if exps.iter().any(|&e| (e > 2.0) != (beta > 2.0)) {
            return Err(Error::Undecidable(format!("tail exponents {exps:?} straddle the critical value 2")));
        }
        Ok(beta > 2.0)
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![del[0], del[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if del[k - 1] * del[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], del[0], del[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_unit_ball() {
        let v = VolumeProfile::euclidean(2).volume(1.0).unwrap();
        assert!((v - PI * PI / 2.0).abs() < 1e-13);
    }

    #[test]
    fn power_definition() {
        assert!((VolumeProfile::power(1.0, 3.0).volume(2.0).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn negative_radius_rejected() {
        assert!(VolumeProfile::euclidean(2).volume(-1.0).is_err());
    }

    #[test]
    fn spaceform_large_radius_is_finite() {
        let p = VolumeProfile::spaceform(-1.0, 4);
        let lv = p.ln_volume(400.0);
        // ln V ≈ ln(2π²/24) + 3·400 for large r.
        let approx = (2.0 * PI * PI / 24.0).ln() + 1200.0;
        assert!((lv - approx).abs() < 1e-9, "{lv} vs {approx}");
    }

    #[test]
    fn tabulated_reproduces_power_law() {
        let law = VolumeProfile::power(2.0, 3.0);
        let radii: Vec<f64> = (0..=40).map(|i| 0.25 * i as f64).collect();
        let t = TabulatedProfile::sample(&law, radii).unwrap();
        for &r in &[0.3, 1.7, 4.2, 9.9] {
            let rel = ((t.ln_volume(r) - law.ln_volume(r)).exp() - 1.0).abs();
            assert!(rel < 2e-3, "r={r}: rel {rel}");
        }
        // extrapolation by the last local exponent
        assert!((t.tail_exponent() - 3.0).abs() < 1e-9);
        assert_eq!(t.non_parabolic(), Ok(true));
    }

    #[test]
    fn tabulated_near_critical_refuses() {
        let law = VolumeProfile::power(1.0, 2.02);
        let radii: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let t = TabulatedProfile::sample(&law, radii).unwrap();
        assert!(matches!(t.non_parabolic(), Err(Error::Undecidable(_))));
        let short = TabulatedProfile::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 8.0]).unwrap();
        assert!(matches!(short.non_parabolic(), Err(Error::Undecidable(_))));
    }

    #[test]
    fn tabulated_rejects_non_monotone() {
        assert!(TabulatedProfile::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn profile_serde_round_trip() {
        let ps = vec![
            VolumeProfile::euclidean(3),
            VolumeProfile::power(1.5, 4.0),
            VolumeProfile::spaceform(-1.0, 4),
            VolumeProfile::Tabulated(TabulatedProfile::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 8.0]).unwrap()),
        ];
        for p in ps {
            let s = serde_json::to_string(&p).unwrap();
            let q: VolumeProfile = serde_json::from_str(&s).unwrap();
            assert_eq!(p, q);
        }
    }
}
