//! Adaptive Gauss–Kronrod quadrature and the substitutions used for the
//! semi-infinite heat-kernel integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Stopping rule for adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 0.0, rel: 1e-12, max_intervals: 4000 }
    }
}

impl Tolerance {
    pub fn rel(rel: f64) -> Self {
        Tolerance { rel, ..Default::default() }
    }

    pub fn with_abs(mut self, abs: f64) -> Self {
        self.abs = abs;
        self
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, error: 0.0, evaluations: 0, converged: true }
    }

    pub fn scale(self, s: f64) -> Self {
        Estimate { value: self.value * s, error: self.error * s.abs(), ..self }
    }

    /// Fails with a quadrature error when the estimate did not converge.
    pub fn require(self, what: &str) -> Result<Estimate> {
        if self.converged && self.value.is_finite() {
            Ok(self)
        } else {
            Err(Error::Quadrature(format!(
                "{what}: value {} with error {} after {} evaluations",
                self.value, self.error, self.evaluations
            )))
        }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;

    fn add(self, other: Estimate) -> Estimate {
        Estimate {
            value: self.value + other.value,
            error: self.error + other.error,
            evaluations: self.evaluations + other.evaluations,
            converged: self.converged && other.converged,
        }
    }
}

/// One 21-point Gauss–Kronrod panel: (integral, error estimate).
fn gk21<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let ah = half.abs();
    let value = res_k * half;
    let res_abs = res_abs * ah;
    let res_asc = res_asc * ah;
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Sorted breaks `breaks ∪ {lo·4^k}` inside `(lo, hi)`, so that panels grow
/// geometrically away from a feature at scale `lo`.
pub fn with_geometric_breaks(mut breaks: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    if lo > 0.0 && lo.is_finite() && hi > lo {
        let mut x = lo;
        while x < hi {
            breaks.push(x);
            x *= 4.0;
        }
    }
    breaks.retain(|b| b.is_finite());
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    breaks
}

/// Globally adaptive integration of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, tol: Tolerance) -> Estimate {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Like [`integrate`], starting from the panels delimited by `breaks`
/// (sorted, at least two entries).
pub fn integrate_with_breaks<F: Fn(f64) -> f64 + ?Sized>(f: &F, breaks: &[f64], tol: Tolerance) -> Estimate {
    assert!(breaks.len() >= 2);
    if breaks.windows(2).all(|w| w[0] == w[1]) {
        return Estimate::exact(0.0);
    }
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evals = 0;
    for w in breaks.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        let (v, e) = gk21(f, w[0], w[1]);
        evals += 21;
        total += v;
        total_err += e;
        heap.push(Panel { a: w[0], b: w[1], value: v, error: e });
    }
    let mut converged = false;
    let mut frozen_err = 0.0;
    loop {
        let target = tol.abs.max(tol.rel * total.abs());
        if total_err + frozen_err <= target {
            converged = true;
            break;
        }
        if heap.len() >= tol.max_intervals {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        if worst.error == 0.0 {
            heap.push(worst);
            break;
        }
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a.min(worst.b) && mid < worst.a.max(worst.b)) {
            // Panel at machine resolution: keep its error but stop refining it.
            total_err -= worst.error;
            frozen_err += worst.error;
            heap.push(Panel { error: 0.0, ..worst });
            continue;
        }
        let (v1, e1) = gk21(f, worst.a, mid);
        let (v2, e2) = gk21(f, mid, worst.b);
        evals += 42;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
    }
    // Re-sum from the panels to avoid drift from the running updates.
    let mut panels: Vec<Panel> = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value: f64 = panels.iter().map(|p| p.value).sum();
    let error: f64 = panels.iter().map(|p| p.error).sum::<f64>() + frozen_err;
    let converged = converged || error <= tol.abs.max(tol.rel * value.abs());
    Estimate { value, error, evaluations: evals, converged }
}

/// Value of the integrand-envelope threshold below which the half-line window
/// is truncated, relative to the peak.
pub const TRUNCATION: f64 = 1e-16;

const SCAN_STEP: f64 = 0.5;
const SCAN_CAP: f64 = 600.0;

/// `∫₀^∞ f(t) dt` through `t = scale·e^u`, integrating over the window of `u`
/// where the transformed integrand exceeds [`TRUNCATION`] of its peak. When
/// the window reaches the scan cap the remaining tail is added analytically
/// from the local exponential decay rate; a non-decaying tail is reported as
/// divergent.
pub fn integrate_half_line<F: Fn(f64) -> f64 + ?Sized>(f: &F, scale: f64, tol: Tolerance) -> Result<Estimate> {
    integrate_half_line_with_breaks(f, scale, &[], tol)
}

/// [`integrate_half_line`] with extra panel edges at the points `kinks`
/// (in the original variable) that fall inside the retained window.
pub fn integrate_half_line_with_breaks<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    scale: f64,
    kinks: &[f64],
    tol: Tolerance,
) -> Result<Estimate> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("half-line scale {scale}")));
    }
    let g = |u: f64| {
        let t = scale * u.exp();
        let v = f(t) * t;
        if v.is_nan() {
            0.0
        } else {
            v
        }
    };
    // Coarse scan for the peak.
    let mut peak = 0.0f64;
    let mut peak_u = 0.0;
    let mut u = -60.0;
    while u <= 60.0 {
        let v = g(u).abs();
        if v > peak {
            peak = v;
            peak_u = u;
        }
        u += SCAN_STEP;
    }
    if peak == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    if !peak.is_finite() {
        return Err(Error::Divergent("integrand is unbounded on the half-line".into()));
    }
    let thr = TRUNCATION * peak;
    let walk = |dir: f64| -> (f64, bool) {
        let mut u = peak_u;
        loop {
            let next = u + dir * SCAN_STEP;
            if next.abs() > SCAN_CAP {
                return (u, true);
            }
            u = next;
            if g(u).abs() < thr && g(u + dir * SCAN_STEP).abs() < thr {
                return (u + dir * SCAN_STEP, false);
            }
        }
    };
    let (lo, lo_capped) = walk(-1.0);
    let (hi, hi_capped) = walk(1.0);
    let mut brk = vec![lo, peak_u, hi];
    brk.extend(kinks.iter().filter(|&&k| k > 0.0).map(|&k| (k / scale).ln()).filter(|&u| u > lo && u < hi));
    brk.sort_by(|a, b| a.partial_cmp(b).unwrap());
    brk.dedup();
    let mut est = integrate_with_breaks(&g, &brk, tol);
    for &(edge, capped, dir) in &[(lo, lo_capped, -1.0), (hi, hi_capped, 1.0)] {
        if !capped {
            continue;
        }
        let v0 = g(edge);
        let v1 = g(edge - dir);
        if v0 == 0.0 {
            continue;
        }
        let rate = (v1.abs() / v0.abs()).ln();
        if !(rate > 1e-3) {
            return Err(Error::Divergent(format!(
                "transformed integrand does not decay (rate {rate:.3e} at u = {edge})"
            )));
        }
        let tail = v0 / rate;
        est.value += tail;
        est.error += 1e-3 * tail.abs();
    }
    Ok(est)
}

/// `∫_{-∞}^{∞} f(x) dx` through `x = s/(1−s²)`.
pub fn integrate_real_line<F: Fn(f64) -> f64 + ?Sized>(f: &F, tol: Tolerance) -> Estimate {
    let g = |s: f64| {
        let d = 1.0 - s * s;
        if d <= 0.0 {
            return 0.0;
        }
        let x = s / d;
        let v = f(x) * (1.0 + s * s) / (d * d);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate_with_breaks(&g, &[-1.0, 0.0, 1.0], tol)
}

/// `∫_a^∞ f(x) dx` as a half-line integral in `x − a`.
pub fn integrate_from<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, scale: f64, tol: Tolerance) -> Result<Estimate> {
    integrate_half_line(&|s: f64| f(a + s), scale, tol)
}

/// Finds a root of `f` in `[lo, hi]` by bisection; `f(lo)` and `f(hi)` must have
/// opposite signs.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::InvalidArgument(format!("bisection bracket [{lo}, {hi}] does not change sign")));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= rel_tol * mid.abs().max(f64::MIN_POSITIVE) || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
