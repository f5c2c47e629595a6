//! Randomly shifted Kronecker (R_d) point sets and the maps that carry the
//! unit cube onto complex spheres and balls.

use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

use crate::rng;

#[derive(Clone, Debug)]
pub struct Kronecker {
    alpha: Vec<f64>,
}

impl Kronecker {
    pub fn new(dim: usize) -> Self {
        // Generalised golden ratio: the positive root of x^{d+1} = x + 1.
        let mut phi: f64 = 2.0;
        for _ in 0..64 {
            phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
        }
        let alpha = (1..=dim).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
        Kronecker { alpha }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Point `i` of the sequence with the Cranley–Patterson shift `shift`.
    pub fn point(&self, i: u64, shift: &[f64], out: &mut [f64]) {
        let k = (i + 1) as f64;
        for ((o, a), s) in out.iter_mut().zip(&self.alpha).zip(shift) {
            let v = (s + k * a).fract();
            *o = if v < 0.0 { v + 1.0 } else { v };
        }
    }
}

/// `count` independent uniform shifts in `[0,1)^dim` from the jitter stream.
pub fn random_shifts(seed: u64, tag: u64, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let stream = rng::substream_seed(seed, rng::STREAM_JITTER);
    (0..count)
        .map(|j| {
            let mut r = rng::indexed_rng(stream ^ tag.rotate_left(17), j as u64);
            (0..dim).map(|_| r.gen::<f64>()).collect()
        })
        .collect()
}

/// Cube dimension consumed by [`complex_sphere_point`].
pub fn sphere_dim(m: usize) -> usize {
    2 * m - 1
}

/// Cube dimension consumed by [`complex_ball_point`].
pub fn ball_dim(m: usize) -> usize {
    2 * m
}

/// Uniform point on the unit sphere of `ℂ^m`: the squared moduli follow a flat
/// Dirichlet law built by stick breaking, and the phases are uniform.
pub fn complex_sphere_point(u: &[f64], out: &mut [Complex64]) {
    let m = out.len();
    let mut remaining = 1.0f64;
    for j in 0..m {
        let share = if j + 1 == m {
            remaining
        } else {
            let k = (m - 1 - j) as f64;
            remaining * (1.0 - (1.0 - u[j]).powf(1.0 / k))
        };
        remaining -= share;
        let theta = 2.0 * PI * u[m - 1 + j];
        out[j] = Complex64::from_polar(share.max(0.0).sqrt(), theta);
    }
}

/// Uniform point in the unit ball of `ℂ^m`.
pub fn complex_ball_point(u: &[f64], out: &mut [Complex64]) {
    let m = out.len();
    complex_sphere_point(&u[..2 * m - 1], out);
    let radius = u[2 * m - 1].powf(1.0 / (2 * m) as f64);
    for z in out.iter_mut() {
        *z *= radius;
    }
}
