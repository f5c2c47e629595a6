//! Numerical laboratory for heat kernels, Green-function exhaustions and
//! Nevanlinna functionals on model Kähler connected sums.
//!
//! The crate is organised around five computational modules:
//!
//! * [`model_geometry`]: volume profiles, glued models, distances and the
//!   auxiliary evaluators (parabolicity, volume comparison, envelopes).
//! * [`heat_green`]: tail integrals, Euclidean kernels, two-sided bounds and
//!   the integral estimates built on them.
//! * [`exhaustion`]: the Green exhaustion `Δ(r)`, its Green function `g_r`
//!   and the harmonic-measure bounds.
//! * [`brownian`]: Monte Carlo Brownian motion with generator `Δ/2`.
//! * [`nevanlinna`]: value-distribution functionals and their checks.
//!
//! Supporting plumbing lives in [`quad`], [`qmc`], [`rng`], [`par`],
//! [`special`] and [`stats`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brownian;
pub mod error;
pub mod exhaustion;
pub mod heat_green;
pub mod model_geometry;
pub mod nevanlinna;
pub mod par;
pub mod qmc;
pub mod quad;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
