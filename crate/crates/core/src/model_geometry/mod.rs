//! Volume profiles, the glued model `M = M_1 # ⋯ # M_ϑ`, its distances and
//! small evaluators built directly on the volume data.

mod auxiliary;
mod model;
mod profile;

pub use auxiliary::{
    almost_complex_obstruction, comparison_volume, h_function, liouville_envelope, liouville_envelope_limit, not_above,
    volume_comparison_check, ComparisonRow, VolumeComparisonReport, MONO_ABS_TOL, MONO_REL_TOL,
};
pub use model::{avoiding_distance, seam_distance, ConnectedSumModel, Distances, End, Envelope, SheetPoint};
pub use profile::{TabulatedProfile, TabulatedSpec, VolumeLaw, VolumeProfile, CRITICAL_EXPONENT_MARGIN};

pub(crate) use model::norm;

/// `V(r)` with argument validation.
pub fn volume(profile: &VolumeProfile, r: f64) -> crate::Result<f64> {
    profile.volume(r)
}

/// `∫₁^∞ dt / V(√t) < ∞`.
pub fn non_parabolic(profile: &VolumeProfile) -> crate::Result<bool> {
    profile.non_parabolic()
}
