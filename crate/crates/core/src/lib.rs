//! Spectral data of smooth expanding circle maps.
//!
//! The crate computes, for a map `T(x) = d·x + p(x)` with trigonometric
//! polynomial perturbation `p`:
//!
//! * Denjoy–Carleman class data ([`dc_class`]): M-sequences, the associated
//!   weight function `w`, and the fitted constants appearing in every decay
//!   estimate downstream;
//! * periodic orbits and flat traces ([`circle_map`]);
//! * the transfer-operator matrix in the Fourier basis ([`transfer_op`]);
//! * the anisotropic Hilbert-space scaling, singular values and the
//!   block split into a nuclear and a quasi-nilpotent part ([`aniso_space`]);
//! * dynamical determinants by three independent routes and the Ruelle
//!   resonances they encode ([`determinant`]);
//! * explicit envelope and growth bounds ([`bounds`]).
//!
//! Everything is pure and thread-safe; the `parallel` feature (on by
//! default) switches the inner loops to rayon.

pub mod aniso_space;
pub mod bounds;
pub mod circle_map;
pub mod dc_class;
pub mod determinant;
pub mod error;
pub mod transfer_op;

mod par;

pub use error::{Error, Result};
pub use par::{parallel_enabled, set_thread_cap};

/// Fixed 17-significant-digit float format used by every emitted report, so
/// identical inputs produce byte-identical artifacts.
pub fn fmt_e17(x: f64) -> String {
    format!("{x:.16e}")
}
