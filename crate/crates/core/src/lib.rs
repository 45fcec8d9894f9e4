//! Pseudo-spectral solver for the polyharmonic map heat flow into the sphere,
//! with numerical diagnostics for its kernel, smoothing and contraction estimates.
//!
//! The whole space is replaced by a periodic box `[0, L)^n`; every linear
//! operator is diagonal in Fourier space and every pointwise product is
//! dealiased with the 2/3 rule.

// `!(x > 0.0)` is the NaN-rejecting form used by every parameter check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod grid;
pub mod kernel;
pub mod nonlinearity;
pub mod norms;
pub mod par;
pub mod semigroup;
pub mod snapshot;
pub mod solver;
pub mod diagnostics;
pub mod target;

pub use error::{Error, Result};
pub use grid::{Field, GridSpec, SpectralField, Trajectory};
