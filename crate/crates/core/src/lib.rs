//! Staggered-grid residual distribution (SGH RD) solver for two-dimensional
//! Lagrangian hydrodynamics.
//!
//! Velocity and positions live in a continuous biquadratic Bernstein space,
//! specific internal energy in a discontinuous bilinear Bernstein space. The
//! time integration is an explicit two-stage deferred-correction scheme with
//! lumped (diagonal) mass matrices, and a per-element correction keeps the
//! lumped total energy exactly conservative.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bernstein;
pub mod conservation;
pub mod error;
pub mod io;
pub mod mesh;
pub mod problems;
pub mod residuals;
pub mod state;
pub mod timestepper;
pub mod verify;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

pub use error::{Result, SolverError};
