//! Pose-and-shear estimation, filtering and servo control for a soft tactile
//! sensor, on SE(3).
//!
//! - [`se3`]: exponential coordinates, adjoints, Jacobians and BCH composition.
//! - [`uncertainty`]: concentrated Gaussians on poses and their fusion.
//! - [`filter`]: predict/correct filtering of contact pose estimates.
//! - [`sensing`]: contact pose parameterisation, data sampling, the stand-in
//!   estimator and loss utilities.
//! - [`control`]: tangent-space PID servoing and target alignment for pushing.
//! - [`sim`]: deterministic kinematic simulation of the servoing tasks.
//! - [`evaluation`]: filter noise-level sweeps.
//! - [`params`] and [`cli`]: controller parameter files and the command line.
//!
//! Units: mm and radians internally; configs, logs and gains use mm and degrees.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod error;
pub mod evaluation;
pub mod filter;
pub mod params;
pub mod se3;
pub mod sensing;
pub mod sim;
pub mod uncertainty;

pub use error::{Error, Result};
