//! Numerical laboratory for the correspondence between velocity selection
//! in front propagation and the selection of minimal quasi-stationary
//! distributions (QSDs).
//!
//! The crate simulates the microscopic particle systems (Fleming–Viot,
//! branching Brownian motion with and without selection, branching random
//! walks with selection), solves the macroscopic equations (F-KPP,
//! conditioned evolution, free-boundary problems) and evaluates the exact
//! QSD / traveling-wave family of drifted Brownian motion.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branching;
pub mod chain;
pub mod closed_forms;
pub mod ensemble;
pub mod error;
pub mod fleming_viot;
pub mod grid;
pub mod kernels;
pub mod levy;
pub mod pde;
pub mod series;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{Grid1D, GridFunction};
pub use kernels::{JumpDistribution, JumpLaw, LevyTriplet, RngStream};
pub use levy::{DualityPoint, LaplaceExponent};
pub use series::{ParticleSnapshot, SnapshotSeries};
pub use stats::EstimateWithCI;
