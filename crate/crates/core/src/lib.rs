//! Driven qubit coupled to a finite, continuously monitored calorimeter.
//!
//! Two descriptions of the same dynamics live side by side:
//!
//! * [`dynamics`] integrates the block master equation for the decohered
//!   composite state, in microstate or microcanonical resolution;
//! * [`feqj`] samples finite-environment quantum-jump trajectories, where
//!   each jump moves one quantum between qubit and calorimeter.
//!
//! [`work`] computes two-measurement and power-operator work moments from
//! both, and [`analysis`] assembles the comparisons (trace distances,
//! population traces, moment sweeps).
//!
//! All numerics are generic over [`Real`]; the `*64` aliases below fix the
//! scalar to `f64`, which is what the command-line front end uses.

// `!(x > 0)` is used on purpose so that NaN fails the check too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod feqj;
pub mod matrix;
pub mod model;
pub mod scalar;
pub mod work;

pub use error::{Error, Result};
pub use scalar::Real;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Mat2f64 = matrix::Mat2<f64>;
pub type Ket2f64 = matrix::Ket2<f64>;
pub type Drive64 = model::DriveProtocol<f64>;
pub type Calorimeter64 = model::CalorimeterModel<f64>;
pub type SectorSpace64 = model::SectorSpace<f64>;
pub type State64 = dynamics::ConditionedState<f64>;
pub type Scenario64 = dynamics::Scenario<f64>;
pub type Record64 = feqj::TrajectoryRecord<f64>;
pub type Moments64 = work::WorkMoments<f64>;
