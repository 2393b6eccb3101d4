//! System identification for the constant-time-headway relative-velocity
//! (CTH-RV) car-following model.
//!
//! The model says a follower accelerates in proportion to its spacing error
//! and its closing speed: `dv/dt = k1 * (s - tau * v) + k2 * (v_l - v)`.
//! This crate covers the full identification workflow around that equation:
//!
//! * [`model`]: the model itself, its Euler discretization into a linear
//!   state-space recurrence, and the analytic string-stability criterion;
//! * [`sim`]: follower and platoon simulation plus synthetic lead-profile
//!   generation;
//! * [`trajectory`]: the uniformly sampled time-series container with CSV
//!   ingestion/emission, resampling, and sensor-comparison statistics;
//! * three estimators of `(k1, k2, tau)` from trajectory data:
//!   [`least_squares`] (closed form), [`batch`] (multi-start simulation
//!   optimization), and [`particle_filter`] (online joint state/parameter
//!   filtering);
//! * [`metrics`] and [`hist`]: error summaries of a fitted model against
//!   the data.
//!
//! Everything stochastic is driven by explicit seeds and documented draw
//! orders, so any result in this crate can be reproduced bit-for-bit.

// Validation guards use the `!(x > 0.0)` form on purpose: unlike
// `x <= 0.0`, the negation also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod error;
pub mod hist;
pub mod least_squares;
pub mod metrics;
pub mod model;
pub mod nelder_mead;
pub mod particle_filter;
pub mod sim;
mod stats;
pub mod trajectory;

pub use error::{Error, ErrorCategory, Result};
pub use model::{ModelParams, Stability, StabilityVerdict, StateMatrices, VehicleState};
pub use trajectory::{Trajectory, TrajectoryFormat};
