//! Simulator for a single rotary-wing UAV that serves a ground user with a
//! downlink while localizing a ground target from round-trip radar ranging.
//!
//! The UAV flies a waypoint trajectory inside a rectangular area, hovering at
//! every `mu`-th waypoint to collect one range measurement to the target. The
//! library plans energy-constrained trajectories that trade off the average
//! downlink rate against the Cramér-Rao bound (CRB) of the target position
//! estimate, simulates the resulting flights with noisy ranging, and evaluates
//! them with maximum-likelihood estimation and Monte-Carlo experiments.
//!
//! Module map:
//! - [`scenario`]: world/system parameters, config ingestion, seeded RNG streams
//! - [`trajectory`]: waypoint paths with per-waypoint hover bookkeeping
//! - [`channel`]: downlink rate and radar link/noise models
//! - [`crb`]: Fisher information and CRB, closed form and matrix oracle
//! - [`energy`]: rotary-wing propulsion power and trajectory energy accounting
//! - [`sca`]: per-stage convexified trajectory optimization with line search
//! - [`estimator`]: range measurement simulation, grid-search MLE, Monte-Carlo MSE
//! - [`mission`]: the multi-stage fly/measure/re-estimate protocol and baselines

pub mod channel;
pub mod crb;
pub mod energy;
pub mod estimator;
pub mod mission;
pub mod scenario;
pub mod sca;
pub mod trajectory;

mod error;
mod point;

pub use error::{Error, Result};
pub use point::Point;
