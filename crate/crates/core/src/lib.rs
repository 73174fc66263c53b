//! Privacy-preserving energy management for smart meters.
//!
//! The crate models a household whose appliance demand (the *user load*) is
//! partially served by a rechargeable battery and an optional renewable
//! source, so that the power drawn from the grid (the *grid load*, what the
//! meter reports) reveals less about the household's activity.
//!
//! * [`model`] holds the physical system: traces, battery, renewable source,
//!   tariff and the slot-by-slot simulator.
//! * [`policies`] holds energy-management policies, from load-flattening
//!   heuristics to convex offline programs, MDP solvers and stochastic
//!   kernel policies.
//! * [`measures`] quantifies privacy: load variance, rate-distortion style
//!   leakage, empirical mutual information, detection exponents and Fisher
//!   information.
//! * [`harness`] ingests and generates traces and runs parameter sweeps.

pub mod error;
pub mod harness;
pub mod measures;
pub mod model;
pub mod policies;

pub use error::{Error, Result};
