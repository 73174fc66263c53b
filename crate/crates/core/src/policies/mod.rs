//! Energy-management policies: heuristics, optimization-based schedules and
//! controllers, and stochastic kernel policies.

pub mod heuristic;
pub mod mdp;
pub mod offline;
pub mod online;
pub mod qp;
pub mod stochastic;

pub use heuristic::{
    best_effort, nill, stepping, BestEffort, Nill, NillMode, NillParams, NillState, Stepping,
    SteppingParams, SteppingVariant,
};
pub use offline::{offline_constant_target, offline_piecewise_target, OfflineProblem, OfflineSolution, Target};
pub use online::{online_drift_plus_penalty, DriftPlusPenalty};
