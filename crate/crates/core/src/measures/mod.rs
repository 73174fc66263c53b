//! Privacy measures: load variance and attacker statistics, information
//! leakage (privacy-power function, battery leakage, trapdoor bound, empirical
//! mutual information), detection exponents and Fisher information.

pub mod allocation;
pub mod ba;
pub mod battery_leakage;
pub mod empirical;
pub mod fisher;
pub mod fsm;
pub mod hypothesis;
pub mod pmf;

pub use allocation::{multiuser_allocation, Allocation, LeakageCurve};
pub use ba::{privacy_power_ba, res_only_leakage, PrivacyPower};
pub use battery_leakage::{iid_battery_leakage, trapdoor_bound, BatteryLeakage};
pub use empirical::{empirical_kl, empirical_mi_smoothed, feature_count, load_variance, Quantizer};
pub use fisher::{fisher_crb, ConditionalDensity, FisherCrb, GaussianKernel};
pub use fsm::{empirical_mi_fsm, parameter_sweep_fsm, FsmMethod, FsmModel, FsmSweep};
pub use hypothesis::{chernoff_stein_exponent, hypothesis_kl_optimize, np_detector, Decision, HypothesisPair};
pub use pmf::{entropy_bits, kl_nats, Kernel, Pmf};
