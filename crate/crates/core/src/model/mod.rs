//! The physical system: loads, battery, renewable source, tariff, and the
//! slot loop that drives an energy-management policy over a trace.

mod battery;
mod res;
mod sim;
mod tariff;
mod trace;

pub use battery::{
    battery_step, BatteryParams, BatteryPreset, BatteryPresets, BatterySoC, StepOutcome,
    ViolationKind, SOC_TOLERANCE,
};
pub use res::{ResModel, ResParams};
pub use sim::{
    check_feasible, simulate, NullPolicy, Policy, PolicyState, SimResult, Simulator, Violation,
};
pub use tariff::{Segment, Tariff};
pub use trace::LoadTrace;

/// Derives an independent stream seed from a master seed (splitmix64).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
