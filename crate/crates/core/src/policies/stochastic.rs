//! Memoryless randomized policies that draw the grid load from a kernel
//! `p(y | x)`, plus replay of precomputed schedules.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::pmf::{index_of, Kernel};
use crate::model::{Policy, PolicyState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticKernelPolicy {
    pub kernel: Kernel,
}

impl StochasticKernelPolicy {
    /// Checks that the kernel only reduces the load, by at most `peak_kw`.
    pub fn new(kernel: Kernel, peak_kw: f64) -> Result<Self> {
        for (i, row) in kernel.rows.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                let d = kernel.input[i] - kernel.output[j];
                if *p > 0.0 && !(d >= -1e-12 && d <= peak_kw + 1e-12) {
                    return Err(Error::InvalidParameter(format!(
                        "kernel puts mass on y = {} for x = {} outside 0 ≤ x − y ≤ {peak_kw}",
                        kernel.output[j], kernel.input[i]
                    )));
                }
            }
        }
        Ok(Self { kernel })
    }
}

fn sample_row(row: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Draws `y ~ p(· | x)`.
pub fn sample_stochastic_policy(policy: &StochasticKernelPolicy, x: f64, rng: &mut dyn RngCore) -> Result<f64> {
    let i = index_of(&policy.kernel.input, x).ok_or(Error::AlphabetMismatch { value: x })?;
    Ok(policy.kernel.output[sample_row(&policy.kernel.rows[i], rng)])
}

/// Samples the kernel when the battery can deliver the draw; otherwise, and
/// for demand outside the alphabet, reports the demand.
fn kernel_or_demand(policy: &StochasticKernelPolicy, state: &PolicyState<'_>, rng: &mut dyn RngCore) -> f64 {
    match sample_stochastic_policy(policy, state.load_kw, rng) {
        Ok(y) => {
            let (lo, hi) = state.feasible_range();
            if y >= lo - 1e-12 && y <= hi + 1e-12 {
                state.clamp(y)
            } else {
                state.load_kw
            }
        }
        Err(_) => state.load_kw,
    }
}

impl Policy for StochasticKernelPolicy {
    fn name(&self) -> String {
        "kernel".into()
    }

    fn decide(&mut self, state: &PolicyState<'_>, rng: &mut dyn RngCore) -> f64 {
        kernel_or_demand(self, state, rng)
    }
}

/// Reports the demand for the first `storage_slots` slots while renewable
/// energy fills the battery, then follows the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreAndHide {
    pub policy: StochasticKernelPolicy,
    pub storage_slots: usize,
}

pub fn store_and_hide(
    state: &PolicyState<'_>,
    policy: &StochasticKernelPolicy,
    storage_slots: usize,
    rng: &mut dyn RngCore,
) -> f64 {
    if state.t < storage_slots {
        state.load_kw
    } else {
        kernel_or_demand(policy, state, rng)
    }
}

impl Policy for StoreAndHide {
    fn name(&self) -> String {
        "store_and_hide".into()
    }

    fn decide(&mut self, state: &PolicyState<'_>, rng: &mut dyn RngCore) -> f64 {
        store_and_hide(state, &self.policy, self.storage_slots, rng)
    }
}

/// Follows the kernel whenever the stored energy suffices, otherwise reports
/// the demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEffortRes {
    pub policy: StochasticKernelPolicy,
}

pub fn best_effort_res(state: &PolicyState<'_>, policy: &StochasticKernelPolicy, rng: &mut dyn RngCore) -> f64 {
    kernel_or_demand(policy, state, rng)
}

impl Policy for BestEffortRes {
    fn name(&self) -> String {
        "best_effort_res".into()
    }

    fn decide(&mut self, state: &PolicyState<'_>, rng: &mut dyn RngCore) -> f64 {
        best_effort_res(state, &self.policy, rng)
    }
}

/// Replays a fixed grid schedule, clipped to the feasible range.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReplay {
    pub label: String,
    pub grid_kw: Vec<f64>,
}

impl Policy for ScheduleReplay {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn decide(&mut self, state: &PolicyState<'_>, _rng: &mut dyn RngCore) -> f64 {
        let y = self.grid_kw.get(state.t).copied().unwrap_or(state.load_kw);
        state.clamp(y)
    }
}
