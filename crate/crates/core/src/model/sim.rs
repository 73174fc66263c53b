use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::battery::{battery_step, BatteryParams, BatterySoC, ViolationKind, SOC_TOLERANCE};
use super::res::ResParams;
use super::tariff::Tariff;
use super::trace::LoadTrace;
use super::derive_seed;
use crate::error::{Error, Result};

/// Everything a policy may look at when choosing the grid load of slot `t`.
///
/// Matches the causal information structure of an online policy: current
/// demand, generation, price and state of charge, plus the grid loads already
/// reported.
#[derive(Debug, Clone, Copy)]
pub struct PolicyState<'a> {
    pub t: usize,
    pub load_kw: f64,
    pub res_kw: f64,
    pub price: f64,
    pub soc: BatterySoC,
    pub battery: &'a BatteryParams,
    pub slot_hours: f64,
    /// Grid loads of slots `0..t`.
    pub grid_history: &'a [f64],
    pub allow_selling: bool,
}

impl PolicyState<'_> {
    /// Interval of grid loads that keep this slot feasible.
    ///
    /// The interval always contains `load_kw`.
    pub fn feasible_range(&self) -> (f64, f64) {
        let max_discharge = self.battery.max_discharge_kw(self.soc, self.slot_hours);
        let max_charge = self.battery.max_charge_kw(self.soc, self.slot_hours);
        let mut lo = self.load_kw - self.res_kw - max_discharge;
        if !self.allow_selling {
            lo = lo.max(0.0);
        }
        let hi = self.load_kw + max_charge;
        (lo.min(self.load_kw), hi)
    }

    pub fn clamp(&self, grid_kw: f64) -> f64 {
        let (lo, hi) = self.feasible_range();
        grid_kw.clamp(lo, hi)
    }

    pub fn previous_grid(&self) -> Option<f64> {
        self.grid_history.last().copied()
    }
}

/// An energy-management policy: maps the causal state to a grid load.
///
/// Implementations are small state machines; `reset` returns them to their
/// initial state so one instance can be reused across runs.
pub trait Policy {
    fn name(&self) -> String;

    fn reset(&mut self) {}

    fn decide(&mut self, state: &PolicyState<'_>, rng: &mut dyn RngCore) -> f64;
}

/// Reports the true load: `y_t = x_t`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullPolicy;

impl Policy for NullPolicy {
    fn name(&self) -> String {
        "null".into()
    }

    fn decide(&mut self, state: &PolicyState<'_>, _rng: &mut dyn RngCore) -> f64 {
        state.load_kw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub slot: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub grid_load: LoadTrace,
    /// State of charge before each slot and after the last: `n + 1` values.
    pub soc_trace: Vec<f64>,
    pub res_trace: Vec<f64>,
    pub wasted_kwh: f64,
    pub loss_kwh: f64,
    pub energy_cost: f64,
    pub wear_events: usize,
    pub total_cost: f64,
    pub violations: Vec<Violation>,
}

impl SimResult {
    /// `sum(y)τ + sum(e)τ - sum(x)τ - ΔSoC - wasted - losses`; zero up to
    /// rounding for a correct run.
    pub fn energy_residual(&self, user_load: &LoadTrace) -> f64 {
        let tau = user_load.slot_hours();
        let grid: f64 = self.grid_load.values().iter().sum::<f64>() * tau;
        let res: f64 = self.res_trace.iter().sum::<f64>() * tau;
        let load = user_load.energy_kwh();
        let delta = self.soc_trace.last().unwrap_or(&0.0) - self.soc_trace.first().unwrap_or(&0.0);
        grid + res - load - delta - self.wasted_kwh - self.loss_kwh
    }
}

/// The fixed part of a simulation: battery, renewable source, tariff.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    pub battery: BatteryParams,
    pub initial_soc: BatterySoC,
    pub res: ResParams,
    pub tariff: Tariff,
    /// Net metering: negative grid load is sold at the current price.
    pub allow_selling: bool,
}

impl Simulator {
    pub fn new(battery: BatteryParams, initial_soc: BatterySoC, res: ResParams, tariff: Tariff) -> Self {
        Self {
            battery,
            initial_soc,
            res,
            tariff,
            allow_selling: false,
        }
    }

    pub fn with_selling(mut self, allow: bool) -> Self {
        self.allow_selling = allow;
        self
    }

    /// Runs `policy` over `user_load`. The renewable trace and the policy's
    /// random stream are both derived from `seed`.
    pub fn run(&self, policy: &mut dyn Policy, user_load: &LoadTrace, seed: u64) -> Result<SimResult> {
        self.battery.validate()?;
        let n = user_load.len();
        let mut res_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
        let res_trace = self.res.generate(n, &mut res_rng)?;
        let mut policy_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        self.run_with_res(policy, user_load, &res_trace, &mut policy_rng)
    }

    /// Runs with an explicit renewable trace.
    pub fn run_with_res(
        &self,
        policy: &mut dyn Policy,
        user_load: &LoadTrace,
        res_trace: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<SimResult> {
        let n = user_load.len();
        if res_trace.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: res_trace.len(),
            });
        }
        let tau = user_load.slot_hours();
        policy.reset();
        let mut soc = self.initial_soc;
        let mut grid = Vec::with_capacity(n);
        let mut soc_trace = Vec::with_capacity(n + 1);
        soc_trace.push(soc.stored_kwh());
        let (mut wasted, mut loss, mut energy_cost) = (0.0, 0.0, 0.0);
        let mut wear_events = 0;

        for t in 0..n {
            let x = user_load.values()[t];
            let e = res_trace[t];
            let price = self.tariff.price_at(t);
            let state = PolicyState {
                t,
                load_kw: x,
                res_kw: e,
                price,
                soc,
                battery: &self.battery,
                slot_hours: tau,
                grid_history: &grid,
                allow_selling: self.allow_selling,
            };
            let y = policy.decide(&state, rng);
            if !y.is_finite() {
                return Err(Error::InfeasibleAction {
                    slot: t,
                    reason: format!("policy returned {y}"),
                });
            }
            if y < -SOC_TOLERANCE && !self.allow_selling {
                return Err(ViolationKind::NegativeGrid.at(t));
            }
            let out = battery_step(soc, e, x, y, &self.battery, tau).map_err(|k| k.at(t))?;
            soc = out.soc;
            wasted += out.wasted_kwh;
            loss += out.loss_kwh;
            energy_cost += tau * y * price;
            if (x - y).abs() > SOC_TOLERANCE {
                wear_events += 1;
            }
            grid.push(y);
            soc_trace.push(soc.stored_kwh());
        }

        let violations = check_feasible(
            user_load,
            &grid,
            &self.battery,
            res_trace,
            self.initial_soc,
            self.allow_selling,
        )?;
        let wear_cost = wear_events as f64 * self.battery.wear_cost;
        Ok(SimResult {
            grid_load: LoadTrace::grid(grid, tau)?,
            soc_trace,
            res_trace: res_trace.to_vec(),
            wasted_kwh: wasted,
            loss_kwh: loss,
            energy_cost,
            wear_events,
            total_cost: energy_cost + wear_cost,
            violations,
        })
    }
}

/// Free-function form of [`Simulator::run`] with net metering disabled.
pub fn simulate(
    policy: &mut dyn Policy,
    user_load: &LoadTrace,
    battery: &BatteryParams,
    initial_soc: BatterySoC,
    res: &ResParams,
    tariff: &Tariff,
    seed: u64,
) -> Result<SimResult> {
    Simulator::new(*battery, initial_soc, res.clone(), tariff.clone()).run(policy, user_load, seed)
}

/// Replays the battery update over a (user load, grid load) pair and lists
/// every slot that breaks the dynamics, a peak limit, the capacity, or the
/// demand.
///
/// After a violation the replay continues from the clamped state so later
/// slots are still checked.
pub fn check_feasible(
    user_load: &LoadTrace,
    grid_kw: &[f64],
    battery: &BatteryParams,
    res_trace: &[f64],
    initial_soc: BatterySoC,
    allow_selling: bool,
) -> Result<Vec<Violation>> {
    let n = user_load.len();
    if grid_kw.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: grid_kw.len(),
        });
    }
    if res_trace.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: res_trace.len(),
        });
    }
    let tau = user_load.slot_hours();
    let mut soc = initial_soc;
    let mut violations = Vec::new();
    for t in 0..n {
        let (x, y, e) = (user_load.values()[t], grid_kw[t], res_trace[t]);
        if y < -SOC_TOLERANCE && !allow_selling {
            violations.push(Violation {
                slot: t,
                kind: ViolationKind::NegativeGrid,
            });
        }
        match battery_step(soc, e, x, y, battery, tau) {
            Ok(out) => soc = out.soc,
            Err(kind) => {
                violations.push(Violation { slot: t, kind });
                let stored = (soc.stored_kwh() + (e - (x - y)) * tau).clamp(0.0, battery.capacity_kwh);
                soc = BatterySoC::new(stored, battery)?;
            }
        }
    }
    Ok(violations)
}
