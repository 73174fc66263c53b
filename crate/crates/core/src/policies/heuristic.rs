//! Battery-driven load-flattening heuristics: best effort, non-intrusive
//! load levelling (NILL) and the three stepping variants.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{battery_step, BatteryParams, Policy, PolicyState};

/// Slack used when testing a candidate grid load against the feasible range.
const RANGE_SLACK: f64 = 1e-12;

fn admissible(state: &PolicyState<'_>, y: f64) -> bool {
    let (lo, hi) = state.feasible_range();
    y >= lo - RANGE_SLACK && y <= hi + RANGE_SLACK
}

/// Best-effort rule: the feasible grid load closest to the previous one.
/// The first slot reports the demand.
pub fn best_effort(state: &PolicyState<'_>) -> f64 {
    match state.previous_grid() {
        Some(prev) => state.clamp(prev),
        None => state.clamp(state.load_kw),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BestEffort;

impl Policy for BestEffort {
    fn name(&self) -> String {
        "best_effort".into()
    }

    fn decide(&mut self, state: &PolicyState<'_>, _rng: &mut dyn RngCore) -> f64 {
        best_effort(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NillMode {
    Steady,
    /// Battery (nearly) full after light demand: target below the steady level.
    HighRecovery,
    /// Battery (nearly) empty after heavy demand: target above the steady level.
    LowRecovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NillParams {
    /// Initial steady-state target; the first demand sample when absent.
    pub initial_target_kw: Option<f64>,
    pub ewma_weight: f64,
    /// State-of-charge fractions that trigger the recovery modes.
    pub low_threshold: f64,
    pub high_threshold: f64,
    /// Recovery ends once the state of charge crosses this fraction.
    pub exit_fraction: f64,
    /// Recovery targets are `(1 ± recovery_factor)·K_ss`.
    pub recovery_factor: f64,
}

impl Default for NillParams {
    fn default() -> Self {
        Self {
            initial_target_kw: None,
            ewma_weight: 0.1,
            low_threshold: 0.02,
            high_threshold: 0.98,
            exit_fraction: 0.5,
            recovery_factor: 0.5,
        }
    }
}

impl NillParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.ewma_weight > 0.0
            && self.ewma_weight < 1.0
            && 0.0 <= self.low_threshold
            && self.low_threshold < self.exit_fraction
            && self.exit_fraction < self.high_threshold
            && self.high_threshold <= 1.0
            && (0.0..1.0).contains(&self.recovery_factor)
            && self.initial_target_kw.map_or(true, |k| k > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid NILL parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NillState {
    pub steady_target_kw: f64,
    pub mode: NillMode,
    pub ewma_kw: f64,
    pub ewma_weight: f64,
}

const MIN_TARGET_KW: f64 = 1e-3;

/// Non-intrusive load levelling.
///
/// Holds the grid load at a steady target while the battery can absorb the
/// difference. When the battery reaches its high (low) threshold the policy
/// enters a recovery mode with a lower (higher) target, and the steady target
/// is re-estimated from a moving average of the demand.
#[derive(Debug, Clone)]
pub struct Nill {
    params: NillParams,
    state: Option<NillState>,
}

impl Nill {
    pub fn new(params: NillParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, state: None })
    }

    pub fn state(&self) -> Option<&NillState> {
        self.state.as_ref()
    }
}

fn nill_target(s: &NillState, params: &NillParams) -> f64 {
    let f = params.recovery_factor;
    match s.mode {
        NillMode::Steady => s.steady_target_kw,
        NillMode::HighRecovery => (1.0 - f) * s.steady_target_kw,
        NillMode::LowRecovery => (1.0 + f) * s.steady_target_kw,
    }
}

/// One NILL decision: returns the grid load and the updated state.
pub fn nill(state: &PolicyState<'_>, nill_state: NillState, params: &NillParams) -> (f64, NillState) {
    let mut s = nill_state;
    s.ewma_kw = s.ewma_weight * state.load_kw + (1.0 - s.ewma_weight) * s.ewma_kw;
    let y = state.clamp(nill_target(&s, params));

    if state.battery.capacity_kwh > 0.0 {
        let next = battery_step(state.soc, state.res_kw, state.load_kw, y, state.battery, state.slot_hours)
            .map(|o| o.soc.fraction(state.battery))
            .unwrap_or_else(|_| state.soc.fraction(state.battery));
        s.mode = match s.mode {
            NillMode::Steady if next >= params.high_threshold => {
                s.steady_target_kw = s.ewma_kw.max(MIN_TARGET_KW);
                NillMode::HighRecovery
            }
            NillMode::Steady if next <= params.low_threshold => {
                s.steady_target_kw = s.ewma_kw.max(MIN_TARGET_KW);
                NillMode::LowRecovery
            }
            NillMode::HighRecovery if next <= params.exit_fraction => NillMode::Steady,
            NillMode::LowRecovery if next >= params.exit_fraction => NillMode::Steady,
            mode => mode,
        };
    }
    (y, s)
}

impl Policy for Nill {
    fn name(&self) -> String {
        "nill".into()
    }

    fn reset(&mut self) {
        self.state = None;
    }

    fn decide(&mut self, state: &PolicyState<'_>, _rng: &mut dyn RngCore) -> f64 {
        let current = self.state.unwrap_or_else(|| {
            let k = self
                .params
                .initial_target_kw
                .unwrap_or(state.load_kw)
                .max(MIN_TARGET_KW);
            NillState {
                steady_target_kw: k,
                mode: NillMode::Steady,
                ewma_kw: k,
                ewma_weight: self.params.ewma_weight,
            }
        });
        let (y, next) = nill(state, current, &self.params);
        self.state = Some(next);
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteppingVariant {
    LazyStepping,
    LazyCharging,
    RandomCharging,
}

impl SteppingVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            SteppingVariant::LazyStepping => "lazy_stepping",
            SteppingVariant::LazyCharging => "lazy_charging",
            SteppingVariant::RandomCharging => "random_charging",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteppingParams {
    pub beta_kw: f64,
    pub variant: SteppingVariant,
}

impl SteppingParams {
    /// Largest quantum for which moving one level is always battery-feasible:
    /// `min(P̂_c, P̂_d, B_max/τ)`.
    pub fn auto_beta(battery: &BatteryParams, slot_hours: f64) -> f64 {
        let eta = battery.one_way_efficiency();
        battery
            .peak_charge_kw
            .min(battery.peak_discharge_kw)
            .min(battery.capacity_kwh * eta / slot_hours)
    }

    /// Validates `beta_kw` against the battery, or picks the automatic quantum
    /// when it is `None`.
    pub fn new(
        variant: SteppingVariant,
        beta_kw: Option<f64>,
        battery: &BatteryParams,
        slot_hours: f64,
    ) -> Result<Self> {
        let max_beta = Self::auto_beta(battery, slot_hours);
        let beta_kw = beta_kw.unwrap_or(max_beta);
        if !(beta_kw > 0.0) || beta_kw > max_beta * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "stepping quantum {beta_kw} kW must lie in (0, {max_beta}] for this battery"
            )));
        }
        Ok(Self { beta_kw, variant })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Charging,
    Discharging,
}

/// Quantizes the grid load to multiples of `β`, choosing between the two
/// levels adjacent to the demand.
#[derive(Debug, Clone)]
pub struct Stepping {
    params: SteppingParams,
    direction: Direction,
}

impl Stepping {
    pub fn new(params: SteppingParams) -> Self {
        Self {
            params,
            direction: Direction::Charging,
        }
    }

    pub fn params(&self) -> &SteppingParams {
        &self.params
    }
}

/// The two quantization levels `⌊x/β⌋` and `⌈x/β⌉` adjacent to `x`.
pub fn adjacent_levels(x: f64, beta: f64) -> (i64, i64) {
    let r = x / beta;
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        let h = nearest as i64;
        (h, h)
    } else {
        (r.floor() as i64, r.ceil() as i64)
    }
}

/// One stepping decision. `rng` is only consumed by random charging.
pub fn stepping(state: &PolicyState<'_>, params: &SteppingParams, rng: &mut dyn RngCore) -> f64 {
    let mut direction = Direction::Charging;
    step_with(state, params, &mut direction, rng)
}

fn step_with(
    state: &PolicyState<'_>,
    params: &SteppingParams,
    direction: &mut Direction,
    rng: &mut dyn RngCore,
) -> f64 {
    let beta = params.beta_kw;
    let x = state.load_kw;
    let (lo, hi) = adjacent_levels(x, beta);
    let level = |h: i64| h as f64 * beta;
    let lo_ok = admissible(state, level(lo));
    let hi_ok = admissible(state, level(hi));
    let closer = || {
        if (x - level(lo)).abs() <= (level(hi) - x).abs() {
            lo
        } else {
            hi
        }
    };
    let h = match (lo_ok, hi_ok) {
        (false, false) => return state.clamp(x),
        (true, false) => lo,
        (false, true) => hi,
        (true, true) if lo == hi => lo,
        (true, true) => match params.variant {
            SteppingVariant::LazyStepping => match state.previous_grid() {
                Some(prev) => {
                    let p = prev / beta;
                    let (dl, dh) = ((lo as f64 - p).abs(), (hi as f64 - p).abs());
                    if (dl - dh).abs() <= 1e-9 {
                        closer()
                    } else if dl < dh {
                        lo
                    } else {
                        hi
                    }
                }
                None => closer(),
            },
            SteppingVariant::LazyCharging => match direction {
                Direction::Charging => hi,
                Direction::Discharging => lo,
            },
            SteppingVariant::RandomCharging => {
                if rng.random_bool(0.5) {
                    lo
                } else {
                    hi
                }
            }
        },
    };
    if lo != hi {
        match (h == hi, *direction) {
            (false, Direction::Charging) if !hi_ok => *direction = Direction::Discharging,
            (true, Direction::Discharging) if !lo_ok => *direction = Direction::Charging,
            _ => {}
        }
    }
    level(h)
}

impl Policy for Stepping {
    fn name(&self) -> String {
        self.params.variant.as_str().into()
    }

    fn reset(&mut self) {
        self.direction = Direction::Charging;
    }

    fn decide(&mut self, state: &PolicyState<'_>, rng: &mut dyn RngCore) -> f64 {
        step_with(state, &self.params, &mut self.direction, rng)
    }
}
