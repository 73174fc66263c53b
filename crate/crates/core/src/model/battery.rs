use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when comparing energies and powers against their limits.
pub const SOC_TOLERANCE: f64 = 1e-9;

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// Rechargeable battery limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub capacity_kwh: f64,
    pub peak_charge_kw: f64,
    pub peak_discharge_kw: f64,
    /// Long-run average discharge budget, used by the rate-constrained
    /// formulations only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_discharge_kw: Option<f64>,
    /// Cost charged once per slot in which the battery is used.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub wear_cost: f64,
    /// Round-trip efficiency in (0, 1]; split evenly between charge and
    /// discharge.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub round_trip_efficiency: f64,
}

impl BatteryParams {
    pub fn new(capacity_kwh: f64, peak_charge_kw: f64, peak_discharge_kw: f64) -> Result<Self> {
        let p = Self {
            capacity_kwh,
            peak_charge_kw,
            peak_discharge_kw,
            avg_discharge_kw: None,
            wear_cost: 0.0,
            round_trip_efficiency: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Symmetric peaks.
    pub fn symmetric(capacity_kwh: f64, peak_kw: f64) -> Result<Self> {
        Self::new(capacity_kwh, peak_kw, peak_kw)
    }

    /// No battery at all.
    pub fn none() -> Self {
        Self::new(0.0, 0.0, 0.0).expect("zero battery is valid")
    }

    pub fn with_wear_cost(mut self, wear_cost: f64) -> Self {
        self.wear_cost = wear_cost;
        self
    }

    pub fn with_efficiency(mut self, round_trip: f64) -> Result<Self> {
        self.round_trip_efficiency = round_trip;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("capacity", self.capacity_kwh),
            ("peak charge", self.peak_charge_kw),
            ("peak discharge", self.peak_discharge_kw),
            ("wear cost", self.wear_cost),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "battery {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if let Some(avg) = self.avg_discharge_kw {
            if !(avg >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "average discharge budget must be >= 0, got {avg}"
                )));
            }
        }
        let eta = self.round_trip_efficiency;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "round-trip efficiency must be in (0, 1], got {eta}"
            )));
        }
        Ok(())
    }

    /// One-way efficiency applied to both charging and discharging.
    pub fn one_way_efficiency(&self) -> f64 {
        self.round_trip_efficiency.sqrt()
    }

    /// Largest discharge power (kW) deliverable from `soc` over one slot.
    pub fn max_discharge_kw(&self, soc: BatterySoC, slot_hours: f64) -> f64 {
        let energy_limited = soc.stored_kwh() * self.one_way_efficiency() / slot_hours;
        self.peak_discharge_kw.min(energy_limited).max(0.0)
    }

    /// Largest charge power (kW, measured at the bus) that fits in the
    /// remaining capacity.
    pub fn max_charge_kw(&self, soc: BatterySoC, slot_hours: f64) -> f64 {
        let headroom = (self.capacity_kwh - soc.stored_kwh()).max(0.0);
        let energy_limited = headroom / (self.one_way_efficiency() * slot_hours);
        self.peak_charge_kw.min(energy_limited).max(0.0)
    }
}

/// Energy currently stored in the battery.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct BatterySoC(f64);

impl BatterySoC {
    pub fn new(stored_kwh: f64, params: &BatteryParams) -> Result<Self> {
        if !(stored_kwh >= 0.0 && stored_kwh <= params.capacity_kwh + SOC_TOLERANCE) {
            return Err(Error::InvalidParameter(format!(
                "state of charge {stored_kwh} outside [0, {}]",
                params.capacity_kwh
            )));
        }
        Ok(Self(stored_kwh.min(params.capacity_kwh)))
    }

    pub fn empty() -> Self {
        Self(0.0)
    }

    pub fn full(params: &BatteryParams) -> Self {
        Self(params.capacity_kwh)
    }

    pub fn stored_kwh(&self) -> f64 {
        self.0
    }

    /// Stored energy as a fraction of capacity; zero for a zero-capacity
    /// battery.
    pub fn fraction(&self, params: &BatteryParams) -> f64 {
        if params.capacity_kwh > 0.0 {
            self.0 / params.capacity_kwh
        } else {
            0.0
        }
    }
}

/// Why a single slot is physically infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Demand is not met: the battery cannot cover the deficit.
    Outage,
    PeakDischarge,
    PeakCharge,
    /// Energy bought from the grid would overflow the battery.
    Overcharge,
    /// Negative grid load while net metering is disabled.
    NegativeGrid,
}

impl ViolationKind {
    pub fn at(self, slot: usize) -> Error {
        Error::InfeasibleAction {
            slot,
            reason: format!("{self:?}"),
        }
    }
}

/// Result of one application of the battery update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub soc: BatterySoC,
    /// Renewable energy that could neither serve the load nor be stored.
    pub wasted_kwh: f64,
    /// Conversion losses inside the battery.
    pub loss_kwh: f64,
}

/// Applies one slot of the battery update
/// `B' = min{B + (e - (x - y))·τ, B_max}`.
///
/// Renewable energy serves the load first; any shortfall comes from the
/// battery, and any surplus charges it up to the peak-charge limit and the
/// remaining capacity. Surplus renewable energy beyond that is wasted.
/// Grid energy bought in excess of the load must fit in the battery.
pub fn battery_step(
    soc: BatterySoC,
    res_kw: f64,
    load_kw: f64,
    grid_kw: f64,
    params: &BatteryParams,
    slot_hours: f64,
) -> std::result::Result<StepOutcome, ViolationKind> {
    let eta = params.one_way_efficiency();
    let stored = soc.stored_kwh();
    let deficit = load_kw - grid_kw;
    let (discharge, grid_charge, res_left) = if deficit >= 0.0 {
        let from_res = res_kw.min(deficit);
        (deficit - from_res, 0.0, res_kw - from_res)
    } else {
        (0.0, -deficit, res_kw)
    };

    if discharge > params.peak_discharge_kw + SOC_TOLERANCE {
        return Err(ViolationKind::PeakDischarge);
    }
    if discharge * slot_hours / eta > stored + SOC_TOLERANCE {
        return Err(ViolationKind::Outage);
    }
    if grid_charge > params.peak_charge_kw + SOC_TOLERANCE {
        return Err(ViolationKind::PeakCharge);
    }
    if stored + grid_charge * slot_hours * eta > params.capacity_kwh + SOC_TOLERANCE {
        return Err(ViolationKind::Overcharge);
    }

    let after_grid = (stored - discharge * slot_hours / eta + grid_charge * slot_hours * eta)
        .clamp(0.0, params.capacity_kwh);
    let res_charge = res_left
        .min(params.peak_charge_kw - grid_charge)
        .min((params.capacity_kwh - after_grid) / (slot_hours * eta))
        .max(0.0);
    let next = (after_grid + res_charge * slot_hours * eta).clamp(0.0, params.capacity_kwh);
    let wasted_kwh = (res_left - res_charge).max(0.0) * slot_hours;
    let loss_kwh = (grid_charge + res_charge) * slot_hours * (1.0 - eta)
        + discharge * slot_hours * (1.0 / eta - 1.0);
    Ok(StepOutcome {
        soc: BatterySoC(next),
        wasted_kwh,
        loss_kwh,
    })
}

/// One row of the presets file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryPreset {
    pub model: String,
    #[serde(default)]
    pub capacities_kwh: Vec<f64>,
    #[serde(default)]
    pub peak_charge_kw: Vec<f64>,
    #[serde(default)]
    pub peak_discharge_kw: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_range_kwh: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_charge_range_kw: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_discharge_range_kw: Option<[f64; 2]>,
}

impl BatteryPreset {
    /// Resolves the preset to concrete parameters.
    ///
    /// `capacity_kwh` picks one of several listed capacities (required when
    /// more than one is listed). `peaks` overrides the peak values and is
    /// required whenever the preset does not pin them down.
    pub fn resolve(
        &self,
        capacity_kwh: Option<f64>,
        peaks: Option<(f64, f64)>,
    ) -> Result<BatteryParams> {
        let ambiguous = |what: &str| {
            Error::Config(format!(
                "preset '{}' is ambiguous ({what}); give explicit values",
                self.model
            ))
        };
        if let Some([lo, hi]) = self.capacity_range_kwh {
            let cap = capacity_kwh.ok_or_else(|| ambiguous("capacity is a range"))?;
            if cap < lo || cap > hi {
                return Err(Error::Config(format!(
                    "capacity {cap} outside the range [{lo}, {hi}] of '{}'",
                    self.model
                )));
            }
            let (c, d) = peaks.ok_or_else(|| ambiguous("peak power is a range"))?;
            return BatteryParams::new(cap, c, d);
        }

        let index = match (self.capacities_kwh.len(), capacity_kwh) {
            (0, _) => return Err(ambiguous("no capacity listed")),
            (1, None) => 0,
            (_, None) => return Err(ambiguous("several capacities listed")),
            (_, Some(cap)) => self
                .capacities_kwh
                .iter()
                .position(|c| (c - cap).abs() < 1e-9)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "capacity {cap} is not offered by '{}' (options {:?})",
                        self.model, self.capacities_kwh
                    ))
                })?,
        };
        let capacity = self.capacities_kwh[index];
        if let Some((c, d)) = peaks {
            return BatteryParams::new(capacity, c, d);
        }
        let n = self.capacities_kwh.len();
        let pick = |list: &[f64]| -> Option<f64> {
            match list.len() {
                1 => Some(list[0]),
                len if len == n => Some(list[index]),
                _ => None,
            }
        };
        match (pick(&self.peak_charge_kw), pick(&self.peak_discharge_kw)) {
            (Some(c), Some(d)) => BatteryParams::new(capacity, c, d),
            _ => Err(ambiguous("peak power cannot be matched to capacity")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryPresets {
    pub battery: Vec<BatteryPreset>,
}

impl BatteryPresets {
    /// Presets shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml(include_str!("../../presets/batteries.toml"))
            .expect("shipped presets parse")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn get(&self, model: &str) -> Option<&BatteryPreset> {
        self.battery
            .iter()
            .find(|p| p.model.eq_ignore_ascii_case(model))
    }

    pub fn resolve(
        &self,
        model: &str,
        capacity_kwh: Option<f64>,
        peaks: Option<(f64, f64)>,
    ) -> Result<BatteryParams> {
        self.get(model)
            .ok_or_else(|| Error::Config(format!("unknown battery preset '{model}'")))?
            .resolve(capacity_kwh, peaks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(cap: f64) -> BatteryParams {
        BatteryParams::symmetric(cap, 10.0).unwrap()
    }

    #[test]
    fn step_balanced_slot() {
        let p = big(4.0);
        let out = battery_step(BatterySoC::new(2.0, &p).unwrap(), 1.0, 3.0, 2.0, &p, 1.0).unwrap();
        assert_eq!(out.soc.stored_kwh(), 2.0);
        assert_eq!(out.wasted_kwh, 0.0);
    }

    #[test]
    fn step_overflow_is_wasted() {
        let p = big(4.0);
        let out = battery_step(BatterySoC::full(&p), 2.0, 1.0, 1.0, &p, 1.0).unwrap();
        assert_eq!(out.soc.stored_kwh(), 4.0);
        assert_eq!(out.wasted_kwh, 2.0);
    }

    #[test]
    fn step_peak_discharge_violation() {
        let p = BatteryParams::new(4.0, 2.0, 2.0).unwrap();
        let soc = BatterySoC::new(1.0, &p).unwrap();
        assert_eq!(
            battery_step(soc, 0.0, 4.0, 1.0, &p, 1.0),
            Err(ViolationKind::PeakDischarge)
        );
    }

    #[test]
    fn step_outage_and_overcharge() {
        let p = big(1.0);
        assert_eq!(
            battery_step(BatterySoC::empty(), 0.0, 5.0, 0.0, &p, 1.0),
            Err(ViolationKind::Outage)
        );
        assert_eq!(
            battery_step(BatterySoC::full(&p), 0.0, 0.0, 0.5, &p, 1.0),
            Err(ViolationKind::Overcharge)
        );
    }

    #[test]
    fn res_charging_respects_peak_charge() {
        let p = BatteryParams::new(10.0, 1.0, 1.0).unwrap();
        let out = battery_step(BatterySoC::empty(), 3.0, 0.0, 0.0, &p, 1.0).unwrap();
        assert_eq!(out.soc.stored_kwh(), 1.0);
        assert_eq!(out.wasted_kwh, 2.0);
    }

    #[test]
    fn lossy_battery_accounts_losses() {
        let p = big(10.0).with_efficiency(0.81).unwrap();
        let out = battery_step(BatterySoC::empty(), 0.0, 0.0, 2.0, &p, 1.0).unwrap();
        assert!((out.soc.stored_kwh() - 1.8).abs() < 1e-12);
        assert!((out.loss_kwh - 0.2).abs() < 1e-12);
    }

    #[test]
    fn presets_resolve() {
        let presets = BatteryPresets::builtin();
        let tesla = presets.resolve("Tesla Powerwall 2", None, None).unwrap();
        assert_eq!(
            (tesla.capacity_kwh, tesla.peak_charge_kw, tesla.peak_discharge_kw),
            (13.5, 5.0, 5.0)
        );
        let lg = presets.resolve("LG RESU 48V", Some(5.9), None).unwrap();
        assert_eq!((lg.peak_charge_kw, lg.peak_discharge_kw), (4.2, 4.2));
        let sun = presets.resolve("Sunverge SIS-6848", Some(15.5), None).unwrap();
        assert_eq!((sun.peak_charge_kw, sun.peak_discharge_kw), (6.4, 6.0));
        assert!(presets.resolve("Powervault G200-LI-2/4/6KWH", Some(4.0), None).is_err());
        let pv = presets
            .resolve("Powervault G200-LI-2/4/6KWH", Some(4.0), Some((1.2, 1.4)))
            .unwrap();
        assert_eq!(pv.capacity_kwh, 4.0);
        assert!(presets.resolve("SonnenBatterie eco", Some(8.0), None).is_err());
        assert!(presets.resolve("SonnenBatterie eco", Some(20.0), Some((3.0, 3.0))).is_err());
        assert!(presets.resolve("unknown", None, None).is_err());
    }

    #[test]
    fn presets_round_trip_through_toml() {
        let presets = BatteryPresets::builtin();
        let text = toml::to_string(&presets).unwrap();
        assert_eq!(BatteryPresets::from_toml(&text).unwrap(), presets);
        for preset in &presets.battery {
            for &cap in &preset.capacities_kwh {
                if let Ok(params) = preset.resolve(Some(cap), None) {
                    let text = toml::to_string(&params).unwrap();
                    let back: BatteryParams = toml::from_str(&text).unwrap();
                    assert_eq!(back, params);
                }
            }
        }
    }
}
