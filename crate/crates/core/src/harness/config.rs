//! Experiment configuration, read from a TOML file.
//!
//! ```toml
//! seed = 7
//! alphas = [0.0, 0.5, 1.0]
//!
//! [trace]
//! source = "synthetic"
//! length = 48
//! generator = { kind = "bernoulli", q_x = 0.4, peak_kw = 2.0 }
//!
//! [battery]
//! preset = "Tesla Powerwall 2"
//!
//! [tariff]
//! boundaries = [0, 16, 48]
//! prices = [0.1, 0.3]
//!
//! [policy]
//! id = "offline_piecewise"
//!
//! [[measures]]
//! kind = "variance"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::SyntheticSpec;
use crate::error::{Error, Result};
use crate::measures::Kernel;
use crate::model::{BatteryParams, BatteryPresets, ResParams, Tariff};
use crate::policies::{NillParams, SteppingParams, SteppingVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TraceSource {
    File {
        path: PathBuf,
        /// Resample to this slot duration.
        #[serde(default)]
        slot_hours: Option<f64>,
    },
    Synthetic(SyntheticSpec),
}

/// A battery preset (optionally picking a capacity and overriding peaks) or
/// explicit parameters. Without any field the household has no battery.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySpec {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub capacity_kwh: Option<f64>,
    #[serde(default)]
    pub peak_charge_kw: Option<f64>,
    #[serde(default)]
    pub peak_discharge_kw: Option<f64>,
    #[serde(default)]
    pub wear_cost: f64,
    #[serde(default)]
    pub round_trip_efficiency: Option<f64>,
}

impl BatterySpec {
    pub fn resolve(&self) -> Result<BatteryParams> {
        let peaks = match (self.peak_charge_kw, self.peak_discharge_kw) {
            (Some(c), Some(d)) => Some((c, d)),
            (None, None) => None,
            _ => return Err(Error::Config("give both peak_charge_kw and peak_discharge_kw".into())),
        };
        let params = match (&self.preset, self.capacity_kwh, peaks) {
            (Some(model), cap, peaks) => BatteryPresets::builtin().resolve(model, cap, peaks)?,
            (None, Some(cap), Some((c, d))) => BatteryParams::new(cap, c, d)?,
            (None, None, None) => BatteryParams::none(),
            _ => {
                return Err(Error::Config(
                    "an explicit battery needs capacity_kwh, peak_charge_kw and peak_discharge_kw".into(),
                ))
            }
        };
        let params = params.with_wear_cost(self.wear_cost);
        match self.round_trip_efficiency {
            Some(eta) => params.with_efficiency(eta),
            None => Ok(params),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSpec {
    pub boundaries: Vec<usize>,
    pub prices: Vec<f64>,
}

impl Default for TariffSpec {
    fn default() -> Self {
        Self {
            boundaries: vec![0, 1],
            prices: vec![1.0],
        }
    }
}

impl TariffSpec {
    pub fn resolve(&self) -> Result<Tariff> {
        Tariff::new(self.boundaries.clone(), self.prices.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// Sample the kernel every slot the battery allows.
    #[default]
    Plain,
    StoreAndHide,
    BestEffortRes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Reports the demand unchanged.
    Null,
    BestEffort,
    Nill {
        #[serde(flatten)]
        params: NillParams,
    },
    Stepping {
        variant: SteppingVariant,
        /// Quantum; the largest feasible one when absent.
        #[serde(default)]
        beta_kw: Option<f64>,
    },
    OfflineConstant {
        /// Target load; the mean demand when absent.
        #[serde(default)]
        target_kw: Option<f64>,
    },
    OfflinePiecewise,
    DriftPlusPenalty {
        v: f64,
        #[serde(default)]
        target_kw: Option<f64>,
        #[serde(default)]
        b_ref_kwh: Option<f64>,
    },
    Kernel {
        kernel: Kernel,
        peak_kw: f64,
        #[serde(default)]
        mode: KernelMode,
        #[serde(default)]
        storage_slots: usize,
    },
    /// A policy table written by the MDP solver.
    Mdp { table: PathBuf },
}

impl PolicySpec {
    pub fn label(&self) -> String {
        match self {
            PolicySpec::Null => "null".into(),
            PolicySpec::BestEffort => "best_effort".into(),
            PolicySpec::Nill { .. } => "nill".into(),
            PolicySpec::Stepping { variant, .. } => variant.as_str().into(),
            PolicySpec::OfflineConstant { .. } => "offline_constant".into(),
            PolicySpec::OfflinePiecewise => "offline_piecewise".into(),
            PolicySpec::DriftPlusPenalty { .. } => "drift_plus_penalty".into(),
            PolicySpec::Kernel { mode, .. } => match mode {
                KernelMode::Plain => "kernel".into(),
                KernelMode::StoreAndHide => "store_and_hide".into(),
                KernelMode::BestEffortRes => "best_effort_res".into(),
            },
            PolicySpec::Mdp { .. } => "mdp".into(),
        }
    }

    pub fn is_offline(&self) -> bool {
        matches!(self, PolicySpec::OfflineConstant { .. } | PolicySpec::OfflinePiecewise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    /// Mean squared deviation of the grid load from a target (the mean demand
    /// when absent).
    Variance {
        #[serde(default)]
        target_kw: Option<f64>,
    },
    FeatureCount { threshold_kw: f64 },
    /// Smoothed plug-in mutual information between demand and grid load on a
    /// uniform quantizer spanning both traces.
    EmpiricalMi {
        bins: usize,
        #[serde(default)]
        kappa: Option<f64>,
    },
    EmpiricalKl {
        bins: usize,
        #[serde(default)]
        kappa: Option<f64>,
    },
}

impl MeasureSpec {
    pub fn label(&self) -> &'static str {
        match self {
            MeasureSpec::Variance { .. } => "variance",
            MeasureSpec::FeatureCount { .. } => "feature_count",
            MeasureSpec::EmpiricalMi { .. } => "empirical_mi",
            MeasureSpec::EmpiricalKl { .. } => "empirical_kl",
        }
    }
}

fn default_alphas() -> Vec<f64> {
    vec![0.5]
}

fn default_measures() -> Vec<MeasureSpec> {
    vec![MeasureSpec::Variance { target_kw: None }]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub trace: TraceSource,
    #[serde(default)]
    pub battery: BatterySpec,
    #[serde(default)]
    pub initial_soc_kwh: f64,
    #[serde(default)]
    pub res: Option<ResParams>,
    #[serde(default)]
    pub tariff: TariffSpec,
    #[serde(default)]
    pub allow_selling: bool,
    pub policy: PolicySpec,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_measures")]
    pub measures: Vec<MeasureSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    /// Makes relative file references absolute with respect to `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let TraceSource::File { path, .. } = &mut self.trace {
            fix(path);
        }
        if let PolicySpec::Mdp { table } = &mut self.policy {
            fix(table);
        }
        fix(&mut self.output_dir);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every parameter and reference before a run starts. All
    /// failures are reported as [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        self.validate_inner().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    fn validate_inner(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Config("alpha grid is empty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("alpha {a} outside [0, 1]")));
        }
        let slot_hours = match &self.trace {
            TraceSource::File { path, slot_hours } => {
                if !path.is_file() {
                    return Err(Error::Config(format!("trace file {} not found", path.display())));
                }
                *slot_hours
            }
            TraceSource::Synthetic(spec) => {
                spec.validate()?;
                Some(spec.slot_hours)
            }
        };
        let battery = self.battery.resolve()?;
        if !(0.0..=battery.capacity_kwh).contains(&self.initial_soc_kwh) {
            return Err(Error::Config(format!(
                "initial state of charge {} kWh outside [0, {}]",
                self.initial_soc_kwh, battery.capacity_kwh
            )));
        }
        self.tariff.resolve()?;
        if let Some(res) = &self.res {
            res.validate()?;
        }
        match &self.policy {
            PolicySpec::Nill { params } => params.validate()?,
            PolicySpec::Stepping { variant, beta_kw } => {
                if let Some(tau) = slot_hours {
                    SteppingParams::new(*variant, *beta_kw, &battery, tau)?;
                } else if battery.capacity_kwh <= 0.0 {
                    return Err(Error::Config("stepping needs a battery".into()));
                }
            }
            PolicySpec::OfflineConstant { .. } | PolicySpec::OfflinePiecewise => {
                if self.res.is_some() {
                    return Err(Error::Config("offline programs do not model renewable input".into()));
                }
                if battery.round_trip_efficiency != 1.0 {
                    return Err(Error::Config("offline programs need a lossless battery".into()));
                }
            }
            PolicySpec::DriftPlusPenalty { v, .. } => {
                if !(*v >= 0.0) {
                    return Err(Error::Config(format!("drift-plus-penalty weight {v} must be >= 0")));
                }
            }
            PolicySpec::Kernel { kernel, peak_kw, .. } => {
                Kernel::new(kernel.input.clone(), kernel.output.clone(), kernel.rows.clone())?;
                crate::policies::stochastic::StochasticKernelPolicy::new(kernel.clone(), *peak_kw)?;
            }
            PolicySpec::Mdp { table } => {
                let text = std::fs::read_to_string(table)
                    .map_err(|e| Error::Config(format!("policy table {}: {e}", table.display())))?;
                crate::policies::mdp::PolicyTable::from_json(&text)?;
            }
            PolicySpec::Null | PolicySpec::BestEffort => {}
        }
        for m in &self.measures {
            match m {
                MeasureSpec::FeatureCount { threshold_kw } if !(*threshold_kw > 0.0) => {
                    return Err(Error::Config("feature threshold must be positive".into()))
                }
                MeasureSpec::EmpiricalMi { bins, kappa } | MeasureSpec::EmpiricalKl { bins, kappa } => {
                    if *bins == 0 {
                        return Err(Error::Config("quantizer needs at least one bin".into()));
                    }
                    if kappa.is_some_and(|k| !(k >= 0.0)) {
                        return Err(Error::Config("smoothing must be nonnegative".into()));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn default_soc_levels() -> usize {
    crate::policies::mdp::DEFAULT_SOC_LEVELS
}

fn unit() -> f64 {
    1.0
}

/// An MDP problem as written in a config file: demand levels with an i.i.d.
/// pmf or a Markov transition matrix, a battery, and a state-of-charge grid
/// of evenly spaced levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSpec {
    pub loads_kw: Vec<f64>,
    /// I.i.d. demand distribution (give this or `transition`).
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
    #[serde(default)]
    pub transition: Option<Vec<Vec<f64>>>,
    /// Initial demand distribution for a Markov model; uniform when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    /// Price per demand level; zero when absent.
    #[serde(default)]
    pub prices: Option<Vec<f64>>,
    pub battery: BatterySpec,
    #[serde(default = "default_soc_levels")]
    pub soc_levels: usize,
    #[serde(default = "super::generate::default_slot_hours")]
    pub slot_hours: f64,
    pub target_kw: f64,
    #[serde(default = "unit")]
    pub privacy_weight: f64,
    #[serde(default)]
    pub lambda: f64,
    pub horizon: crate::policies::mdp::Horizon,
    #[serde(default)]
    pub allow_selling: bool,
}

impl MdpSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_model(&self) -> Result<crate::policies::mdp::MdpModel> {
        let k = self.loads_kw.len();
        let battery = self.battery.resolve()?;
        if self.soc_levels < 2 && battery.capacity_kwh > 0.0 {
            return Err(Error::Config("need at least two state-of-charge levels".into()));
        }
        let (transition, initial) = match (&self.probs, &self.transition) {
            (Some(p), None) => (vec![p.clone(); k], p.clone()),
            (None, Some(t)) => (
                t.clone(),
                self.initial.clone().unwrap_or_else(|| vec![1.0 / k as f64; k]),
            ),
            _ => return Err(Error::Config("give exactly one of probs and transition".into())),
        };
        let prices = self.prices.clone().unwrap_or_else(|| vec![0.0; k]);
        if prices.len() != k {
            return Err(Error::Config("one price per demand level".into()));
        }
        let levels = if battery.capacity_kwh > 0.0 { self.soc_levels } else { 1 };
        let model = crate::policies::mdp::MdpModel {
            exo: self
                .loads_kw
                .iter()
                .zip(&prices)
                .map(|(&load_kw, &price)| crate::policies::mdp::ExoState { load_kw, price })
                .collect(),
            transition,
            initial,
            soc_levels: (0..levels)
                .map(|i| if levels == 1 { 0.0 } else { battery.capacity_kwh * i as f64 / (levels - 1) as f64 })
                .collect(),
            battery,
            slot_hours: self.slot_hours,
            target_kw: self.target_kw,
            privacy_weight: self.privacy_weight,
            lambda: self.lambda,
            horizon: self.horizon,
            allow_selling: self.allow_selling,
        };
        model.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7
alphas = [0.0, 0.5, 1.0]

[trace]
source = "synthetic"
length = 48
generator = { kind = "bernoulli", q_x = 0.4, peak_kw = 2.0 }

[battery]
preset = "Tesla Powerwall 2"

[tariff]
boundaries = [0, 16, 48]
prices = [0.1, 0.3]

[policy]
id = "offline_piecewise"

[[measures]]
kind = "variance"

[[measures]]
kind = "feature_count"
threshold_kw = 0.5
"#;

    #[test]
    fn sample_parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.battery.resolve().unwrap().capacity_kwh, 13.5);
        assert_eq!(cfg.measures.len(), 2);
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bad_alpha_is_config_error() {
        let text = SAMPLE.replace("[0.0, 0.5, 1.0]", "[0.0, 1.5]");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn ambiguous_preset_needs_peaks() {
        let spec = BatterySpec {
            preset: Some("Powervault G200-LI-2/4/6KWH".into()),
            capacity_kwh: Some(4.0),
            ..Default::default()
        };
        assert!(spec.resolve().is_err());
        let explicit = BatterySpec {
            capacity_kwh: Some(4.0),
            peak_charge_kw: Some(1.2),
            peak_discharge_kw: Some(1.4),
            ..Default::default()
        };
        assert_eq!(explicit.resolve().unwrap().peak_discharge_kw, 1.4);
    }

    #[test]
    fn nill_defaults_fill_in() {
        let text = SAMPLE.replace("id = \"offline_piecewise\"", "id = \"nill\"\newma_weight = 0.2");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        match cfg.policy {
            PolicySpec::Nill { params } => {
                assert_eq!(params.ewma_weight, 0.2);
                assert_eq!(params.high_threshold, 0.98);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mdp_spec_builds_model() {
        let text = r#"
loads_kw = [0.0, 1.0]
probs = [0.5, 0.5]
soc_levels = 3
slot_hours = 1.0
target_kw = 0.5
horizon = { kind = "finite", steps = 4 }
[battery]
capacity_kwh = 1.0
peak_charge_kw = 1.0
peak_discharge_kw = 1.0
"#;
        let m = MdpSpec::from_toml(text).unwrap().to_model().unwrap();
        assert_eq!(m.soc_levels, vec![0.0, 0.5, 1.0]);
        assert_eq!(m.num_states(), 6);
    }
}
