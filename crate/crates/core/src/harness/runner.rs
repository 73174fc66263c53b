//! Runs a configured experiment over its trade-off grid and writes the
//! results.
//!
//! Output files in the output directory:
//!
//! * `results.csv`: one row per (α, measure) with columns
//!   `alpha,policy,measure,value,cost,feasible,error`;
//! * `timings.csv`: wall-clock seconds per α point (`alpha,runtime_s`);
//! * `manifest.json`: config hash, seed and run summary.
//!
//! `results.csv` and `manifest.json` depend only on the config and seed.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, KernelMode, MeasureSpec, PolicySpec, TraceSource};
use super::generate::generate;
use super::ingest::ingest_csv;
use crate::error::{Error, Result};
use crate::measures::{empirical_kl, empirical_mi_smoothed, feature_count, load_variance, Quantizer};
use crate::model::{derive_seed, BatteryParams, BatterySoC, LoadTrace, NullPolicy, Policy, ResParams, SimResult, Simulator, Tariff};
use crate::policies::mdp::{MdpPolicy, PolicyTable};
use crate::policies::stochastic::{BestEffortRes, ScheduleReplay, StochasticKernelPolicy, StoreAndHide};
use crate::policies::{
    offline_constant_target, offline_piecewise_target, BestEffort, DriftPlusPenalty, Nill, OfflineProblem, Stepping,
    SteppingParams, Target,
};

pub const MANIFEST_SCHEMA: &str = "smprivacy.manifest/1";

const TRACE_STREAM: u64 = 0xA11CE;
const RES_STREAM: u64 = 0xB0B;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub alpha: f64,
    pub policy: String,
    pub measure: String,
    pub value: Option<f64>,
    pub cost: Option<f64>,
    pub feasible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub trace_sha256: String,
    pub trace_slots: usize,
    pub slot_hours: f64,
    pub alpha_points: usize,
    pub rows: usize,
    pub failed_rows: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<(f64, f64)>,
    pub manifest: Manifest,
}

/// Everything a single trade-off point needs, resolved once per experiment.
struct Setup {
    trace: LoadTrace,
    battery: BatteryParams,
    initial_soc: BatterySoC,
    tariff: Tariff,
    res_trace: Vec<f64>,
    table: Option<PolicyTable>,
}

/// Loads (or generates) the user load named by the config.
pub fn load_trace(cfg: &ExperimentConfig) -> Result<LoadTrace> {
    match &cfg.trace {
        TraceSource::File { path, slot_hours } => ingest_csv(path, *slot_hours),
        TraceSource::Synthetic(spec) => {
            let mut spec = spec.clone();
            spec.seed.get_or_insert(derive_seed(cfg.seed, TRACE_STREAM));
            generate(&spec)
        }
    }
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let trace = load_trace(cfg)?;
    let battery = cfg.battery.resolve()?;
    let initial_soc = BatterySoC::new(cfg.initial_soc_kwh, &battery)?;
    let tariff = cfg.tariff.resolve()?;
    let res = cfg.res.clone().unwrap_or_else(ResParams::none);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, RES_STREAM));
    let res_trace = res.generate(trace.len(), &mut rng)?;
    let table = match &cfg.policy {
        PolicySpec::Mdp { table } => {
            let text = std::fs::read_to_string(table).map_err(|e| Error::Io(format!("{}: {e}", table.display())))?;
            Some(PolicyTable::from_json(&text)?)
        }
        _ => None,
    };
    Ok(Setup {
        trace,
        battery,
        initial_soc,
        tariff,
        res_trace,
        table,
    })
}

fn build_policy(cfg: &ExperimentConfig, s: &Setup, alpha: f64) -> Result<Box<dyn Policy>> {
    let tau = s.trace.slot_hours();
    Ok(match &cfg.policy {
        PolicySpec::Null => Box::new(NullPolicy),
        PolicySpec::BestEffort => Box::new(BestEffort),
        PolicySpec::Nill { params } => Box::new(Nill::new(*params)?),
        PolicySpec::Stepping { variant, beta_kw } => {
            Box::new(Stepping::new(SteppingParams::new(*variant, *beta_kw, &s.battery, tau)?))
        }
        PolicySpec::OfflineConstant { target_kw } => {
            let problem = offline_problem(cfg, s, alpha)
                .with_target(Target::Fixed(target_kw.unwrap_or_else(|| s.trace.mean())));
            let sol = offline_constant_target(&problem)?;
            Box::new(ScheduleReplay {
                label: cfg.policy.label(),
                grid_kw: sol.grid_kw,
            })
        }
        PolicySpec::OfflinePiecewise => {
            let sol = offline_piecewise_target(&offline_problem(cfg, s, alpha))?;
            Box::new(ScheduleReplay {
                label: cfg.policy.label(),
                grid_kw: sol.grid_kw,
            })
        }
        PolicySpec::DriftPlusPenalty { v, target_kw, b_ref_kwh } => {
            let mut p = DriftPlusPenalty::new(*v, alpha, target_kw.unwrap_or_else(|| s.trace.mean()))?;
            p.b_ref_kwh = *b_ref_kwh;
            Box::new(p)
        }
        PolicySpec::Kernel {
            kernel,
            peak_kw,
            mode,
            storage_slots,
        } => {
            let policy = StochasticKernelPolicy::new(kernel.clone(), *peak_kw)?;
            match mode {
                KernelMode::Plain => Box::new(policy),
                KernelMode::StoreAndHide => Box::new(StoreAndHide {
                    policy,
                    storage_slots: *storage_slots,
                }),
                KernelMode::BestEffortRes => Box::new(BestEffortRes { policy }),
            }
        }
        PolicySpec::Mdp { .. } => Box::new(MdpPolicy::new(s.table.clone().expect("table loaded in setup"))),
    })
}

fn offline_problem(cfg: &ExperimentConfig, s: &Setup, alpha: f64) -> OfflineProblem {
    let mut p = OfflineProblem::new(s.trace.clone(), s.tariff.clone(), alpha, s.battery)
        .with_initial_soc(s.initial_soc)
        .with_target(Target::Free);
    p.allow_selling = cfg.allow_selling;
    p
}

/// Evaluates one configured measure on a (user load, grid load) pair.
pub fn evaluate_measure(m: &MeasureSpec, user: &LoadTrace, grid: &LoadTrace) -> Result<f64> {
    let quantizer = |bins: usize| {
        let all = user.values().iter().chain(grid.values());
        let lo = all.clone().copied().fold(0.0, f64::min);
        let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        let hi = if hi > lo { hi } else { lo + 1.0 };
        Quantizer::uniform(lo, hi, bins)
    };
    match m {
        MeasureSpec::Variance { target_kw } => load_variance(grid, target_kw.unwrap_or_else(|| user.mean())),
        MeasureSpec::FeatureCount { threshold_kw } => Ok(feature_count(grid, *threshold_kw) as f64),
        MeasureSpec::EmpiricalMi { bins, kappa } => empirical_mi_smoothed(user, grid, &quantizer(*bins)?, *kappa),
        MeasureSpec::EmpiricalKl { bins, kappa } => empirical_kl(user, grid, &quantizer(*bins)?, *kappa),
    }
}

fn run_point(cfg: &ExperimentConfig, s: &Setup, index: usize, alpha: f64) -> Vec<ResultRow> {
    let label = cfg.policy.label();
    let row = |measure: &str, value, cost, feasible, error| ResultRow {
        alpha,
        policy: label.clone(),
        measure: measure.to_string(),
        value,
        cost,
        feasible,
        error,
    };
    let sim = Simulator::new(s.battery, s.initial_soc, ResParams::none(), s.tariff.clone()).with_selling(cfg.allow_selling);
    let outcome: Result<SimResult> = build_policy(cfg, s, alpha).and_then(|mut policy| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));
        sim.run_with_res(policy.as_mut(), &s.trace, &s.res_trace, &mut rng)
    });
    match outcome {
        Err(e) => vec![row("", None, None, false, Some(e.to_string()))],
        Ok(result) if !result.violations.is_empty() => {
            let msg = format!(
                "{} constraint violations, first at slot {}",
                result.violations.len(),
                result.violations[0].slot
            );
            cfg.measures
                .iter()
                .map(|m| row(m.label(), None, Some(result.total_cost), false, Some(msg.clone())))
                .collect()
        }
        Ok(result) => cfg
            .measures
            .iter()
            .map(|m| match evaluate_measure(m, &s.trace, &result.grid_load) {
                Ok(v) => row(m.label(), Some(v), Some(result.total_cost), true, None),
                Err(e) => row(m.label(), None, Some(result.total_cost), true, Some(e.to_string())),
            })
            .collect(),
    }
}

/// Runs the configured policy once at trade-off weight `alpha` and returns
/// the user load with the simulation result.
pub fn simulate_config(cfg: &ExperimentConfig, alpha: f64) -> Result<(LoadTrace, SimResult)> {
    cfg.validate()?;
    let s = setup(cfg)?;
    let sim = Simulator::new(s.battery, s.initial_soc, ResParams::none(), s.tariff.clone()).with_selling(cfg.allow_selling);
    let mut policy = build_policy(cfg, &s, alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0));
    let result = sim.run_with_res(policy.as_mut(), &s.trace, &s.res_trace, &mut rng)?;
    Ok((s.trace, result))
}

/// Per-slot CSV of a simulation: `slot,x,y,res,soc,price`, where `soc` is the
/// state of charge at the end of the slot.
pub fn write_simulation_csv<W: Write>(user: &LoadTrace, result: &SimResult, tariff: &Tariff, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "x", "y", "res", "soc", "price"])?;
    for t in 0..user.len() {
        w.write_record([
            t.to_string(),
            user.values()[t].to_string(),
            result.grid_load.values()[t].to_string(),
            result.res_trace[t].to_string(),
            result.soc_trace[t + 1].to_string(),
            tariff.price_at(t).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs every α point (in parallel) and collects rows in grid order. Errors
/// at a single point are recorded in its rows; only setup failures abort
/// the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let s = setup(cfg)?;
    let points: Vec<(Vec<ResultRow>, f64)> = cfg
        .alphas
        .par_iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let start = Instant::now();
            let rows = run_point(cfg, &s, i, alpha);
            (rows, start.elapsed().as_secs_f64())
        })
        .collect();
    let timings = cfg.alphas.iter().zip(&points).map(|(a, p)| (*a, p.1)).collect();
    let rows: Vec<ResultRow> = points.into_iter().flat_map(|p| p.0).collect();

    let config_json = serde_json::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let trace_bytes: Vec<u8> = s.trace.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_hex(config_json.as_bytes()),
        seed: cfg.seed,
        trace_sha256: sha256_hex(&trace_bytes),
        trace_slots: s.trace.len(),
        slot_hours: s.trace.slot_hours(),
        alpha_points: cfg.alphas.len(),
        rows: rows.len(),
        failed_rows: rows.iter().filter(|r| !r.feasible || r.error.is_some()).count(),
        files: vec!["results.csv".into(), "timings.csv".into(), "manifest.json".into()],
    };
    Ok(ExperimentOutput {
        rows,
        timings,
        manifest,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "policy", "measure", "value", "cost", "feasible", "error"])?;
    for r in rows {
        w.write_record([
            r.alpha.to_string(),
            r.policy.clone(),
            r.measure.clone(),
            fmt_opt(r.value),
            fmt_opt(r.cost),
            r.feasible.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the three output files into `dir`, creating it if needed.
pub fn write_experiment(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let results = dir.join("results.csv");
    write_results_csv(&output.rows, std::fs::File::create(&results)?)?;

    let timings = dir.join("timings.csv");
    let mut w = csv::Writer::from_path(&timings)?;
    w.write_record(["alpha", "runtime_s"])?;
    for (a, t) in &output.timings {
        w.write_record([a.to_string(), format!("{t:.6}")])?;
    }
    w.flush()?;

    let manifest = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&output.manifest).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&manifest, json + "\n")?;
    Ok(vec![results, timings, manifest])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{BatterySpec, TariffSpec};
    use crate::harness::generate::{Generator, SyntheticSpec};

    fn config(policy: PolicySpec, alphas: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig {
            seed: 3,
            output_dir: PathBuf::from("unused"),
            trace: TraceSource::Synthetic(SyntheticSpec::new(Generator::Bernoulli { q_x: 0.5, peak_kw: 2.0 }, 24, 1)),
            battery: BatterySpec {
                capacity_kwh: Some(2.0),
                peak_charge_kw: Some(2.0),
                peak_discharge_kw: Some(2.0),
                ..Default::default()
            },
            initial_soc_kwh: 0.0,
            res: None,
            tariff: TariffSpec {
                boundaries: vec![0, 8, 24],
                prices: vec![0.1, 0.3],
            },
            allow_selling: false,
            policy,
            alphas,
            measures: vec![MeasureSpec::Variance { target_kw: None }],
        }
    }

    #[test]
    fn null_policy_single_row() {
        let cfg = config(PolicySpec::Null, vec![0.5]);
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 1);
        let trace = load_trace(&cfg).unwrap();
        let r = &out.rows[0];
        assert!(r.feasible);
        assert_eq!(r.value, Some(load_variance(&trace, trace.mean()).unwrap()));
        let prices = cfg.tariff.resolve().unwrap().slot_prices(trace.len());
        let cost: f64 = trace.values().iter().zip(&prices).map(|(x, c)| 0.5 * x * c).sum();
        assert!((r.cost.unwrap() - cost).abs() < 1e-12);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let cfg = config(PolicySpec::OfflinePiecewise, vec![0.0, 0.5, 1.0]);
        let render = || {
            let out = run_experiment(&cfg).unwrap();
            let mut buf = Vec::new();
            write_results_csv(&out.rows, &mut buf).unwrap();
            (buf, serde_json::to_string(&out.manifest).unwrap())
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn point_errors_do_not_abort() {
        let mut cfg = config(PolicySpec::OfflinePiecewise, vec![0.2, 0.8]);
        cfg.initial_soc_kwh = 0.0;
        cfg.measures.push(MeasureSpec::EmpiricalMi { bins: 4, kappa: None });
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert!(out.rows.iter().all(|r| r.feasible));
    }
}
