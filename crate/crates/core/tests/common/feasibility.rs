//! Randomized (trace, battery, policy) instances and an independent physical
//! audit of the simulated schedules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smprivacy::measures::{privacy_power_ba, Pmf};
use smprivacy::model::{
    check_feasible, BatteryParams, BatterySoC, LoadTrace, NullPolicy, Policy, ResParams, SimResult, Simulator, Tariff,
};
use smprivacy::policies::mdp::{mdp_value_iteration, Horizon, MdpModel, MdpPolicy};
use smprivacy::policies::stochastic::{BestEffortRes, ScheduleReplay, StochasticKernelPolicy, StoreAndHide};
use smprivacy::policies::{
    offline_constant_target, offline_piecewise_target, BestEffort, DriftPlusPenalty, Nill, NillParams,
    OfflineProblem, Stepping, SteppingParams, SteppingVariant, Target,
};

pub const POLICY_KINDS: [&str; 13] = [
    "null",
    "best_effort",
    "nill",
    "lazy_stepping",
    "lazy_charging",
    "random_charging",
    "drift_plus_penalty",
    "kernel",
    "store_and_hide",
    "best_effort_res",
    "mdp",
    "offline_constant",
    "offline_piecewise",
];

const LEVELS: [f64; 6] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0];

pub struct Case {
    pub user: LoadTrace,
    pub sim: Simulator,
    pub policy: Box<dyn Policy>,
    pub kind: &'static str,
    pub seed: u64,
}

pub fn build_case(seed: u64, kind: usize) -> Result<Case, String> {
    let err = |e: smprivacy::Error| e.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = POLICY_KINDS[kind];
    let offline = name.starts_with("offline");
    let n = rng.random_range(16..=64);
    let tau = [0.25, 0.5, 1.0][rng.random_range(0..3)];
    let values: Vec<f64> = if rng.random_bool(0.5) || name == "kernel" || name == "mdp" {
        (0..n).map(|_| LEVELS[rng.random_range(0..LEVELS.len())]).collect()
    } else {
        (0..n).map(|_| rng.random_range(0.0..4.0)).collect()
    };
    let user = LoadTrace::new(values, tau).map_err(err)?;

    let mut battery = BatteryParams::new(
        rng.random_range(0.2..8.0),
        rng.random_range(0.2..4.0),
        rng.random_range(0.2..4.0),
    )
    .map_err(err)?;
    if !offline && rng.random_bool(0.3) {
        battery = battery.with_efficiency(rng.random_range(0.8..1.0)).map_err(err)?;
    }
    if rng.random_bool(0.3) {
        battery = battery.with_wear_cost(rng.random_range(0.0..0.1));
    }
    let initial = BatterySoC::new(rng.random_range(0.0..=battery.capacity_kwh), &battery).map_err(err)?;
    let res = if offline {
        ResParams::none()
    } else {
        match rng.random_range(0..3) {
            0 => ResParams::none(),
            1 => ResParams::bernoulli(rng.random_range(0.0..1.0), rng.random_range(0.2..3.0)).map_err(err)?,
            _ => ResParams::trace((0..n).map(|_| rng.random_range(0.0..2.0)).collect()).map_err(err)?,
        }
    };
    let split = rng.random_range(1..n);
    let tariff = Tariff::new(vec![0, split, n], vec![rng.random_range(0.1..1.0), rng.random_range(0.5..3.0)])
        .map_err(err)?;
    let allow_selling = !offline && rng.random_bool(0.2);
    let sim = Simulator::new(battery, initial, res, tariff.clone()).with_selling(allow_selling);

    let stepping = |variant, rng: &mut ChaCha8Rng| -> Result<Box<dyn Policy>, String> {
        let beta = SteppingParams::auto_beta(&battery, tau) * rng.random_range(0.3..=1.0);
        Ok(Box::new(Stepping::new(SteppingParams::new(variant, Some(beta), &battery, tau).map_err(err)?)))
    };
    let kernel = |rng: &mut ChaCha8Rng| -> Result<StochasticKernelPolicy, String> {
        let px = Pmf::uniform(LEVELS.to_vec()).map_err(err)?;
        let peak = battery.peak_discharge_kw;
        let ba = privacy_power_ba(&px, rng.random_range(0.0..1.0), peak, 1e-9).map_err(err)?;
        StochasticKernelPolicy::new(ba.kernel, peak).map_err(err)
    };
    let policy: Box<dyn Policy> = match name {
        "null" => Box::new(NullPolicy),
        "best_effort" => Box::new(BestEffort),
        "nill" => {
            let params = NillParams {
                ewma_weight: rng.random_range(0.01..0.5),
                initial_target_kw: rng.random_bool(0.5).then(|| rng.random_range(0.1..3.0)),
                ..NillParams::default()
            };
            Box::new(Nill::new(params).map_err(err)?)
        }
        "lazy_stepping" => stepping(SteppingVariant::LazyStepping, &mut rng)?,
        "lazy_charging" => stepping(SteppingVariant::LazyCharging, &mut rng)?,
        "random_charging" => stepping(SteppingVariant::RandomCharging, &mut rng)?,
        "drift_plus_penalty" => Box::new(
            DriftPlusPenalty::new(rng.random_range(0.0..10.0), rng.random_range(0.0..=1.0), user.mean())
                .map_err(err)?,
        ),
        "kernel" => Box::new(kernel(&mut rng)?),
        "store_and_hide" => Box::new(StoreAndHide {
            policy: kernel(&mut rng)?,
            storage_slots: rng.random_range(0..n),
        }),
        "best_effort_res" => Box::new(BestEffortRes { policy: kernel(&mut rng)? }),
        "mdp" => {
            let probs = vec![1.0 / LEVELS.len() as f64; LEVELS.len()];
            let horizon = if rng.random_bool(0.5) {
                Horizon::Discounted { gamma: 0.9 }
            } else {
                Horizon::Finite { steps: n }
            };
            let model = MdpModel::iid(&LEVELS, &probs, battery, 11, tau, user.mean(), horizon).map_err(err)?;
            let sol = mdp_value_iteration(&model, 1e-8).map_err(err)?;
            Box::new(MdpPolicy::new(sol.policy))
        }
        _ => {
            let piecewise = name == "offline_piecewise";
            let problem = OfflineProblem::new(user.clone(), tariff, rng.random_range(0.0..=1.0), battery)
                .with_initial_soc(initial)
                .with_target(if piecewise { Target::Free } else { Target::Fixed(user.mean()) });
            let sol = if piecewise {
                offline_piecewise_target(&problem)
            } else {
                offline_constant_target(&problem)
            }
            .map_err(err)?;
            Box::new(ScheduleReplay {
                label: name.into(),
                grid_kw: sol.grid_kw,
            })
        }
    };
    Ok(Case {
        user,
        sim,
        policy,
        kind: name,
        seed,
    })
}

/// Absolute tolerance of the audit, in kW or kWh.
pub const TOL: f64 = 1e-9;

/// Replays the physics of a finished run and lists every broken rule.
pub fn audit(case: &Case, r: &SimResult) -> Vec<String> {
    let mut problems = Vec::new();
    let b = &case.sim.battery;
    let eta = b.round_trip_efficiency.sqrt();
    let tau = case.user.slot_hours();
    let x = case.user.values();
    let y = r.grid_load.values();
    let n = x.len();
    if r.soc_trace.len() != n + 1 || y.len() != n || r.res_trace.len() != n {
        return vec!["trace lengths disagree".into()];
    }
    if (r.soc_trace[0] - case.sim.initial_soc.stored_kwh()).abs() > TOL {
        problems.push("initial state of charge changed".into());
    }
    if !r.violations.is_empty() {
        problems.push(format!("simulator flagged {:?}", r.violations));
    }
    match check_feasible(&case.user, y, b, &r.res_trace, case.sim.initial_soc, case.sim.allow_selling) {
        Ok(v) if v.is_empty() => {}
        Ok(v) => problems.push(format!("replay flagged {v:?}")),
        Err(e) => problems.push(e.to_string()),
    }
    for t in 0..n {
        let (s0, s1, e) = (r.soc_trace[t], r.soc_trace[t + 1], r.res_trace[t]);
        let delta = s1 - s0;
        let net = (y[t] + e - x[t]) * tau;
        let mut bad = |what: &str| problems.push(format!("slot {t}: {what} (x={}, y={}, e={e}, soc {s0}→{s1})", x[t], y[t]));
        if !y[t].is_finite() || !(e >= 0.0) {
            bad("non-finite grid load or negative generation");
        }
        if s1 < -TOL || s1 > b.capacity_kwh + TOL {
            bad("state of charge out of range");
        }
        if !case.sim.allow_selling && y[t] < -TOL {
            bad("negative grid load");
        }
        if delta > 0.0 && delta / (eta * tau) > b.peak_charge_kw + TOL {
            bad("charge power above peak");
        }
        if delta < 0.0 && -delta * eta / tau > b.peak_discharge_kw + TOL {
            bad("discharge power above peak");
        }
        if net < 0.0 && delta > net / eta + TOL {
            bad("demand not covered");
        }
        if net >= 0.0 && (delta < -TOL || delta > eta * net + TOL) {
            bad("stored energy does not match the surplus");
        }
    }
    let grid: f64 = y.iter().sum::<f64>() * tau;
    let res: f64 = r.res_trace.iter().sum::<f64>() * tau;
    let load: f64 = x.iter().sum::<f64>() * tau;
    let residual = grid + res - load - (r.soc_trace[n] - r.soc_trace[0]) - r.wasted_kwh - r.loss_kwh;
    if residual.abs() > TOL {
        problems.push(format!("energy balance off by {residual:e} kWh"));
    }
    if (residual - r.energy_residual(&case.user)).abs() > 1e-12 {
        problems.push("reported energy residual disagrees with the audit".into());
    }
    problems
}

pub fn run_case(seed: u64, kind: usize) -> Result<(), String> {
    let mut case = build_case(seed, kind).map_err(|e| format!("{} (seed {seed}): {e}", POLICY_KINDS[kind]))?;
    let user = case.user.clone();
    let r = case
        .sim
        .run(case.policy.as_mut(), &user, seed ^ 0x5eed)
        .map_err(|e| format!("{} (seed {seed}): {e}", case.kind))?;
    let problems = audit(&case, &r);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(format!("{} (seed {}): {}", case.kind, case.seed, problems.join("; ")))
    }
}

/// The 1000-instance sweep, cycling through every shipped policy.
pub fn run() -> Result<String, String> {
    let cases = 1000;
    let failures: Vec<String> = (0..cases)
        .filter_map(|i| run_case(1000 + i as u64, i % POLICY_KINDS.len()).err())
        .collect();
    if failures.is_empty() {
        Ok(format!("{cases} instances over {} policies, no violations", POLICY_KINDS.len()))
    } else {
        Err(format!("{} of {cases} instances failed: {}", failures.len(), failures.join(" | ")))
    }
}
