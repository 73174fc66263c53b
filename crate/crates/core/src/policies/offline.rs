//! Offline privacy-cost schedules.
//!
//! Given the whole user-load trace in advance, choose grid loads minimizing
//! `Σ_t (1−α)·τ·C_t·Y_t + α·(Y_t − W_t)²` subject to the battery dynamics,
//! the state-of-charge bounds and the peak-power limits. The target `W_t` is
//! either a fixed constant or one free level per tariff period.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::qp::{solve_qp, QpOptions, QpProblem};
use crate::error::{Error, Result};
use crate::model::{BatteryParams, BatterySoC, LoadTrace, Tariff, SOC_TOLERANCE};

/// How the privacy target is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "kw")]
pub enum Target {
    Fixed(f64),
    /// One free level over the whole horizon, optimized jointly.
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineProblem {
    pub user_load: LoadTrace,
    pub tariff: Tariff,
    pub alpha: f64,
    pub target: Target,
    pub battery: BatteryParams,
    pub initial_soc: BatterySoC,
    /// Lower bound on the final state of charge.
    pub terminal_soc_kwh: Option<f64>,
    pub allow_selling: bool,
}

impl OfflineProblem {
    pub fn new(user_load: LoadTrace, tariff: Tariff, alpha: f64, battery: BatteryParams) -> Self {
        let target = Target::Fixed(user_load.mean());
        Self {
            user_load,
            tariff,
            alpha,
            target,
            battery,
            initial_soc: BatterySoC::empty(),
            terminal_soc_kwh: None,
            allow_selling: false,
        }
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = target;
        self
    }

    pub fn with_initial_soc(mut self, soc: BatterySoC) -> Self {
        self.initial_soc = soc;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.user_load.is_empty() {
            return Err(Error::EmptyTrace);
        }
        self.battery.validate()?;
        if (self.battery.round_trip_efficiency - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(
                "offline schedules require a lossless battery".into(),
            ));
        }
        if let Target::Fixed(w) = self.target {
            if !w.is_finite() {
                return Err(Error::InvalidParameter(format!("target {w} is not finite")));
            }
        }
        BatterySoC::new(self.initial_soc.stored_kwh(), &self.battery)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineSolution {
    pub grid_kw: Vec<f64>,
    /// State of charge before each slot and after the last.
    pub soc_kwh: Vec<f64>,
    /// Target level for each slot.
    pub slot_targets_kw: Vec<f64>,
    /// One target per tariff period (a single entry for a constant target).
    pub targets_kw: Vec<f64>,
    pub objective: f64,
    pub energy_cost: f64,
    /// `(1/n) Σ (Y_t − W_t)²`.
    pub variance: f64,
    pub kkt_residual: f64,
}

impl OfflineSolution {
    /// Writes `slot,x,y,soc,price` rows; `soc` is the state after the slot.
    pub fn write_csv<W: Write>(&self, problem: &OfflineProblem, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "x", "y", "soc", "price"])?;
        for (t, y) in self.grid_kw.iter().enumerate() {
            w.write_record([
                t.to_string(),
                problem.user_load.values()[t].to_string(),
                y.to_string(),
                self.soc_kwh[t + 1].to_string(),
                problem.tariff.price_at(t).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Linear constraints `G y ≤ b` shared by both programs.
struct Constraints {
    g: DMatrix<f64>,
    b: DVector<f64>,
}

fn build_constraints(p: &OfflineProblem) -> Constraints {
    let x = p.user_load.values();
    let n = x.len();
    let tau = p.user_load.slot_hours();
    let bat = &p.battery;
    let b0 = p.initial_soc.stored_kwh();
    let extra = usize::from(p.terminal_soc_kwh.is_some());
    let m = 4 * n + extra;
    let mut g = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    let mut cum_x = 0.0;
    for t in 0..n {
        let mut lower = x[t] - bat.peak_discharge_kw;
        if !p.allow_selling {
            lower = lower.max(0.0);
        }
        g[(t, t)] = 1.0;
        b[t] = x[t] + bat.peak_charge_kw;
        g[(n + t, t)] = -1.0;
        b[n + t] = -lower;
        cum_x += x[t];
        for k in 0..=t {
            g[(2 * n + t, k)] = tau;
            g[(3 * n + t, k)] = -tau;
        }
        b[2 * n + t] = bat.capacity_kwh - b0 + tau * cum_x;
        b[3 * n + t] = b0 - tau * cum_x;
    }
    if let Some(terminal) = p.terminal_soc_kwh {
        for k in 0..n {
            g[(4 * n, k)] = -tau;
        }
        b[4 * n] = b0 - tau * cum_x - terminal;
    }
    Constraints { g, b }
}

/// Rejects problems whose terminal requirement cannot be met by charging
/// as fast as the limits allow.
fn check_reachable(p: &OfflineProblem) -> Result<()> {
    let Some(terminal) = p.terminal_soc_kwh else {
        return Ok(());
    };
    let tau = p.user_load.slot_hours();
    let mut hi = p.initial_soc.stored_kwh();
    for _ in 0..p.user_load.len() {
        hi = (hi + p.battery.peak_charge_kw * tau).min(p.battery.capacity_kwh);
    }
    if hi + SOC_TOLERANCE < terminal {
        return Err(Error::Infeasible(format!(
            "final state of charge {terminal} kWh unreachable (at most {hi} kWh)"
        )));
    }
    Ok(())
}

/// The battery cannot move: the only feasible schedule is `Y = X`.
fn battery_frozen(p: &OfflineProblem) -> bool {
    let bat = &p.battery;
    let b0 = p.initial_soc.stored_kwh();
    bat.capacity_kwh <= SOC_TOLERANCE
        || (bat.peak_charge_kw <= 0.0 && bat.peak_discharge_kw <= 0.0)
        || (bat.peak_charge_kw <= 0.0 && b0 <= SOC_TOLERANCE)
        || (bat.peak_discharge_kw <= 0.0 && b0 >= bat.capacity_kwh - SOC_TOLERANCE)
}

/// Slot-to-group map for the targets: all zeros for a single target, the
/// tariff period index otherwise.
fn groups(p: &OfflineProblem, piecewise: bool) -> Vec<usize> {
    let n = p.user_load.len();
    if piecewise {
        (0..n).map(|t| p.tariff.period_of(t)).collect()
    } else {
        vec![0; n]
    }
}

/// `I − P`, with `P` averaging within each group.
fn centering(groups: &[usize]) -> DMatrix<f64> {
    let n = groups.len();
    let num = groups.iter().max().map_or(0, |g| g + 1);
    let mut sizes = vec![0usize; num];
    for g in groups {
        sizes[*g] += 1;
    }
    DMatrix::from_fn(n, n, |i, j| {
        let avg = if groups[i] == groups[j] {
            1.0 / sizes[groups[i]] as f64
        } else {
            0.0
        };
        f64::from(u8::from(i == j)) - avg
    })
}

fn group_means(values: &[f64], groups: &[usize]) -> Vec<f64> {
    let num = groups.iter().max().map_or(0, |g| g + 1);
    let mut sums = vec![0.0; num];
    let mut counts = vec![0usize; num];
    for (v, g) in values.iter().zip(groups) {
        sums[*g] += v;
        counts[*g] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 })
        .collect()
}

fn finish(p: &OfflineProblem, grid: Vec<f64>, targets: Vec<f64>, groups: &[usize], kkt: f64) -> OfflineSolution {
    let tau = p.user_load.slot_hours();
    let n = grid.len();
    let prices = p.tariff.slot_prices(n);
    let slot_targets: Vec<f64> = groups.iter().map(|g| targets[*g]).collect();
    let mut soc = Vec::with_capacity(n + 1);
    let mut b = p.initial_soc.stored_kwh();
    soc.push(b);
    for (y, x) in grid.iter().zip(p.user_load.values()) {
        b = (b + (y - x) * tau).clamp(0.0, p.battery.capacity_kwh);
        soc.push(b);
    }
    let energy_cost: f64 = grid.iter().zip(&prices).map(|(y, c)| tau * c * y).sum();
    let sq: f64 = grid.iter().zip(&slot_targets).map(|(y, w)| (y - w).powi(2)).sum();
    OfflineSolution {
        objective: (1.0 - p.alpha) * energy_cost + p.alpha * sq,
        energy_cost,
        variance: sq / n as f64,
        grid_kw: grid,
        soc_kwh: soc,
        slot_targets_kw: slot_targets,
        targets_kw: targets,
        kkt_residual: kkt,
    }
}

/// Relative slack on the optimal cost when breaking ties at `α = 0`.
const TIE_SLACK: f64 = 1e-12;

fn solve(p: &OfflineProblem, piecewise: bool) -> Result<OfflineSolution> {
    p.validate()?;
    check_reachable(p)?;
    let n = p.user_load.len();
    let tau = p.user_load.slot_hours();
    let alpha = p.alpha;
    let fixed = match (piecewise, p.target) {
        (false, Target::Fixed(w)) => Some(w),
        _ => None,
    };
    let groups = groups(p, piecewise);
    let target_of = |grid: &[f64]| match fixed {
        Some(w) => vec![w],
        None => group_means(grid, &groups),
    };

    if battery_frozen(p) {
        let grid = p.user_load.values().to_vec();
        let targets = target_of(&grid);
        return Ok(finish(p, grid, targets, &groups, 0.0));
    }

    let cons = build_constraints(p);
    let prices = DVector::from_vec(p.tariff.slot_prices(n));
    let cost_vec = &prices * tau;
    // Privacy term as ½ yᵀ Q y + qᵀ y (+ const).
    let (q_mat, q_vec) = match fixed {
        Some(w) => (DMatrix::identity(n, n) * 2.0, DVector::from_element(n, -2.0 * w)),
        None => (centering(&groups) * 2.0, DVector::zeros(n)),
    };
    let opts = QpOptions::default();

    let primary = QpProblem::new(
        &q_mat * alpha,
        &cost_vec * (1.0 - alpha) + &q_vec * alpha,
        cons.g.clone(),
        cons.b.clone(),
    )?;
    let sol = solve_qp(&primary, &opts)?;
    let kkt = sol.kkt_residual;
    let mut grid = sol.x;

    if alpha == 0.0 {
        // Among cost-optimal schedules, keep the one closest to the target.
        let best_cost = cost_vec.dot(&grid);
        let mut g = cons.g.clone().insert_row(cons.g.nrows(), 0.0);
        g.row_mut(cons.g.nrows()).copy_from(&cost_vec.transpose());
        let mut b = cons.b.clone().insert_row(cons.b.len(), 0.0);
        b[cons.b.len()] = best_cost + TIE_SLACK * best_cost.abs().max(1.0);
        let secondary = QpProblem::new(q_mat.clone(), q_vec.clone(), g, b)?;
        if let Ok(s) = solve_qp(&secondary, &opts) {
            grid = s.x;
        }
    } else if alpha == 1.0 && fixed.is_none() {
        // The privacy term ignores level shifts within each period; spend
        // that freedom on the energy cost.
        let num = groups.iter().max().map_or(0, |g| g + 1);
        let d = DMatrix::from_fn(n, num, |t, k| f64::from(u8::from(groups[t] == k)));
        let shift = QpProblem::new(
            DMatrix::zeros(num, num),
            d.tr_mul(&cost_vec),
            &cons.g * &d,
            &cons.b - &cons.g * &grid,
        )?;
        if let Ok(s) = solve_qp(&shift, &opts) {
            grid += &d * s.x;
        }
    }

    let grid: Vec<f64> = grid.iter().copied().collect();
    let targets = target_of(&grid);
    Ok(finish(p, grid, targets, &groups, kkt))
}

/// Minimizes cost and squared deviation from one target level. With
/// [`Target::Free`] the level is optimized together with the schedule.
pub fn offline_constant_target(problem: &OfflineProblem) -> Result<OfflineSolution> {
    solve(problem, false)
}

/// Minimizes cost and squared deviation from per-period targets, which are
/// optimized jointly with the schedule. The optimal target of each period is
/// the mean grid load over that period.
pub fn offline_piecewise_target(problem: &OfflineProblem) -> Result<OfflineSolution> {
    solve(problem, true)
}
