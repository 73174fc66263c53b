//! Leakage of a binary battery modelled as a finite state machine.
//!
//! Each slot draws a demand bit `X ~ Bern(q_x)` and a renewable bit
//! `E ~ Bern(p_e)`. With `b` units stored and `b + e ≥ 1`, a demand is served
//! from storage with probability `p_v` (the grid load is then 0). With no
//! demand and room left, the grid charges one unit with probability `p_c`.
//! Renewable energy beyond the capacity is lost.
//!
//! The leakage rate `I(X^n; Y^n)/n` is computed by forward recursion over the
//! battery state, either exactly by enumerating every `(x^n, y^n)` pair or
//! from one long sampled realization.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pmf::entropy_bits;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmModel {
    pub b_max: usize,
    pub q_x: f64,
    pub p_e: f64,
    pub p_v: f64,
    /// Probability of charging from the grid when there is no demand.
    #[serde(default)]
    pub p_c: f64,
    /// Distribution of the initial battery level; uniform when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
}

/// One branch of the slot dynamics from a given battery level.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Branch {
    x: usize,
    y: usize,
    next: usize,
    prob: f64,
}

impl FsmModel {
    pub fn new(b_max: usize, q_x: f64, p_e: f64, p_v: f64) -> Result<Self> {
        let m = Self {
            b_max,
            q_x,
            p_e,
            p_v,
            p_c: 0.0,
            initial: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("q_x", self.q_x), ("p_e", self.p_e), ("p_v", self.p_v), ("p_c", self.p_c)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if let Some(init) = &self.initial {
            let sum: f64 = init.iter().sum();
            if init.len() != self.b_max + 1 || init.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(
                    "initial battery distribution must be a pmf over 0..=B_max".into(),
                ));
            }
        }
        Ok(())
    }

    fn initial_dist(&self) -> Vec<f64> {
        self.initial
            .clone()
            .unwrap_or_else(|| vec![1.0 / (self.b_max + 1) as f64; self.b_max + 1])
    }

    /// All `(x, y, b')` outcomes from level `b` with their probabilities,
    /// merged over the hidden renewable bit and decision coins.
    fn branches(&self, b: usize) -> Vec<Branch> {
        let cap = self.b_max;
        let mut out: Vec<Branch> = Vec::new();
        let mut push = |x: usize, y: usize, next: usize, prob: f64| {
            if prob <= 0.0 {
                return;
            }
            match out.iter_mut().find(|o| o.x == x && o.y == y && o.next == next) {
                Some(o) => o.prob += prob,
                None => out.push(Branch { x, y, next, prob }),
            }
        };
        for (e, pe) in [(0, 1.0 - self.p_e), (1, self.p_e)] {
            let avail = b + e;
            // Demand.
            let px1 = self.q_x * pe;
            if avail >= 1 {
                push(1, 0, (avail - 1).min(cap), px1 * self.p_v);
                push(1, 1, avail.min(cap), px1 * (1.0 - self.p_v));
            } else {
                push(1, 1, b, px1);
            }
            // No demand.
            let px0 = (1.0 - self.q_x) * pe;
            if avail < cap {
                push(0, 1, avail + 1, px0 * self.p_c);
                push(0, 0, avail, px0 * (1.0 - self.p_c));
            } else {
                push(0, 0, avail.min(cap), px0);
            }
        }
        out
    }

    fn table(&self) -> Vec<Vec<Branch>> {
        (0..=self.b_max).map(|b| self.branches(b)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FsmMethod {
    /// Exact `I(X^n; Y^n)/n` over all sequence pairs.
    Exact,
    /// `−(1/n)log p(y^n) − (1/n)log p(x^n) + (1/n)log p(x^n, y^n)` on one
    /// sampled realization.
    Sampled { seed: u64 },
}

/// Largest horizon accepted by [`FsmMethod::Exact`].
pub const MAX_EXACT_SLOTS: usize = 12;

/// Leakage rate in bits per slot.
pub fn empirical_mi_fsm(model: &FsmModel, n: usize, method: FsmMethod) -> Result<f64> {
    model.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("horizon must be at least one slot".into()));
    }
    match method {
        FsmMethod::Exact => {
            if n > MAX_EXACT_SLOTS {
                return Err(Error::InvalidParameter(format!(
                    "exact enumeration is limited to {MAX_EXACT_SLOTS} slots"
                )));
            }
            Ok(exact(model, n))
        }
        FsmMethod::Sampled { seed } => Ok(sampled(model, n, seed)),
    }
}

fn exact(model: &FsmModel, n: usize) -> f64 {
    let table = model.table();
    let mut joint = vec![0.0; 1 << (2 * n)];
    // Depth-first over prefixes, carrying p(x^t, y^t, b_t).
    fn walk(table: &[Vec<Branch>], alpha: &[f64], t: usize, n: usize, xs: usize, ys: usize, joint: &mut [f64]) {
        if t == n {
            joint[(xs << n) | ys] = alpha.iter().sum();
            return;
        }
        for x in 0..2 {
            for y in 0..2 {
                let mut next = vec![0.0; alpha.len()];
                let mut mass = 0.0;
                for (b, a) in alpha.iter().enumerate() {
                    if *a == 0.0 {
                        continue;
                    }
                    for br in table[b].iter().filter(|br| br.x == x && br.y == y) {
                        next[br.next] += a * br.prob;
                        mass += a * br.prob;
                    }
                }
                if mass > 0.0 {
                    walk(table, &next, t + 1, n, (xs << 1) | x, (ys << 1) | y, joint);
                }
            }
        }
    }
    walk(&table, &model.initial_dist(), 0, n, 0, 0, &mut joint);
    let size = 1 << n;
    let mut px = vec![0.0; size];
    let mut py = vec![0.0; size];
    for xs in 0..size {
        for ys in 0..size {
            let p = joint[(xs << n) | ys];
            px[xs] += p;
            py[ys] += p;
        }
    }
    let mi = entropy_bits(&px) + entropy_bits(&py) - entropy_bits(&joint);
    mi.max(0.0) / n as f64
}

fn sampled(model: &FsmModel, n: usize, seed: u64) -> f64 {
    let table = model.table();
    let init = model.initial_dist();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |weights: &mut dyn Iterator<Item = f64>, rng: &mut ChaCha8Rng| -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in weights.enumerate() {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    };
    let mut b = pick(&mut init.iter().copied(), &mut rng);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let br = table[b][pick(&mut table[b].iter().map(|br| br.prob), &mut rng)];
        xs.push(br.x);
        ys.push(br.y);
        b = br.next;
    }

    // Scaled forward recursions for log p(x^n, y^n) and log p(y^n).
    let forward = |use_x: bool| -> f64 {
        let mut alpha = init.clone();
        let mut log_p = 0.0;
        for t in 0..n {
            let mut next = vec![0.0; alpha.len()];
            for (b, a) in alpha.iter().enumerate() {
                for br in &table[b] {
                    if br.y == ys[t] && (!use_x || br.x == xs[t]) {
                        next[br.next] += a * br.prob;
                    }
                }
            }
            let z: f64 = next.iter().sum();
            log_p += z.log2();
            alpha = next.iter().map(|v| v / z).collect();
        }
        log_p
    };
    let log_pxy = forward(true);
    let log_py = forward(false);
    let log_px: f64 = xs
        .iter()
        .map(|x| if *x == 1 { model.q_x.log2() } else { (1.0 - model.q_x).log2() })
        .sum();
    (log_pxy - log_py - log_px) / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsmPoint {
    pub p_v: f64,
    pub p_c: f64,
    pub leakage_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmSweep {
    pub points: Vec<FsmPoint>,
    pub best: FsmPoint,
}

impl FsmSweep {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p_v", "p_c", "leakage_bits"])?;
        for p in &self.points {
            w.write_record([p.p_v.to_string(), p.p_c.to_string(), p.leakage_bits.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates the leakage over the grid `p_v_grid × p_c_grid` (other
/// parameters from `base`) and returns the surface with its minimizer.
/// Ties keep the earliest grid point.
pub fn parameter_sweep_fsm(
    base: &FsmModel,
    p_v_grid: &[f64],
    p_c_grid: &[f64],
    n: usize,
    method: FsmMethod,
) -> Result<FsmSweep> {
    if p_v_grid.is_empty() || p_c_grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grids must be nonempty".into()));
    }
    let pairs: Vec<(f64, f64)> = p_v_grid
        .iter()
        .flat_map(|v| p_c_grid.iter().map(move |c| (*v, *c)))
        .collect();
    let points = pairs
        .par_iter()
        .map(|&(p_v, p_c)| {
            let model = FsmModel {
                p_v,
                p_c,
                ..base.clone()
            };
            empirical_mi_fsm(&model, n, method).map(|leakage_bits| FsmPoint { p_v, p_c, leakage_bits })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = *points
        .iter()
        .reduce(|a, b| if b.leakage_bits < a.leakage_bits { b } else { a })
        .expect("nonempty grid");
    Ok(FsmSweep { points, best })
}
