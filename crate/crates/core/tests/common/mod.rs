//! Brute-force reference implementations shared by the integration tests.
//!
//! Everything here is written from the model definitions alone and avoids the
//! library's solvers, so agreement between the two is meaningful.

#![allow(dead_code)]

pub mod feasibility;

use nalgebra::{DMatrix, DVector};
use smprivacy::policies::mdp::MdpModel;

/// Binary entropy in bits.
pub fn h2(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    term(p) + term(1.0 - p)
}

pub fn entropy(probs: impl IntoIterator<Item = f64>) -> f64 {
    probs.into_iter().filter(|p| *p > 0.0).map(|p| -p * p.log2()).sum()
}

/// Offline scheduling instance without renewables, selling or losses.
#[derive(Debug, Clone)]
pub struct OfflineInstance {
    pub load: Vec<f64>,
    pub prices: Vec<f64>,
    pub tau: f64,
    pub b0: f64,
    pub capacity: f64,
    pub peak_charge: f64,
    pub peak_discharge: f64,
}

/// A constraint `a·y ≤ b`, stored densely.
#[derive(Debug, Clone)]
pub struct HalfSpace {
    pub a: Vec<f64>,
    pub b: f64,
}

impl OfflineInstance {
    pub fn lower(&self) -> Vec<f64> {
        self.load.iter().map(|x| (x - self.peak_discharge).max(0.0)).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.load.iter().map(|x| x + self.peak_charge).collect()
    }

    /// State-of-charge constraints `0 ≤ B0 + τ·Σ_{s≤t}(y_s − x_s) ≤ B_max`.
    pub fn soc_halfspaces(&self) -> Vec<HalfSpace> {
        let n = self.load.len();
        let mut out = Vec::new();
        let mut cum_x = 0.0;
        for t in 0..n {
            cum_x += self.load[t];
            let a: Vec<f64> = (0..n).map(|s| if s <= t { self.tau } else { 0.0 }).collect();
            let neg: Vec<f64> = a.iter().map(|v| -v).collect();
            out.push(HalfSpace {
                a,
                b: self.capacity - self.b0 + self.tau * cum_x,
            });
            out.push(HalfSpace {
                a: neg,
                b: self.b0 - self.tau * cum_x,
            });
        }
        out
    }

    pub fn all_halfspaces(&self) -> Vec<HalfSpace> {
        let n = self.load.len();
        let mut out = self.soc_halfspaces();
        let (lo, hi) = (self.lower(), self.upper());
        for t in 0..n {
            let unit = |s: f64| (0..n).map(|i| if i == t { s } else { 0.0 }).collect::<Vec<_>>();
            out.push(HalfSpace { a: unit(1.0), b: hi[t] });
            out.push(HalfSpace { a: unit(-1.0), b: -lo[t] });
        }
        out
    }

    pub fn objective(&self, y: &[f64], alpha: f64, w: &[f64]) -> f64 {
        y.iter()
            .enumerate()
            .map(|(t, v)| (1.0 - alpha) * self.tau * self.prices[t] * v + alpha * (v - w[t]).powi(2))
            .sum()
    }

    pub fn max_violation(&self, y: &[f64]) -> f64 {
        self.all_halfspaces()
            .iter()
            .map(|h| dot(&h.a, y) - h.b)
            .fold(0.0, f64::max)
    }

    /// Euclidean projection of `z` onto the feasible set by Dykstra's
    /// alternating projections over the box and each state-of-charge
    /// half-space, run until the iterates stop moving.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len();
        let (lo, hi) = (self.lower(), self.upper());
        let spaces = self.soc_halfspaces();
        let mut y = z.to_vec();
        let mut box_corr = vec![0.0; n];
        let mut corr = vec![vec![0.0; n]; spaces.len()];
        for _ in 0..2_000_000 {
            let prev = y.clone();
            let mut moved = 0.0;
            // Box.
            let v: Vec<f64> = (0..n).map(|i| y[i] + box_corr[i]).collect();
            for i in 0..n {
                let p = v[i].clamp(lo[i], hi[i]);
                box_corr[i] = v[i] - p;
                y[i] = p;
            }
            for (h, c) in spaces.iter().zip(corr.iter_mut()) {
                let v: Vec<f64> = (0..n).map(|i| y[i] + c[i]).collect();
                let excess = dot(&h.a, &v) - h.b;
                let norm2 = dot(&h.a, &h.a);
                let p: Vec<f64> = if excess > 0.0 {
                    (0..n).map(|i| v[i] - excess / norm2 * h.a[i]).collect()
                } else {
                    v.clone()
                };
                for i in 0..n {
                    moved += (c[i] - (v[i] - p[i])).abs();
                    c[i] = v[i] - p[i];
                    y[i] = p[i];
                }
            }
            let change: f64 = y.iter().zip(&prev).map(|(a, b)| (a - b).abs()).sum();
            if change < 1e-15 && moved < 1e-15 {
                break;
            }
        }
        y
    }

    /// Minimizer of the offline objective for a per-slot target `w`: the
    /// objective is `α‖y − y*‖²` plus a constant, with
    /// `y* = w − (1 − α)τc/(2α)`, so projected gradient with step `1/(2α)`
    /// converges in one projection.
    pub fn solve_qp(&self, alpha: f64, w: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = (0..self.load.len())
            .map(|t| w[t] - (1.0 - alpha) * self.tau * self.prices[t] / (2.0 * alpha))
            .collect();
        self.project(&z)
    }

    /// Minimum energy cost (α = 0) by enumerating every vertex of the
    /// feasible polytope.
    pub fn lp_by_vertices(&self) -> f64 {
        let n = self.load.len();
        let spaces = self.all_halfspaces();
        let m = spaces.len();
        let mut best = f64::INFINITY;
        let mut pick: Vec<usize> = (0..n).collect();
        loop {
            let a = DMatrix::from_fn(n, n, |r, c| spaces[pick[r]].a[c]);
            let b = DVector::from_fn(n, |r, _| spaces[pick[r]].b);
            if let Some(y) = a.lu().solve(&b) {
                let y: Vec<f64> = y.iter().copied().collect();
                if y.iter().all(|v| v.is_finite()) && self.max_violation(&y) <= 1e-9 {
                    let cost: f64 = (0..n).map(|t| self.tau * self.prices[t] * y[t]).sum();
                    best = best.min(cost);
                }
            }
            // Next combination in lexicographic order.
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if pick[i] < m - n + i {
                    pick[i] += 1;
                    for j in i + 1..n {
                        pick[j] = pick[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-pass sample variance around `target` (mean of squared deviations).
pub fn variance_two_pass(values: &[f64], target: Option<f64>) -> f64 {
    let n = values.len() as f64;
    let centre = target.unwrap_or_else(|| values.iter().sum::<f64>() / n);
    values.iter().map(|v| (v - centre).powi(2)).sum::<f64>() / n
}

/// Leakage of the binary uniform source with peak ≥ 1 when the load 1 is
/// hidden (reported as 0) with probability `a`.
pub fn binary_kernel_leakage(a: f64) -> f64 {
    h2(0.5 * (1.0 + a)) - 0.5 * h2(a)
}

/// Minimum of [`binary_kernel_leakage`] over a grid of step `step` subject to
/// the average-power budget `0.5·a ≤ P̄`.
pub fn binary_ba_grid(pbar: f64, step: f64) -> f64 {
    let count = (1.0 / step).round() as usize;
    (0..=count)
        .map(|i| i as f64 * step)
        .filter(|a| 0.5 * a <= pbar + 1e-15)
        .map(binary_kernel_leakage)
        .fold(f64::INFINITY, f64::min)
}

/// Parameters of the binary battery state machine.
#[derive(Debug, Clone, Copy)]
pub struct Fsm {
    pub b_max: usize,
    pub q_x: f64,
    pub p_e: f64,
    pub p_v: f64,
    pub p_c: f64,
}

/// `I(X^n; Y^n)/n` in bits, by walking every realization of the demand bits,
/// renewable bits and decision coins from a uniformly drawn initial level.
pub fn fsm_exhaustive(m: &Fsm, n: usize) -> f64 {
    let mut joint = vec![0.0; 1 << (2 * n)];
    #[allow(clippy::too_many_arguments)]
    fn walk(m: &Fsm, n: usize, t: usize, b: usize, xs: usize, ys: usize, prob: f64, joint: &mut [f64]) {
        if prob == 0.0 {
            return;
        }
        if t == n {
            joint[(xs << n) | ys] += prob;
            return;
        }
        for (x, px) in [(0usize, 1.0 - m.q_x), (1, m.q_x)] {
            for (e, pe) in [(0usize, 1.0 - m.p_e), (1, m.p_e)] {
                let avail = b + e;
                let p = prob * px * pe;
                let mut go = |y: usize, next: usize, q: f64| {
                    walk(m, n, t + 1, next, (xs << 1) | x, (ys << 1) | y, p * q, joint);
                };
                if x == 1 {
                    if avail >= 1 {
                        // Serve the demand from storage, or from the grid.
                        go(0, (avail - 1).min(m.b_max), m.p_v);
                        go(1, avail.min(m.b_max), 1.0 - m.p_v);
                    } else {
                        go(1, 0, 1.0);
                    }
                } else if avail < m.b_max {
                    go(1, avail + 1, m.p_c);
                    go(0, avail, 1.0 - m.p_c);
                } else {
                    go(0, m.b_max, 1.0);
                }
            }
        }
    }
    let start = 1.0 / (m.b_max + 1) as f64;
    for b in 0..=m.b_max {
        walk(m, n, 0, b, 0, 0, start, &mut joint);
    }
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
    (entropy(px) + entropy(py) - entropy(joint)) / n as f64
}

/// Exogenous demand, state-of-charge index and decision epoch for the MDP
/// oracles.
pub struct MdpOracle<'a> {
    pub model: &'a MdpModel,
}

impl MdpOracle<'_> {
    /// Feasible `(next soc index, cost)` pairs, recomputed from the model
    /// definition.
    pub fn actions(&self, exo: usize, soc: usize) -> Vec<(usize, f64)> {
        let m = self.model;
        let x = m.exo[exo].load_kw;
        let mut out = Vec::new();
        for (j, level) in m.soc_levels.iter().enumerate() {
            let rate = (level - m.soc_levels[soc]) / m.slot_hours;
            let y = x + rate;
            if rate > m.battery.peak_charge_kw + 1e-9 || -rate > m.battery.peak_discharge_kw + 1e-9 {
                continue;
            }
            if y < -1e-9 && !m.allow_selling {
                continue;
            }
            let cost = m.privacy_weight * (y - m.target_kw).powi(2)
                + m.lambda * m.exo[exo].price * y * m.slot_hours;
            out.push((j, cost));
        }
        out
    }

    /// Optimal expected cost-to-go from `(exo, soc)` with `steps` decisions
    /// left, by full expectimax over the decision tree. Returns the value and
    /// the first action (lowest index among exact ties).
    pub fn expectimax(&self, exo: usize, soc: usize, steps: usize) -> (f64, usize) {
        if steps == 0 {
            return (0.0, 0);
        }
        let m = self.model;
        let mut best = (f64::INFINITY, usize::MAX);
        for (j, cost) in self.actions(exo, soc) {
            let future: f64 = m.transition[exo]
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(e2, p)| p * self.expectimax(e2, j, steps - 1).0)
                .sum();
            let q = cost + future;
            if best.1 == usize::MAX || q < best.0 - 1e-12 * (1.0 + best.0.abs()) {
                best = (q, j);
            }
        }
        best
    }
}

/// Exhaustive minimum of `D(q0 || q1)` in nats for binary demand with the
/// kernel hiding a unit of demand with probability `a` under h0 and `c` under
/// h1, each under the budget `p_h(1)·a ≤ P̄`.
pub fn binary_kl_grid(p0_one: f64, p1_one: f64, pbar: f64, step: f64) -> f64 {
    let count = (1.0 / step).round() as usize;
    let kl = |a: f64, c: f64| {
        let q0 = [1.0 - p0_one * (1.0 - a), p0_one * (1.0 - a)];
        let q1 = [1.0 - p1_one * (1.0 - c), p1_one * (1.0 - c)];
        q0.iter()
            .zip(&q1)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| if *q > 0.0 { p * (p / q).ln() } else { f64::INFINITY })
            .sum::<f64>()
    };
    let mut best = f64::INFINITY;
    for i in 0..=count {
        let a = i as f64 * step;
        if p0_one * a > pbar + 1e-15 {
            break;
        }
        for j in 0..=count {
            let c = j as f64 * step;
            if p1_one * c > pbar + 1e-15 {
                break;
            }
            best = best.min(kl(a, c));
        }
    }
    best
}
