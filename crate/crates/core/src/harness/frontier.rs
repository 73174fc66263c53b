//! Privacy-cost frontiers of the offline programs.
//!
//! Sweeping the trade-off weight α traces the lower boundary of the set of
//! achievable (privacy, cost) pairs. Privacy is the mean squared deviation of
//! the grid load from the program's own target profile.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::policies::{offline_constant_target, offline_piecewise_target, OfflineProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub alpha: f64,
    pub variance: f64,
    pub cost: f64,
}

/// Solves the constant-target (`piecewise = false`, with the target of
/// `base`) or piecewise-target program at `alpha`.
pub fn solve_at(base: &OfflineProblem, alpha: f64, piecewise: bool) -> Result<FrontierPoint> {
    let mut p = base.clone();
    p.alpha = alpha;
    let sol = if piecewise {
        offline_piecewise_target(&p)?
    } else {
        offline_constant_target(&p)?
    };
    Ok(FrontierPoint {
        alpha,
        variance: sol.variance,
        cost: sol.energy_cost,
    })
}

pub fn offline_frontier(base: &OfflineProblem, alphas: &[f64], piecewise: bool) -> Result<Vec<FrontierPoint>> {
    alphas.iter().map(|a| solve_at(base, *a, piecewise)).collect()
}

/// Drops points that another point beats in both privacy and cost.
pub fn pareto_front(points: &[FrontierPoint]) -> Vec<FrontierPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.variance.total_cmp(&b.variance).then(a.cost.total_cmp(&b.cost)));
    let mut front: Vec<FrontierPoint> = Vec::new();
    for p in sorted {
        if front.last().is_none_or(|q| p.cost < q.cost) {
            front.push(p);
        }
    }
    front
}

/// Variances within this many kW² of each other are treated as equal.
pub const VARIANCE_SLACK: f64 = 1e-12;

/// The cheapest frontier point whose variance does not exceed `variance`
/// (up to [`VARIANCE_SLACK`]), found by bisection on α (variance falls and
/// cost rises with α). `None` when even α = 1 cannot reach the level.
pub fn cost_at_variance(
    base: &OfflineProblem,
    piecewise: bool,
    variance: f64,
    alpha_tol: f64,
) -> Result<Option<FrontierPoint>> {
    let reaches = |p: &FrontierPoint| p.variance <= variance + VARIANCE_SLACK;
    let at_zero = solve_at(base, 0.0, piecewise)?;
    if reaches(&at_zero) {
        return Ok(Some(at_zero));
    }
    let at_one = solve_at(base, 1.0, piecewise)?;
    if !reaches(&at_one) {
        return Ok(None);
    }
    let (mut lo, mut hi, mut best) = (0.0, 1.0, at_one);
    while hi - lo > alpha_tol {
        let mid = 0.5 * (lo + hi);
        let p = solve_at(base, mid, piecewise)?;
        if reaches(&p) {
            hi = mid;
            best = p;
        } else {
            lo = mid;
        }
    }
    Ok(Some(best))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierComparison {
    pub alpha: f64,
    pub variance: f64,
    pub constant_cost: f64,
    /// Cost of the piecewise program at the same (or lower) variance.
    pub piecewise_cost: Option<f64>,
    pub piecewise_alpha: Option<f64>,
}

impl FrontierComparison {
    pub fn piecewise_dominates(&self, slack: f64) -> bool {
        self.piecewise_cost.is_some_and(|c| c <= self.constant_cost + slack)
    }
}

/// For each α, matches the constant-target point's variance on the
/// piecewise frontier and reports both costs.
pub fn compare_frontiers(base: &OfflineProblem, alphas: &[f64]) -> Result<Vec<FrontierComparison>> {
    alphas
        .iter()
        .map(|&alpha| {
            let c = solve_at(base, alpha, false)?;
            let p = cost_at_variance(base, true, c.variance, 1e-7)?;
            Ok(FrontierComparison {
                alpha,
                variance: c.variance,
                constant_cost: c.cost,
                piecewise_cost: p.map(|p| p.cost),
                piecewise_alpha: p.map(|p| p.alpha),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pareto_filter() {
        let pts = [
            FrontierPoint { alpha: 0.0, variance: 3.0, cost: 1.0 },
            FrontierPoint { alpha: 0.5, variance: 2.0, cost: 2.0 },
            FrontierPoint { alpha: 0.7, variance: 2.5, cost: 2.5 },
            FrontierPoint { alpha: 1.0, variance: 1.0, cost: 4.0 },
        ];
        let f = pareto_front(&pts);
        assert_eq!(f.iter().map(|p| p.alpha).collect::<Vec<_>>(), vec![1.0, 0.5, 0.0]);
    }
}
