//! Sharing a renewable energy budget among several users so as to minimize
//! their total leakage (reverse water-filling).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A convex, non-increasing leakage curve, linear between its points and
/// constant beyond the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageCurve {
    pub power_kw: Vec<f64>,
    pub leakage_bits: Vec<f64>,
}

const SHAPE_SLACK: f64 = 1e-9;

impl LeakageCurve {
    pub fn new(power_kw: Vec<f64>, leakage_bits: Vec<f64>) -> Result<Self> {
        if power_kw.is_empty() || power_kw.len() != leakage_bits.len() {
            return Err(Error::InvalidParameter("leakage curve needs matching, nonempty points".into()));
        }
        if power_kw[0] != 0.0 || power_kw.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "leakage curve powers must start at 0 and increase".into(),
            ));
        }
        let curve = Self { power_kw, leakage_bits };
        let slopes = curve.slopes();
        if slopes.iter().any(|s| *s > SHAPE_SLACK) || slopes.windows(2).any(|w| w[1] < w[0] - SHAPE_SLACK) {
            return Err(Error::InvalidParameter(
                "leakage curve must be non-increasing and convex".into(),
            ));
        }
        Ok(curve)
    }

    /// Samples `f` on `grid` (which must start at zero).
    pub fn from_fn(grid: &[f64], f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let values = grid.iter().map(|p| f(*p)).collect::<Result<Vec<_>>>()?;
        Self::new(grid.to_vec(), values)
    }

    fn slopes(&self) -> Vec<f64> {
        self.power_kw
            .windows(2)
            .zip(self.leakage_bits.windows(2))
            .map(|(p, l)| (l[1] - l[0]) / (p[1] - p[0]))
            .collect()
    }

    pub fn eval(&self, power_kw: f64) -> f64 {
        let p = &self.power_kw;
        if power_kw <= 0.0 {
            return self.leakage_bits[0];
        }
        let i = p.partition_point(|v| *v <= power_kw);
        if i >= p.len() {
            return *self.leakage_bits.last().unwrap();
        }
        let (p0, p1) = (p[i - 1], p[i]);
        let (l0, l1) = (self.leakage_bits[i - 1], self.leakage_bits[i]);
        l0 + (l1 - l0) * (power_kw - p0) / (p1 - p0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub power_kw: Vec<f64>,
    pub total_leakage_bits: f64,
    /// Marginal leakage reduction per kW at the optimum.
    pub multiplier: f64,
}

/// Minimizes `Σ I_i(P_i)` subject to `Σ P_i ≤ P̄`, `P_i ≥ 0`.
///
/// For piecewise-linear convex curves the optimal multiplier is the slope of
/// the last segment that receives power; segments are filled in order of
/// steepest descent, and a budget that ends inside a group of equally steep
/// segments is split equally among them.
pub fn multiuser_allocation(curves: &[LeakageCurve], pbar_kw: f64) -> Result<Allocation> {
    if !(pbar_kw >= 0.0) {
        return Err(Error::InvalidParameter(format!("budget {pbar_kw} must be ≥ 0")));
    }
    struct Seg {
        user: usize,
        slope: f64,
        len: f64,
    }
    let mut segs: Vec<Seg> = curves
        .iter()
        .enumerate()
        .flat_map(|(user, c)| {
            c.slopes()
                .into_iter()
                .zip(c.power_kw.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
                .filter(|(s, _)| *s < 0.0)
                .map(move |(slope, len)| Seg { user, slope, len })
        })
        .collect();
    segs.sort_by(|a, b| a.slope.total_cmp(&b.slope));

    let mut power = vec![0.0; curves.len()];
    let mut budget = pbar_kw;
    let mut multiplier = 0.0;
    let mut i = 0;
    while i < segs.len() && budget > 0.0 {
        let slope = segs[i].slope;
        let mut j = i;
        while j < segs.len() && (segs[j].slope - slope).abs() <= 1e-12 * slope.abs().max(1.0) {
            j += 1;
        }
        let group = &segs[i..j];
        let total: f64 = group.iter().map(|s| s.len).sum();
        multiplier = -slope;
        if total <= budget {
            for s in group {
                power[s.user] += s.len;
            }
            budget -= total;
        } else {
            // Equal split, capped by segment lengths.
            let mut order: Vec<&Seg> = group.iter().collect();
            order.sort_by(|a, b| a.len.total_cmp(&b.len));
            let mut left = order.len();
            for s in order {
                let share = (budget / left as f64).min(s.len);
                power[s.user] += share;
                budget -= share;
                left -= 1;
            }
            budget = 0.0;
        }
        i = j;
    }
    let total = curves.iter().zip(&power).map(|(c, p)| c.eval(*p)).sum();
    Ok(Allocation {
        power_kw: power,
        total_leakage_bits: total,
        multiplier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn log_curve(mean: f64) -> LeakageCurve {
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
        LeakageCurve::from_fn(&grid, |p| {
            Ok(if p <= 0.0 { 12.0 } else { (mean / p).ln().clamp(0.0, 12.0) })
        })
        .unwrap()
    }

    #[test]
    fn rejects_concave_curves() {
        assert!(LeakageCurve::new(vec![0.0, 1.0, 2.0], vec![2.0, 1.9, 0.0]).is_err());
        assert!(LeakageCurve::new(vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn single_user_takes_everything() {
        let c = LeakageCurve::new(vec![0.0, 1.0, 2.0], vec![2.0, 0.5, 0.0]).unwrap();
        let a = multiuser_allocation(&[c], 1.3).unwrap();
        assert_abs_diff_eq!(a.power_kw[0], 1.3, epsilon = 1e-12);
    }

    #[test]
    fn identical_users_split_equally() {
        let c = LeakageCurve::new(vec![0.0, 1.0, 2.0], vec![2.0, 0.5, 0.0]).unwrap();
        let a = multiuser_allocation(&[c.clone(), c.clone(), c], 1.5).unwrap();
        for p in &a.power_kw {
            assert_abs_diff_eq!(*p, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn low_load_users_are_hidden_first() {
        // Leakage ln(μ/P): the water level settles at 0.75 kW, so the user
        // with mean 0.5 kW is fully hidden and the others share the rest.
        let curves = [log_curve(0.5), log_curve(1.0), log_curve(4.0)];
        let a = multiuser_allocation(&curves, 2.0).unwrap();
        assert_abs_diff_eq!(a.power_kw[0], 0.5, epsilon = 0.02);
        assert_abs_diff_eq!(a.power_kw[1], 0.75, epsilon = 0.02);
        assert_abs_diff_eq!(a.power_kw[2], 0.75, epsilon = 0.02);
        assert_abs_diff_eq!(curves[0].eval(a.power_kw[0]), 0.0, epsilon = 1e-9);
    }
}
