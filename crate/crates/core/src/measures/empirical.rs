//! Trace-based measures: variance around a target, histogram estimates of
//! mutual information and relative entropy, and an edge counter standing in
//! for a load-monitoring attacker.

use serde::{Deserialize, Serialize};

use super::pmf::{joint_mutual_information_bits, kl_nats};
use crate::error::{Error, Result};
use crate::model::LoadTrace;

/// `(1/n) Σ (y_t − W)²`.
pub fn load_variance(grid: &LoadTrace, target_kw: f64) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let sum: f64 = grid.values().iter().map(|y| (y - target_kw).powi(2)).sum();
    Ok(sum / grid.len() as f64)
}

/// Number of slots where the load jumps by at least `threshold_kw`.
pub fn feature_count(trace: &LoadTrace, threshold_kw: f64) -> usize {
    trace
        .values()
        .windows(2)
        .filter(|w| (w[1] - w[0]).abs() >= threshold_kw)
        .count()
}

/// Maps power values to histogram bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Quantizer {
    /// `bins` equal-width bins over `[min_kw, max_kw]`; values outside are
    /// clamped into the end bins.
    Uniform { min_kw: f64, max_kw: f64, bins: usize },
    /// Nearest of the listed levels.
    Levels { levels_kw: Vec<f64> },
}

impl Quantizer {
    pub fn uniform(min_kw: f64, max_kw: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(max_kw > min_kw) {
            return Err(Error::InvalidParameter(format!(
                "uniform quantizer needs bins > 0 and max > min (got {bins} over [{min_kw}, {max_kw}])"
            )));
        }
        Ok(Self::Uniform { min_kw, max_kw, bins })
    }

    pub fn levels(levels_kw: Vec<f64>) -> Result<Self> {
        if levels_kw.is_empty() {
            return Err(Error::InvalidParameter("quantizer needs at least one level".into()));
        }
        Ok(Self::Levels { levels_kw })
    }

    pub fn bins(&self) -> usize {
        match self {
            Quantizer::Uniform { bins, .. } => *bins,
            Quantizer::Levels { levels_kw } => levels_kw.len(),
        }
    }

    pub fn bin(&self, value_kw: f64) -> usize {
        match self {
            Quantizer::Uniform { min_kw, max_kw, bins } => {
                let r = (value_kw - min_kw) / (max_kw - min_kw) * *bins as f64;
                (r.floor().max(0.0) as usize).min(bins - 1)
            }
            Quantizer::Levels { levels_kw } => levels_kw
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - value_kw).abs().total_cmp(&(b.1 - value_kw).abs()))
                .map_or(0, |(i, _)| i),
        }
    }
}

/// Default smoothing `1/(n·bins²)` for a joint table.
pub fn default_joint_smoothing(n: usize, bins: usize) -> f64 {
    1.0 / (n.max(1) as f64 * (bins * bins) as f64)
}

/// Plug-in mutual information (bits) of the joint histogram of `(x_t, y_t)`.
///
/// `kappa` is added to every cell of the relative-frequency table before
/// normalizing; `None` uses [`default_joint_smoothing`].
pub fn empirical_mi_smoothed(x: &LoadTrace, y: &LoadTrace, quantizer: &Quantizer, kappa: Option<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let b = quantizer.bins();
    let n = x.len();
    let kappa = kappa.unwrap_or_else(|| default_joint_smoothing(n, b));
    if !(kappa >= 0.0) {
        return Err(Error::InvalidParameter(format!("smoothing {kappa} must be ≥ 0")));
    }
    let mut joint = vec![vec![0.0; b]; b];
    for (xv, yv) in x.values().iter().zip(y.values()) {
        joint[quantizer.bin(*xv)][quantizer.bin(*yv)] += 1.0 / n as f64;
    }
    let total = 1.0 + kappa * (b * b) as f64;
    for row in &mut joint {
        for cell in row.iter_mut() {
            *cell = (*cell + kappa) / total;
        }
    }
    Ok(joint_mutual_information_bits(&joint))
}

fn histogram(trace: &LoadTrace, quantizer: &Quantizer, kappa: f64) -> Vec<f64> {
    let b = quantizer.bins();
    let n = trace.len().max(1) as f64;
    let mut h = vec![0.0; b];
    for v in trace.values() {
        h[quantizer.bin(*v)] += 1.0 / n;
    }
    let total = 1.0 + kappa * b as f64;
    h.iter().map(|c| (c + kappa) / total).collect()
}

/// Relative entropy `D(hist(x) || hist(y))` in nats, with `kappa` added to
/// every bin of both relative-frequency histograms (default `1/(n·bins)`).
pub fn empirical_kl(x: &LoadTrace, y: &LoadTrace, quantizer: &Quantizer, kappa: Option<f64>) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let kappa = kappa.unwrap_or_else(|| 1.0 / (x.len().max(y.len()) * quantizer.bins()) as f64);
    Ok(kl_nats(&histogram(x, quantizer, kappa), &histogram(y, quantizer, kappa)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn trace(v: &[f64]) -> LoadTrace {
        LoadTrace::new(v.to_vec(), 0.5).unwrap()
    }

    #[test]
    fn variance_examples() {
        assert_eq!(load_variance(&trace(&[1.0, 1.0]), 1.0).unwrap(), 0.0);
        assert_eq!(load_variance(&trace(&[0.0, 2.0]), 1.0).unwrap(), 1.0);
        assert!(matches!(load_variance(&trace(&[]), 1.0), Err(Error::EmptyTrace)));
    }

    #[test]
    fn feature_examples() {
        assert_eq!(feature_count(&trace(&[1.0; 5]), 0.5), 0);
        assert_eq!(feature_count(&trace(&[0.0, 2.0, 2.0, 0.0]), 1.0), 2);
    }

    #[test]
    fn mi_of_identical_traces_is_entropy() {
        let x = trace(&[0.0, 1.0, 1.0, 2.0, 0.0, 2.0, 2.0, 2.0]);
        let q = Quantizer::levels(vec![0.0, 1.0, 2.0]).unwrap();
        let h = super::super::pmf::entropy_bits(&[0.25, 0.25, 0.5]);
        assert_abs_diff_eq!(empirical_mi_smoothed(&x, &x, &q, Some(0.0)).unwrap(), h, epsilon = 1e-12);
    }

    #[test]
    fn hand_histogram() {
        // Pairs (0,0), (0,1), (1,1), (1,1): p = [[1/4, 1/4], [0, 1/2]].
        let x = trace(&[0.0, 0.0, 1.0, 1.0]);
        let y = trace(&[0.0, 1.0, 1.0, 1.0]);
        let q = Quantizer::levels(vec![0.0, 1.0]).unwrap();
        let hand = 0.25 * (0.25f64 / (0.5 * 0.25)).log2()
            + 0.25 * (0.25f64 / (0.5 * 0.75)).log2()
            + 0.5 * (0.5f64 / (0.5 * 0.75)).log2();
        assert_abs_diff_eq!(empirical_mi_smoothed(&x, &y, &q, Some(0.0)).unwrap(), hand, epsilon = 1e-12);
        assert!(empirical_mi_smoothed(&x, &trace(&[0.0]), &q, None).is_err());
    }

    #[test]
    fn kl_examples() {
        let q = Quantizer::uniform(0.0, 2.0, 2).unwrap();
        let x = trace(&[0.1, 0.2, 1.5, 1.7]);
        assert_eq!(empirical_kl(&x, &x, &q, None).unwrap(), 0.0);
        let low = trace(&[0.1; 10]);
        let high = trace(&[1.9; 10]);
        let d = empirical_kl(&low, &high, &q, Some(1e-6)).unwrap();
        assert!(d.is_finite() && d > 10.0);
        // hist(x) = (3/4, 1/4), hist(y) = (1/4, 3/4) without smoothing.
        let y = trace(&[0.1, 1.2, 1.5, 1.7]);
        let x = trace(&[0.1, 0.2, 0.3, 1.7]);
        let hand = 0.75 * 3f64.ln() + 0.25 * (1.0f64 / 3.0).ln();
        assert_abs_diff_eq!(empirical_kl(&x, &y, &q, Some(0.0)).unwrap(), hand, epsilon = 1e-12);
    }
}
