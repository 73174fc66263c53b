use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-of-use tariff with piecewise-constant prices.
///
/// `boundaries = [t0 = 0, t1, ..., tM]` are slot indices; period `i` covers
/// slots `t(i-1)..t(i)` at price `prices[i-1]`. Runs longer than `tM` slots
/// repeat the pattern (a daily tariff over several days).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    boundaries: Vec<usize>,
    prices: Vec<f64>,
}

/// A maximal run of consecutive slots in the same price period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub period: usize,
    pub slots: Range<usize>,
}

impl Tariff {
    pub fn new(boundaries: Vec<usize>, prices: Vec<f64>) -> Result<Self> {
        if prices.is_empty() || boundaries.len() != prices.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "tariff needs M >= 1 prices and M + 1 boundaries; got {} and {}",
                prices.len(),
                boundaries.len()
            )));
        }
        if boundaries[0] != 0 || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "tariff boundaries must start at 0 and increase strictly".into(),
            ));
        }
        if prices.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("non-finite price".into()));
        }
        Ok(Self { boundaries, prices })
    }

    pub fn flat(price: f64) -> Self {
        Self::new(vec![0, 1], vec![price]).expect("flat tariff is valid")
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn num_periods(&self) -> usize {
        self.prices.len()
    }

    pub fn cycle_len(&self) -> usize {
        *self.boundaries.last().expect("nonempty boundaries")
    }

    /// Index of the price period containing slot `t`.
    pub fn period_of(&self, t: usize) -> usize {
        let local = t % self.cycle_len();
        self.boundaries[1..].partition_point(|&b| b <= local)
    }

    pub fn price_at(&self, t: usize) -> f64 {
        self.prices[self.period_of(t)]
    }

    pub fn slot_prices(&self, n: usize) -> Vec<f64> {
        (0..n).map(|t| self.price_at(t)).collect()
    }

    /// Consecutive same-period runs covering slots `0..n`.
    pub fn segments(&self, n: usize) -> Vec<Segment> {
        let mut out: Vec<Segment> = Vec::new();
        for t in 0..n {
            let period = self.period_of(t);
            match out.last_mut() {
                Some(seg) if seg.period == period && seg.slots.end == t => seg.slots.end = t + 1,
                _ => out.push(Segment {
                    period,
                    slots: t..t + 1,
                }),
            }
        }
        out
    }

    /// Energy cost `sum_t tau * y_t * C_t` of a grid schedule.
    pub fn cost(&self, grid_kw: &[f64], slot_hours: f64) -> f64 {
        grid_kw
            .iter()
            .enumerate()
            .map(|(t, y)| slot_hours * y * self.price_at(t))
            .sum()
    }
}
