use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A power trace on a fixed slot grid, one value in kW per slot.
///
/// User loads are always nonnegative. Grid loads produced under net
/// metering may go negative and are built with [`LoadTrace::grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadTrace {
    slot_hours: f64,
    values: Vec<f64>,
}

impl LoadTrace {
    pub fn new(values: Vec<f64>, slot_hours: f64) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "load value {v} at slot {i} must be finite and nonnegative"
            )));
        }
        Self::grid(values, slot_hours)
    }

    /// Builds a grid-side trace; negative values (export) are allowed.
    pub fn grid(values: Vec<f64>, slot_hours: f64) -> Result<Self> {
        if !(slot_hours > 0.0 && slot_hours.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "slot duration must be positive, got {slot_hours}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite grid value".into()));
        }
        Ok(Self { slot_hours, values })
    }

    pub fn slot_hours(&self) -> f64 {
        self.slot_hours
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn energy_kwh(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.slot_hours
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_bad_slot() {
        assert!(LoadTrace::new(vec![1.0, -0.1], 1.0).is_err());
        assert!(LoadTrace::new(vec![1.0], 0.0).is_err());
        assert!(LoadTrace::new(vec![f64::NAN], 1.0).is_err());
        assert!(LoadTrace::grid(vec![-1.0], 0.5).is_ok());
    }

    #[test]
    fn energy_uses_slot_duration() {
        let t = LoadTrace::new(vec![1.0, 2.0, 3.0], 0.5).unwrap();
        assert_eq!(t.energy_kwh(), 3.0);
        assert_eq!(t.mean(), 2.0);
    }
}
