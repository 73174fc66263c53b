//! Online drift-plus-penalty control.
//!
//! Each slot minimizes `V·penalty(y) + ΔL(y)`, where the penalty is the
//! per-slot privacy-cost objective and `L(B) = ½(B − b_ref)²` is a quadratic
//! Lyapunov function of the state of charge around a reference level.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Policy, PolicyState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftPlusPenalty {
    /// Penalty weight `V ≥ 0`.
    pub v: f64,
    pub alpha: f64,
    pub target_kw: f64,
    /// Reference state of charge; half the capacity when absent.
    pub b_ref_kwh: Option<f64>,
}

impl DriftPlusPenalty {
    pub fn new(v: f64, alpha: f64, target_kw: f64) -> Result<Self> {
        if !(v >= 0.0) || !(0.0..=1.0).contains(&alpha) || !target_kw.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "drift-plus-penalty needs V ≥ 0, α in [0, 1] and a finite target (V={v}, α={alpha}, W={target_kw})"
            )));
        }
        Ok(Self {
            v,
            alpha,
            target_kw,
            b_ref_kwh: None,
        })
    }
}

/// The per-slot minimizer, clipped to the feasible interval.
///
/// With `δ = (e − x + y)τ` the implied change of charge, the slot objective
/// `V[(1−α)cτy + α(y−W)²] + (B − b_ref)δ + ½δ²` is a convex quadratic in `y`,
/// so its minimizer is available in closed form.
pub fn online_drift_plus_penalty(state: &PolicyState<'_>, params: &DriftPlusPenalty) -> f64 {
    let tau = state.slot_hours;
    let b_ref = params
        .b_ref_kwh
        .unwrap_or(0.5 * state.battery.capacity_kwh);
    let drift = state.soc.stored_kwh() - b_ref;
    let (v, a, w) = (params.v, params.alpha, params.target_kw);
    let numerator = 2.0 * v * a * w
        - v * (1.0 - a) * state.price * tau
        - drift * tau
        - tau * tau * (state.res_kw - state.load_kw);
    let y = numerator / (2.0 * v * a + tau * tau);
    state.clamp(y)
}

impl Policy for DriftPlusPenalty {
    fn name(&self) -> String {
        "drift_plus_penalty".into()
    }

    fn decide(&mut self, state: &PolicyState<'_>, _rng: &mut dyn RngCore) -> f64 {
        online_drift_plus_penalty(state, self)
    }
}
