//! Leakage bounds for storage-only systems: the single-letter i.i.d.
//! battery-charging problem and the trapdoor-channel bound.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::pmf::{entropy_bits, Pmf};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryLeakage {
    pub leakage_bits: f64,
    /// Distribution of the battery level over `{0, ..., B_max}`.
    pub theta: Vec<f64>,
}

const RESTARTS: usize = 8;
const MAX_ITER: usize = 100_000;

/// Integer symbol values of `px`.
fn integer_alphabet(px: &Pmf) -> Result<Vec<i64>> {
    px.alphabet()
        .iter()
        .map(|v| {
            let r = v.round();
            if (v - r).abs() > 1e-9 || r < 0.0 {
                Err(Error::DomainError(format!(
                    "battery leakage needs nonnegative integer loads, got {v}"
                )))
            } else {
                Ok(r as i64)
            }
        })
        .collect()
}

/// `I(B − X; X)` in bits for `B ~ θ` independent of `X`.
fn leakage(xs: &[i64], px: &[f64], theta: &[f64]) -> f64 {
    let x_max = *xs.iter().max().unwrap_or(&0);
    let offset = x_max as usize;
    let mut pw = vec![0.0; theta.len() + offset];
    for (x, p) in xs.iter().zip(px) {
        for (b, t) in theta.iter().enumerate() {
            pw[(b as i64 - x + x_max) as usize] += p * t;
        }
    }
    (entropy_bits(&pw) - entropy_bits(theta)).max(0.0)
}

/// Alternating minimization: `θ(b) ∝ exp(Σ_x p(x) ln p_W(b − x))`.
fn descend(xs: &[i64], px: &[f64], mut theta: Vec<f64>, tol: f64) -> (f64, Vec<f64>) {
    let x_max = *xs.iter().max().unwrap_or(&0);
    let mut value = leakage(xs, px, &theta);
    for _ in 0..MAX_ITER {
        let mut pw = vec![0.0; theta.len() + x_max as usize];
        for (x, p) in xs.iter().zip(px) {
            for (b, t) in theta.iter().enumerate() {
                pw[(b as i64 - x + x_max) as usize] += p * t;
            }
        }
        let mut next: Vec<f64> = (0..theta.len())
            .map(|b| {
                if theta[b] <= 0.0 {
                    return 0.0;
                }
                let s: f64 = xs
                    .iter()
                    .zip(px)
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(x, p)| p * pw[(b as i64 - x + x_max) as usize].ln())
                    .sum();
                s.exp()
            })
            .collect();
        let z: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= z);
        let next_value = leakage(xs, px, &next);
        let gain = value - next_value;
        theta = next;
        value = next_value;
        if gain.abs() < tol {
            break;
        }
    }
    (value, theta)
}

/// `J* = min_θ I(B − X; X)` over battery-level distributions on
/// `{0, ..., B_max}`, for loads on a nonnegative integer alphabet.
///
/// The objective is convex in `θ`; the minimization starts from the uniform
/// distribution and from random interior points.
pub fn iid_battery_leakage(px: &Pmf, b_max: usize, seed: u64) -> Result<BatteryLeakage> {
    let xs = integer_alphabet(px)?;
    let probs = px.probs();
    let levels = b_max + 1;
    if levels == 1 {
        return Ok(BatteryLeakage {
            leakage_bits: px.entropy_bits(),
            theta: vec![1.0],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(1.0, 1.0).expect("unit gamma");
    let mut starts = vec![vec![1.0 / levels as f64; levels]];
    for _ in 0..RESTARTS {
        let draw: Vec<f64> = (0..levels).map(|_| gamma.sample(&mut rng) + 1e-12).collect();
        let z: f64 = draw.iter().sum();
        starts.push(draw.into_iter().map(|v| v / z).collect());
    }
    let (leakage_bits, theta) = starts
        .into_iter()
        .map(|s| descend(&xs, probs, s, 1e-15))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one start");
    Ok(BatteryLeakage { leakage_bits, theta })
}

/// Leakage rate `1/⌈(B_max + 1)/X_max⌉` bits per slot of the trapdoor-channel
/// construction over stable output balls.
pub fn trapdoor_bound(b_max: i64, x_max: i64) -> Result<f64> {
    if x_max <= 0 || b_max < 0 {
        return Err(Error::DomainError(format!(
            "trapdoor bound needs X_max ≥ 1 and B_max ≥ 0 (got {x_max}, {b_max})"
        )));
    }
    let balls = (b_max + 1 + x_max - 1) / x_max;
    Ok(1.0 / balls as f64)
}
