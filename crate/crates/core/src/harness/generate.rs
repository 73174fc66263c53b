//! Synthetic load and renewable traces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::ingest::DEFAULT_SLOT_HOURS;
use crate::error::{Error, Result};
use crate::model::LoadTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// `peak_kw` with probability `q_x`, zero otherwise.
    Bernoulli {
        q_x: f64,
        #[serde(default = "one")]
        peak_kw: f64,
    },
    Iid { levels_kw: Vec<f64>, probs: Vec<f64> },
    Markov {
        levels_kw: Vec<f64>,
        transition: Vec<Vec<f64>>,
        initial: Vec<f64>,
    },
    Exponential { mean_kw: f64 },
    /// A repeating daily generation curve, available in each slot with
    /// probability `p_e` (zero otherwise, e.g. cloud cover).
    Solar { day_curve_kw: Vec<f64>, p_e: f64 },
    /// A low base load with appliance bursts: each idle slot starts a burst of
    /// `spike_kw` with probability `start_prob`, lasting 1 to `max_duration`
    /// slots.
    Spiky {
        base_kw: f64,
        spike_kw: f64,
        start_prob: f64,
        max_duration: usize,
    },
}

fn one() -> f64 {
    1.0
}

pub(crate) fn default_slot_hours() -> f64 {
    DEFAULT_SLOT_HOURS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub length: usize,
    #[serde(default = "default_slot_hours")]
    pub slot_hours: f64,
    /// Seed of the generator stream; experiments derive one from their master
    /// seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {p} outside [0, 1]")))
    }
}

fn nonnegative(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite() && *v >= 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative")))
    }
}

fn weights(name: &str, probs: &[f64], len: usize) -> Result<WeightedIndex<f64>> {
    let sum: f64 = probs.iter().sum();
    if probs.len() != len || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("{name} must be a pmf over {len} levels")));
    }
    WeightedIndex::new(probs).map_err(|e| Error::InvalidParameter(format!("{name}: {e}")))
}

impl SyntheticSpec {
    pub fn new(generator: Generator, length: usize, seed: u64) -> Self {
        Self {
            generator,
            length,
            slot_hours: DEFAULT_SLOT_HOURS,
            seed: Some(seed),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidParameter("synthetic trace length must be positive".into()));
        }
        if !(self.slot_hours > 0.0) {
            return Err(Error::InvalidParameter("slot duration must be positive".into()));
        }
        match &self.generator {
            Generator::Bernoulli { q_x, peak_kw } => {
                probability("q_x", *q_x)?;
                nonnegative("peak_kw", &[*peak_kw])
            }
            Generator::Iid { levels_kw, probs } => {
                nonnegative("levels_kw", levels_kw)?;
                weights("probs", probs, levels_kw.len()).map(|_| ())
            }
            Generator::Markov {
                levels_kw,
                transition,
                initial,
            } => {
                nonnegative("levels_kw", levels_kw)?;
                weights("initial", initial, levels_kw.len())?;
                if transition.len() != levels_kw.len() {
                    return Err(Error::InvalidParameter("transition needs one row per level".into()));
                }
                transition
                    .iter()
                    .try_for_each(|row| weights("transition row", row, levels_kw.len()).map(|_| ()))
            }
            Generator::Exponential { mean_kw } => {
                if *mean_kw > 0.0 && mean_kw.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter("exponential mean must be positive".into()))
                }
            }
            Generator::Solar { day_curve_kw, p_e } => {
                probability("p_e", *p_e)?;
                if day_curve_kw.is_empty() {
                    return Err(Error::InvalidParameter("day curve is empty".into()));
                }
                nonnegative("day_curve_kw", day_curve_kw)
            }
            Generator::Spiky {
                base_kw,
                spike_kw,
                start_prob,
                max_duration,
            } => {
                nonnegative("spike levels", &[*base_kw, *spike_kw])?;
                probability("start_prob", *start_prob)?;
                if *max_duration == 0 {
                    return Err(Error::InvalidParameter("max_duration must be at least 1".into()));
                }
                Ok(())
            }
        }
    }
}

/// Generates the trace described by `spec`; identical specs give identical
/// traces.
pub fn generate(spec: &SyntheticSpec) -> Result<LoadTrace> {
    spec.validate()?;
    let n = spec.length;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.unwrap_or(0));
    let values: Vec<f64> = match &spec.generator {
        Generator::Bernoulli { q_x, peak_kw } => (0..n)
            .map(|_| if rng.random_bool(*q_x) { *peak_kw } else { 0.0 })
            .collect(),
        Generator::Iid { levels_kw, probs } => {
            let w = weights("probs", probs, levels_kw.len())?;
            (0..n).map(|_| levels_kw[w.sample(&mut rng)]).collect()
        }
        Generator::Markov {
            levels_kw,
            transition,
            initial,
        } => {
            let rows = transition
                .iter()
                .map(|r| weights("transition row", r, levels_kw.len()))
                .collect::<Result<Vec<_>>>()?;
            let mut state = weights("initial", initial, levels_kw.len())?.sample(&mut rng);
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(levels_kw[state]);
                state = rows[state].sample(&mut rng);
            }
            out
        }
        Generator::Exponential { mean_kw } => {
            let d = Exp::new(1.0 / mean_kw).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            (0..n).map(|_| d.sample(&mut rng)).collect()
        }
        Generator::Solar { day_curve_kw, p_e } => (0..n)
            .map(|t| {
                let sunny = rng.random_bool(*p_e);
                if sunny { day_curve_kw[t % day_curve_kw.len()] } else { 0.0 }
            })
            .collect(),
        Generator::Spiky {
            base_kw,
            spike_kw,
            start_prob,
            max_duration,
        } => {
            let mut out = Vec::with_capacity(n);
            let mut remaining = 0usize;
            for _ in 0..n {
                if remaining == 0 && rng.random_bool(*start_prob) {
                    remaining = rng.random_range(1..=*max_duration);
                }
                if remaining > 0 {
                    remaining -= 1;
                    out.push(base_kw + spike_kw);
                } else {
                    out.push(*base_kw);
                }
            }
            out
        }
    };
    LoadTrace::new(values, spec.slot_hours)
}

/// The spiky household trace shipped as `fixtures/spiky.csv`: one day of
/// one-minute samples with a 0.2 kW base load and 2 kW appliance bursts.
pub fn spiky_fixture_spec() -> SyntheticSpec {
    SyntheticSpec {
        generator: Generator::Spiky {
            base_kw: 0.2,
            spike_kw: 2.0,
            start_prob: 0.02,
            max_duration: 20,
        },
        length: 1440,
        slot_hours: 1.0 / 60.0,
        seed: Some(2017),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_bernoulli_is_all_zero() {
        let t = generate(&SyntheticSpec::new(Generator::Bernoulli { q_x: 0.0, peak_kw: 1.0 }, 100, 5)).unwrap();
        assert!(t.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn seeded_runs_repeat() {
        let spec = SyntheticSpec::new(
            Generator::Markov {
                levels_kw: vec![0.0, 1.0, 3.0],
                transition: vec![vec![0.8, 0.2, 0.0], vec![0.3, 0.4, 0.3], vec![0.0, 0.5, 0.5]],
                initial: vec![1.0, 0.0, 0.0],
            },
            500,
            9,
        );
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn bernoulli_mean_within_three_sigma() {
        let n = 20_000;
        let q = 0.3;
        let t = generate(&SyntheticSpec::new(Generator::Bernoulli { q_x: q, peak_kw: 1.0 }, n, 11)).unwrap();
        let sigma = (q * (1.0 - q) / n as f64).sqrt();
        assert!((t.mean() - q).abs() < 3.0 * sigma);
    }

    #[test]
    fn exponential_mean() {
        let t = generate(&SyntheticSpec::new(Generator::Exponential { mean_kw: 1.5 }, 100_000, 4)).unwrap();
        assert!((1.48..=1.52).contains(&t.mean()), "{}", t.mean());
    }

    #[test]
    fn solar_follows_curve() {
        let spec = SyntheticSpec::new(
            Generator::Solar {
                day_curve_kw: vec![0.0, 1.0, 2.0],
                p_e: 1.0,
            },
            6,
            0,
        );
        assert_eq!(generate(&spec).unwrap().values(), &[0.0, 1.0, 2.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&SyntheticSpec::new(Generator::Bernoulli { q_x: 1.5, peak_kw: 1.0 }, 3, 0)).is_err());
        assert!(generate(&SyntheticSpec::new(Generator::Exponential { mean_kw: 0.0 }, 3, 0)).is_err());
        let bad = Generator::Iid {
            levels_kw: vec![0.0, 1.0],
            probs: vec![0.5, 0.6],
        };
        assert!(generate(&SyntheticSpec::new(bad, 3, 0)).is_err());
    }
}
