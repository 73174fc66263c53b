use rand::{Rng, RngCore};
use rand_distr::{Distribution, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the renewable source produces energy, slot by slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResModel {
    None,
    /// A fixed, known generation trace; repeats if shorter than the run.
    Trace { values_kw: Vec<f64> },
    /// `peak_kw` with probability `p`, zero otherwise.
    Bernoulli { p: f64, peak_kw: f64 },
    /// I.i.d. draws from a finite pmf.
    Iid { levels_kw: Vec<f64>, probs: Vec<f64> },
    /// A finite Markov chain over generation levels.
    Markov {
        levels_kw: Vec<f64>,
        transition: Vec<Vec<f64>>,
        initial: Vec<f64>,
    },
}

/// Renewable source: generation model plus its power ceiling `E_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResParams {
    pub max_kw: f64,
    pub model: ResModel,
}

fn check_pmf(probs: &[f64], what: &str) -> Result<()> {
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "{what} must be a probability vector (sum {sum})"
        )));
    }
    Ok(())
}

impl ResParams {
    pub fn none() -> Self {
        Self {
            max_kw: 0.0,
            model: ResModel::None,
        }
    }

    pub fn bernoulli(p: f64, peak_kw: f64) -> Result<Self> {
        let r = Self {
            max_kw: peak_kw,
            model: ResModel::Bernoulli { p, peak_kw },
        };
        r.validate()?;
        Ok(r)
    }

    pub fn trace(values_kw: Vec<f64>) -> Result<Self> {
        let max_kw = values_kw.iter().cloned().fold(0.0, f64::max);
        let r = Self {
            max_kw,
            model: ResModel::Trace { values_kw },
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_kw >= 0.0 && self.max_kw.is_finite()) {
            return Err(Error::InvalidParameter("E_max must be >= 0".into()));
        }
        let within = |v: &f64| *v >= 0.0 && *v <= self.max_kw + 1e-12;
        match &self.model {
            ResModel::None => Ok(()),
            ResModel::Trace { values_kw } => {
                if values_kw.is_empty() || !values_kw.iter().all(within) {
                    return Err(Error::InvalidParameter(
                        "RES trace must be nonempty with values in [0, E_max]".into(),
                    ));
                }
                Ok(())
            }
            ResModel::Bernoulli { p, peak_kw } => {
                if !(0.0..=1.0).contains(p) || !within(peak_kw) {
                    return Err(Error::InvalidParameter(format!(
                        "Bernoulli RES needs p in [0,1] and peak in [0, E_max]; got p={p}, peak={peak_kw}"
                    )));
                }
                Ok(())
            }
            ResModel::Iid { levels_kw, probs } => {
                if levels_kw.len() != probs.len() || !levels_kw.iter().all(within) {
                    return Err(Error::InvalidParameter("bad i.i.d. RES levels".into()));
                }
                check_pmf(probs, "RES pmf")
            }
            ResModel::Markov {
                levels_kw,
                transition,
                initial,
            } => {
                let k = levels_kw.len();
                if k == 0
                    || !levels_kw.iter().all(within)
                    || initial.len() != k
                    || transition.len() != k
                    || transition.iter().any(|row| row.len() != k)
                {
                    return Err(Error::InvalidParameter("bad Markov RES shape".into()));
                }
                check_pmf(initial, "RES initial distribution")?;
                transition
                    .iter()
                    .try_for_each(|row| check_pmf(row, "RES transition row"))
            }
        }
    }

    /// Mean generation in kW under the stationary law of the model (for the
    /// Markov chain, the initial distribution propagated for a long time).
    pub fn mean_kw(&self) -> f64 {
        match &self.model {
            ResModel::None => 0.0,
            ResModel::Trace { values_kw } => {
                values_kw.iter().sum::<f64>() / values_kw.len() as f64
            }
            ResModel::Bernoulli { p, peak_kw } => p * peak_kw,
            ResModel::Iid { levels_kw, probs } => {
                levels_kw.iter().zip(probs).map(|(l, p)| l * p).sum()
            }
            ResModel::Markov {
                levels_kw,
                transition,
                initial,
            } => {
                let mut dist = initial.clone();
                for _ in 0..10_000 {
                    let mut next = vec![0.0; dist.len()];
                    for (i, pi) in dist.iter().enumerate() {
                        for (j, tij) in transition[i].iter().enumerate() {
                            next[j] += pi * tij;
                        }
                    }
                    dist = next;
                }
                levels_kw.iter().zip(&dist).map(|(l, p)| l * p).sum()
            }
        }
    }

    /// Draws `n` slots of generation.
    pub fn generate(&self, n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.validate()?;
        let out = match &self.model {
            ResModel::None => vec![0.0; n],
            ResModel::Trace { values_kw } => values_kw.iter().cycle().take(n).cloned().collect(),
            ResModel::Bernoulli { p, peak_kw } => (0..n)
                .map(|_| if rng.random::<f64>() < *p { *peak_kw } else { 0.0 })
                .collect(),
            ResModel::Iid { levels_kw, probs } => {
                let dist = WeightedIndex::new(probs)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                (0..n).map(|_| levels_kw[dist.sample(rng)]).collect()
            }
            ResModel::Markov {
                levels_kw,
                transition,
                initial,
            } => {
                let rows = transition
                    .iter()
                    .map(WeightedIndex::new)
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                let init = WeightedIndex::new(initial)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                let mut state = init.sample(rng);
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    out.push(levels_kw[state]);
                    state = rows[state].sample(rng);
                }
                out
            }
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_values_stay_in_range() {
        let res = ResParams {
            max_kw: 2.0,
            model: ResModel::Markov {
                levels_kw: vec![0.0, 1.0, 2.0],
                transition: vec![vec![0.5, 0.5, 0.0], vec![0.2, 0.6, 0.2], vec![0.0, 0.5, 0.5]],
                initial: vec![1.0, 0.0, 0.0],
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = res.generate(500, &mut rng).unwrap();
        assert!(v.iter().all(|x| (0.0..=2.0).contains(x)));
        assert!((res.mean_kw() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_levels_above_max() {
        let res = ResParams {
            max_kw: 1.0,
            model: ResModel::Iid {
                levels_kw: vec![0.0, 2.0],
                probs: vec![0.5, 0.5],
            },
        };
        assert!(res.validate().is_err());
        assert!(ResParams::bernoulli(1.5, 1.0).is_err());
    }
}
