//! Finite-alphabet distributions, conditional kernels and the entropy,
//! divergence and mutual-information functionals over them.
//!
//! Entropy and mutual information are in bits; divergences are in nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values within this distance are the same alphabet symbol.
pub const SYMBOL_TOLERANCE: f64 = 1e-9;

pub fn bits_to_nats(bits: f64) -> f64 {
    bits * std::f64::consts::LN_2
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// Shannon entropy of a probability vector, in bits.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>()
}

/// `D(p || q)` in nats; `+inf` when `p` puts mass where `q` has none.
pub fn kl_nats(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "divergence needs a common alphabet");
    let mut d = 0.0;
    for (pi, qi) in p.iter().zip(q) {
        if *pi > 0.0 {
            if *qi <= 0.0 {
                return f64::INFINITY;
            }
            d += pi * (pi / qi).ln();
        }
    }
    d.max(0.0)
}

/// Mutual information in bits of a joint probability table.
pub fn joint_mutual_information_bits(joint: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let ncols = joint.first().map_or(0, Vec::len);
    let cols: Vec<f64> = (0..ncols).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, pij) in row.iter().enumerate() {
            if *pij > 0.0 {
                mi += pij * (pij / rows[i] / cols[j]).log2();
            }
        }
    }
    mi.max(0.0)
}

/// A probability mass function over a sorted set of kW values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    alphabet: Vec<f64>,
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(alphabet: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if alphabet.is_empty() || alphabet.len() != probs.len() {
            return Err(Error::InvalidParameter(format!(
                "pmf needs a nonempty alphabet with one probability per symbol ({} vs {})",
                alphabet.len(),
                probs.len()
            )));
        }
        if alphabet.iter().any(|a| !a.is_finite())
            || alphabet.windows(2).any(|w| w[1] - w[0] <= SYMBOL_TOLERANCE)
        {
            return Err(Error::InvalidParameter(
                "pmf alphabet must be finite and strictly increasing".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "pmf probabilities must be nonnegative and sum to 1 (sum {sum})"
            )));
        }
        let probs = probs.into_iter().map(|p| p / sum).collect();
        Ok(Self { alphabet, probs })
    }

    pub fn uniform(alphabet: Vec<f64>) -> Result<Self> {
        let k = alphabet.len().max(1);
        Self::new(alphabet, vec![1.0 / k as f64; k])
    }

    /// Uniform over `{0, 1, ..., k-1}`.
    pub fn uniform_levels(k: usize) -> Result<Self> {
        Self::uniform((0..k).map(|i| i as f64).collect())
    }

    /// Bernoulli on `{0, 1}` with `Pr{1} = q`.
    pub fn bernoulli(q: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![1.0 - q, q])
    }

    /// Binomial(`trials`, `p`) on `{0, ..., trials}`.
    pub fn binomial(trials: usize, p: f64) -> Result<Self> {
        let mut probs = Vec::with_capacity(trials + 1);
        let mut coeff = 1.0;
        for k in 0..=trials {
            if k > 0 {
                coeff *= (trials - k + 1) as f64 / k as f64;
            }
            probs.push(coeff * p.powi(k as i32) * (1.0 - p).powi((trials - k) as i32));
        }
        Self::new((0..=trials).map(|k| k as f64).collect(), probs)
    }

    pub fn alphabet(&self) -> &[f64] {
        &self.alphabet
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphabet.is_empty()
    }

    pub fn entropy_bits(&self) -> f64 {
        entropy_bits(&self.probs)
    }

    pub fn mean(&self) -> f64 {
        self.alphabet.iter().zip(&self.probs).map(|(a, p)| a * p).sum()
    }

    pub fn index_of(&self, value: f64) -> Option<usize> {
        index_of(&self.alphabet, value)
    }

    pub fn same_alphabet(&self, other: &Pmf) -> bool {
        self.alphabet.len() == other.alphabet.len()
            && self
                .alphabet
                .iter()
                .zip(&other.alphabet)
                .all(|(a, b)| (a - b).abs() <= SYMBOL_TOLERANCE)
    }
}

pub(crate) fn index_of(alphabet: &[f64], value: f64) -> Option<usize> {
    let i = alphabet.partition_point(|a| *a < value - SYMBOL_TOLERANCE);
    (i < alphabet.len() && (alphabet[i] - value).abs() <= SYMBOL_TOLERANCE).then_some(i)
}

/// A conditional pmf `p(y | x)`: one row per input symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl Kernel {
    pub fn new(input: Vec<f64>, output: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != input.len() || rows.iter().any(|r| r.len() != output.len()) {
            return Err(Error::InvalidParameter("kernel shape mismatch".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= -1e-15)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "kernel row {i} is not a pmf (sum {sum})"
                )));
            }
        }
        Ok(Self { input, output, rows })
    }

    /// `y = x` with probability one.
    pub fn identity(alphabet: &[f64]) -> Self {
        let k = alphabet.len();
        let rows = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            input: alphabet.to_vec(),
            output: alphabet.to_vec(),
            rows,
        }
    }

    pub fn output_probs(&self, px: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.output.len()];
        for (row, p) in self.rows.iter().zip(px) {
            for (qj, kij) in q.iter_mut().zip(row) {
                *qj += p * kij;
            }
        }
        q
    }

    pub fn mutual_information_bits(&self, px: &[f64]) -> f64 {
        let joint: Vec<Vec<f64>> = self
            .rows
            .iter()
            .zip(px)
            .map(|(row, p)| row.iter().map(|k| p * k).collect())
            .collect();
        joint_mutual_information_bits(&joint)
    }

    /// `E[x - y]` under input distribution `px`.
    pub fn mean_reduction(&self, px: &[f64]) -> f64 {
        let mut d = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for (j, k) in row.iter().enumerate() {
                d += px[i] * k * (self.input[i] - self.output[j]);
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn subnormal_kernel_entries_keep_information_finite() {
        let joint = vec![vec![0.5, 0.0], vec![0.5, 4e-324]];
        let mi = joint_mutual_information_bits(&joint);
        assert!(mi.is_finite() && mi < 1e-300);
    }

    #[test]
    fn entropy_of_uniform() {
        assert_relative_eq!(Pmf::uniform_levels(4).unwrap().entropy_bits(), 2.0, epsilon = 1e-15);
        assert_relative_eq!(Pmf::uniform_levels(5).unwrap().entropy_bits(), 5f64.log2(), epsilon = 1e-15);
        assert_eq!(entropy_bits(&[1.0, 0.0]), 0.0);
    }

    #[test]
    fn kl_closed_form() {
        assert_relative_eq!(kl_nats(&[1.0, 0.0], &[0.5, 0.5]), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(kl_nats(&[0.5, 0.5], &[1.0, 0.0]), f64::INFINITY);
        assert_eq!(kl_nats(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    }

    #[test]
    fn rejects_bad_pmfs() {
        assert!(Pmf::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(Pmf::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(Pmf::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn binomial_sums_to_one() {
        let b = Pmf::binomial(4, 0.3).unwrap();
        assert_relative_eq!(b.mean(), 1.2, epsilon = 1e-12);
        assert_relative_eq!(b.probs()[0], 0.7f64.powi(4), epsilon = 1e-15);
    }

    #[test]
    fn identity_kernel_leaks_entropy() {
        let px = Pmf::new(vec![0.0, 1.0, 2.0], vec![0.2, 0.3, 0.5]).unwrap();
        let k = Kernel::identity(px.alphabet());
        assert_relative_eq!(k.mutual_information_bits(px.probs()), px.entropy_bits(), epsilon = 1e-12);
        assert_eq!(k.mean_reduction(px.probs()), 0.0);
    }

    #[test]
    fn symbol_lookup_tolerates_rounding() {
        let a = [0.0, 0.5, 1.0];
        assert_eq!(index_of(&a, 0.5 + 1e-12), Some(1));
        assert_eq!(index_of(&a, 0.7), None);
    }
}
