//! Fisher information of the user load given the grid load, and the
//! Cramér-Rao bound it implies for any unbiased estimator of the load.
//!
//! Only memoryless policies are covered: the grid load of slot `t` depends on
//! the user load of slot `t` alone through a smooth conditional density, so
//! the Fisher information matrix is diagonal.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A conditional density `p(y | x)` that is smooth in the parameter `x`.
pub trait ConditionalDensity {
    fn density(&self, y: f64, x: f64) -> f64;

    /// An interval of `y` holding all but a negligible part of the mass of
    /// `p(· | x)`.
    fn support(&self, x: f64) -> (f64, f64);
}

/// `y | x ~ Normal(x, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    pub sigma: f64,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma} must be positive")));
        }
        Ok(Self { sigma })
    }
}

impl ConditionalDensity for GaussianKernel {
    fn density(&self, y: f64, x: f64) -> f64 {
        let z = (y - x) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    fn support(&self, x: f64) -> (f64, f64) {
        (x - 12.0 * self.sigma, x + 12.0 * self.sigma)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..order {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[order - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

const GL_ORDER: usize = 20;
const PANELS: usize = 48;

/// Fisher information below this value is treated as singular.
pub const SINGULAR_FI: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherCrb {
    /// Diagonal of the Fisher information matrix, one entry per slot.
    pub information: Vec<f64>,
    /// `Tr(FI⁻¹)`, the Cramér-Rao lower bound on the summed estimation error
    /// variance of an unbiased estimator.
    pub trace_inverse: f64,
}

impl FisherCrb {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.information))
    }
}

/// Fisher information of one slot: `∫ (∂ₓ ln p(y|x))² p(y|x) dy`, with the
/// score by central differences and the integral by composite Gauss-Legendre
/// quadrature over the density's support.
pub fn slot_fisher_information<K: ConditionalDensity + ?Sized>(kernel: &K, x: f64) -> f64 {
    let (lo, hi) = kernel.support(x);
    let h = 1e-4 * (hi - lo).max(f64::EPSILON) / 24.0;
    let (nodes, weights) = gauss_legendre(GL_ORDER);
    let width = (hi - lo) / PANELS as f64;
    let mut total = 0.0;
    for panel in 0..PANELS {
        let mid = lo + (panel as f64 + 0.5) * width;
        for (z, w) in nodes.iter().zip(&weights) {
            let y = mid + 0.5 * width * z;
            let p = kernel.density(y, x);
            if p <= 0.0 {
                continue;
            }
            let up = kernel.density(y, x + h);
            let down = kernel.density(y, x - h);
            let score = if up > 0.0 && down > 0.0 {
                (up.ln() - down.ln()) / (2.0 * h)
            } else {
                (up - down) / (2.0 * h * p)
            };
            total += 0.5 * width * w * score * score * p;
        }
    }
    total
}

/// Fisher information matrix and Cramér-Rao bound for the load sequence `xs`.
pub fn fisher_crb<K: ConditionalDensity + ?Sized>(kernel: &K, xs: &[f64]) -> Result<FisherCrb> {
    if xs.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let information: Vec<f64> = xs.iter().map(|x| slot_fisher_information(kernel, *x)).collect();
    if let Some((slot, value)) = information
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > SINGULAR_FI))
    {
        return Err(Error::SingularFi { slot, value: *value });
    }
    let trace_inverse = information.iter().map(|v| 1.0 / v).sum();
    Ok(FisherCrb {
        information,
        trace_inverse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(GL_ORDER);
        let integral = |k: i32| x.iter().zip(&w).map(|(a, b)| b * a.powi(k)).sum::<f64>();
        assert_relative_eq!(integral(0), 2.0, epsilon = 1e-14);
        assert_relative_eq!(integral(38), 2.0 / 39.0, epsilon = 1e-13);
        assert!(integral(7).abs() < 1e-15);
    }

    #[test]
    fn gaussian_information() {
        let k = GaussianKernel::new(0.5).unwrap();
        let out = fisher_crb(&k, &[0.0, 1.0, 2.5]).unwrap();
        for v in &out.information {
            assert_relative_eq!(*v, 4.0, max_relative = 1e-8);
        }
        assert_relative_eq!(out.trace_inverse, 0.75, max_relative = 1e-8);
        assert_eq!(out.matrix()[(1, 2)], 0.0);
    }

    struct Flat;
    impl ConditionalDensity for Flat {
        fn density(&self, y: f64, _x: f64) -> f64 {
            if (0.0..=1.0).contains(&y) { 1.0 } else { 0.0 }
        }
        fn support(&self, _x: f64) -> (f64, f64) {
            (0.0, 1.0)
        }
    }

    #[test]
    fn parameter_free_density_is_singular() {
        assert!(matches!(fisher_crb(&Flat, &[0.3, 0.4]), Err(Error::SingularFi { slot: 0, .. })));
    }
}
