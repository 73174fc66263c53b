//! Dense convex quadratic programming:
//! `min ½ xᵀHx + cᵀx  subject to  Gx ≤ b`.
//!
//! Primal-dual interior point with Mehrotra predictor-corrector steps,
//! followed by an active-set polish that solves the equality-constrained
//! KKT system on the identified active constraints.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub polish: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
            polish: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One nonnegative multiplier per inequality row.
    pub z: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub polished: bool,
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, c: DVector<f64>, g: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = c.len();
        if h.nrows() != n || h.ncols() != n || g.ncols() != n || g.nrows() != b.len() {
            return Err(Error::InvalidParameter(format!(
                "qp shapes: H {}x{}, c {}, G {}x{}, b {}",
                h.nrows(),
                h.ncols(),
                n,
                g.nrows(),
                g.ncols(),
                b.len()
            )));
        }
        Ok(Self { h, c, g, b })
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.c.dot(x)
    }

    /// Largest violation of stationarity, primal feasibility, dual
    /// feasibility and complementary slackness.
    pub fn kkt_residual(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let stationarity = (&self.h * x + &self.c + self.g.tr_mul(z)).amax();
        let slack = &self.b - &self.g * x;
        let mut worst = stationarity;
        for i in 0..slack.len() {
            worst = worst
                .max(-slack[i])
                .max(-z[i])
                .max((z[i] * slack[i]).abs());
        }
        worst
    }
}

/// Iterations without a better KKT merit after which the interior point stops.
const STALL_ITERATIONS: usize = 15;

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut a: f64 = 1.0;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            a = a.min(-v[i] / dv[i]);
        }
    }
    a
}

struct Newton {
    dx: DVector<f64>,
    ds: DVector<f64>,
    dz: DVector<f64>,
}

/// Solves the reduced Newton system for right-hand sides `r_d`, `r_p`, `r_c`.
fn newton(
    p: &QpProblem,
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    w: &DVector<f64>,
    s: &DVector<f64>,
    r_d: &DVector<f64>,
    r_p: &DVector<f64>,
    r_c: &DVector<f64>,
) -> Newton {
    let inner = w.component_mul(r_p) - r_c.component_div(s);
    let rhs = -r_d - p.g.tr_mul(&inner);
    let dx = chol.solve(&rhs);
    let gdx = &p.g * &dx;
    let dz = w.component_mul(&(&gdx + r_p)) - r_c.component_div(s);
    let ds = -r_p - gdx;
    Newton { dx, ds, dz }
}

pub fn solve_qp(p: &QpProblem, opts: &QpOptions) -> Result<QpSolution> {
    let n = p.c.len();
    let m = p.b.len();
    if m == 0 {
        return solve_unconstrained(p);
    }
    let mut x = DVector::zeros(n);
    let mut s = (&p.b - &p.g * &x).map(|v| v.max(1.0));
    let mut z = DVector::from_element(m, 1.0);
    let scale_c = 1.0 + p.c.amax();
    let scale_b = 1.0 + p.b.amax();
    let mut iterations = 0;
    let mut converged = false;
    let merit = |r_d: &DVector<f64>, r_p: &DVector<f64>, mu: f64| -> f64 {
        (r_d.amax() / scale_c).max(r_p.amax() / scale_b).max(mu)
    };
    // Iterates can degrade once rounding dominates, so keep the best one.
    let mut best_iter = (f64::INFINITY, x.clone(), z.clone());
    let mut since_best = 0;

    for it in 0..opts.max_iter {
        iterations = it;
        let r_d = &p.h * &x + &p.c + p.g.tr_mul(&z);
        let r_p = &p.g * &x + &s - &p.b;
        let mu = s.dot(&z) / m as f64;
        let score = merit(&r_d, &r_p, mu);
        if score < best_iter.0 {
            best_iter = (score, x.clone(), z.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_ITERATIONS {
                break;
            }
        }
        if r_d.amax() <= opts.tol * scale_c && r_p.amax() <= opts.tol * scale_b && mu <= opts.tol {
            converged = true;
            break;
        }
        let w = z.component_div(&s);
        let mut k = &p.h + p.g.tr_mul(&DMatrix::from_fn(m, n, |i, j| w[i] * p.g[(i, j)]));
        let reg = 1e-14 * (1.0 + k.diagonal().amax());
        for i in 0..n {
            k[(i, i)] += reg;
        }
        let chol = match k.clone().cholesky() {
            Some(c) => c,
            None => {
                for i in 0..n {
                    k[(i, i)] += 1e-10 * (1.0 + k[(i, i)].abs());
                }
                match k.cholesky() {
                    Some(c) => c,
                    None if best_iter.0.is_finite() => break,
                    None => return Err(Error::NotConverged("qp: singular Newton system".into())),
                }
            }
        };

        let r_c = s.component_mul(&z);
        let aff = newton(p, &chol, &w, &s, &r_d, &r_p, &r_c);
        let a_aff = max_step(&s, &aff.ds).min(max_step(&z, &aff.dz));
        let mu_aff = (&s + a_aff * &aff.ds).dot(&(&z + a_aff * &aff.dz)) / m as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let r_c = r_c + aff.ds.component_mul(&aff.dz) - DVector::from_element(m, sigma * mu);
        let step = newton(p, &chol, &w, &s, &r_d, &r_p, &r_c);
        let a = (0.99 * max_step(&s, &step.ds).min(max_step(&z, &step.dz))).min(1.0);
        x += a * &step.dx;
        s += a * &step.ds;
        z += a * &step.dz;
        s.apply(|v| *v = v.max(1e-300));
        z.apply(|v| *v = v.max(1e-300));
    }
    if !converged {
        (_, x, z) = best_iter;
    }

    let residual = p.kkt_residual(&x, &z);
    let mut candidate = QpSolution {
        objective: p.objective(&x),
        x,
        z,
        iterations,
        kkt_residual: residual,
        polished: false,
    };
    if opts.polish {
        if let Some(polished) = polish(p, &candidate) {
            if polished.kkt_residual < candidate.kkt_residual {
                candidate = polished;
            }
        }
    }
    if !converged && candidate.kkt_residual > 1e-6 * scale_c.max(scale_b) {
        return Err(Error::NotConverged(format!(
            "qp: interior point stopped after {iterations} iterations with KKT residual {:.3e}",
            candidate.kkt_residual
        )));
    }
    Ok(candidate)
}

fn solve_unconstrained(p: &QpProblem) -> Result<QpSolution> {
    let x = p
        .h
        .clone()
        .cholesky()
        .map(|c| c.solve(&(-&p.c)))
        .ok_or_else(|| Error::NotConverged("qp: unbounded without constraints".into()))?;
    let z = DVector::zeros(0);
    Ok(QpSolution {
        objective: p.objective(&x),
        kkt_residual: p.kkt_residual(&x, &z),
        x,
        z,
        iterations: 0,
        polished: true,
    })
}

/// Re-solves the KKT system with the constraints the interior point judged
/// active held as equalities.
fn polish(p: &QpProblem, sol: &QpSolution) -> Option<QpSolution> {
    let n = p.c.len();
    let slack = &p.b - &p.g * &sol.x;
    let active: Vec<usize> = (0..p.b.len()).filter(|&i| sol.z[i] > slack[i]).collect();
    let k = active.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-&p.c));
    for (r, &i) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = p.g[(i, j)];
            kkt[(j, n + r)] = p.g[(i, j)];
        }
        rhs[n + r] = p.b[i];
    }
    let solved = kkt.lu().solve(&rhs)?;
    if solved.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = solved.rows(0, n).into_owned();
    let mut z = DVector::zeros(p.b.len());
    for (r, &i) in active.iter().enumerate() {
        z[i] = solved[n + r];
    }
    let kkt_residual = p.kkt_residual(&x, &z);
    Some(QpSolution {
        objective: p.objective(&x),
        x,
        z,
        iterations: sol.iterations,
        kkt_residual,
        polished: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn box_constrained_projection() {
        // min ½|x - (2, -1)|²  s.t.  0 ≤ x ≤ 1
        let h = DMatrix::identity(2, 2);
        let c = DVector::from_vec(vec![-2.0, 1.0]);
        let g = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]);
        let p = QpProblem::new(h, c, g, b).unwrap();
        let sol = solve_qp(&p, &QpOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.x[1], 0.0, epsilon = 1e-10);
        assert!(sol.kkt_residual < 1e-10);
        assert_abs_diff_eq!(sol.z[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.z[3], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn linear_program() {
        // min -x - 2y  s.t.  x + y ≤ 1, x, y ≥ 0  → (0, 1)
        let h = DMatrix::zeros(2, 2);
        let c = DVector::from_vec(vec![-1.0, -2.0]);
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let p = QpProblem::new(h, c, g, b).unwrap();
        let sol = solve_qp(&p, &QpOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.objective, -2.0, epsilon = 1e-10);
        assert!(sol.kkt_residual < 1e-9);
    }

    #[test]
    fn equality_by_opposing_rows() {
        // min ½(x² + y²)  s.t.  x + y = 2
        let h = DMatrix::identity(2, 2);
        let c = DVector::zeros(2);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]);
        let b = DVector::from_vec(vec![2.0, -2.0]);
        let p = QpProblem::new(h, c, g, b).unwrap();
        let sol = solve_qp(&p, &QpOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-8);
    }
}
