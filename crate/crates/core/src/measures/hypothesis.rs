//! Hypothesis-testing privacy measures.
//!
//! An adversary observes the grid load and decides between two hypotheses on
//! the household's behaviour. The asymptotically optimal detector at a fixed
//! type-I level has type-II error decaying with exponent `D(p_{Y|h0} || p_{Y|h1})`,
//! so an energy-management policy can minimize that divergence subject to a
//! renewable-energy budget. Divergences here are in nats.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pmf::{index_of, kl_nats, Kernel, Pmf, SYMBOL_TOLERANCE};
use crate::error::{Error, Result};

/// Demand distributions under the two hypotheses and the average renewable
/// power available to mask them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisPair {
    pub p0: Pmf,
    pub p1: Pmf,
    pub pbar_kw: f64,
}

impl HypothesisPair {
    pub fn new(p0: Pmf, p1: Pmf, pbar_kw: f64) -> Result<Self> {
        if !p0.same_alphabet(&p1) {
            return Err(Error::InvalidParameter("hypotheses need a common alphabet".into()));
        }
        if !(pbar_kw >= 0.0) {
            return Err(Error::InvalidParameter(format!("renewable budget {pbar_kw} must be >= 0")));
        }
        Ok(Self { p0, p1, pbar_kw })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlOptimum {
    pub kl_nats: f64,
    pub kernel_h0: Kernel,
    pub kernel_h1: Kernel,
    pub iterations: usize,
}

const MAX_PG_ITER: usize = 200_000;

/// Minimizes `D(p_{Y|h0} || p_{Y|h1})` over memoryless kernels `p(y | x, h_j)`
/// with `y ≤ x` on the demand alphabet and `E[X − Y | h_j] ≤ P̄` for both
/// hypotheses.
///
/// The divergence is jointly convex in the two kernels; it is minimized by
/// projected gradient with Armijo backtracking, stopping when the projected
/// gradient step falls below `tol`.
pub fn hypothesis_kl_optimize(pair: &HypothesisPair, tol: f64) -> Result<KlOptimum> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let alphabet = pair.p0.alphabet().to_vec();
    let identity = Kernel::identity(&alphabet);
    if pair.pbar_kw == 0.0 {
        return Ok(KlOptimum {
            kl_nats: kl_nats(pair.p0.probs(), pair.p1.probs()),
            kernel_h0: identity.clone(),
            kernel_h1: identity,
            iterations: 0,
        });
    }
    let k = alphabet.len();
    let px = [pair.p0.probs(), pair.p1.probs()];
    let dist: Vec<Vec<f64>> = alphabet
        .iter()
        .map(|x| alphabet.iter().map(|y| x - y).collect())
        .collect();
    let allowed: Vec<Vec<bool>> = dist
        .iter()
        .map(|row| row.iter().map(|d| *d >= -SYMBOL_TOLERANCE).collect())
        .collect();

    let outputs = |kernels: &[Vec<Vec<f64>>; 2]| -> [Vec<f64>; 2] {
        std::array::from_fn(|h| {
            let mut q = vec![0.0; k];
            for i in 0..k {
                for j in 0..k {
                    q[j] += px[h][i] * kernels[h][i][j];
                }
            }
            q
        })
    };
    let objective = |kernels: &[Vec<Vec<f64>>; 2]| -> f64 {
        let [q0, q1] = outputs(kernels);
        q0.iter()
            .zip(&q1)
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, b)| a * (a / b.max(f64::MIN_POSITIVE)).ln())
            .sum()
    };
    let gradient = |kernels: &[Vec<Vec<f64>>; 2]| -> [Vec<Vec<f64>>; 2] {
        let [q0, q1] = outputs(kernels);
        let d0: Vec<f64> = q0
            .iter()
            .zip(&q1)
            .map(|(a, b)| if *a > 0.0 { (a / b.max(f64::MIN_POSITIVE)).ln() + 1.0 } else { 1.0 })
            .collect();
        let d1: Vec<f64> = q0.iter().zip(&q1).map(|(a, b)| -a / b.max(f64::MIN_POSITIVE)).collect();
        std::array::from_fn(|h| {
            let d = if h == 0 { &d0 } else { &d1 };
            (0..k).map(|i| (0..k).map(|j| px[h][i] * d[j]).collect()).collect()
        })
    };
    let project = |v: &[Vec<f64>], h: usize| -> Vec<Vec<f64>> {
        project_budget(v, px[h], &dist, &allowed, pair.pbar_kw)
    };
    let step_to = |kernels: &[Vec<Vec<f64>>; 2], grad: &[Vec<Vec<f64>>; 2], s: f64| -> [Vec<Vec<f64>>; 2] {
        std::array::from_fn(|h| {
            let v: Vec<Vec<f64>> = kernels[h]
                .iter()
                .zip(&grad[h])
                .map(|(row, g)| row.iter().zip(g).map(|(a, b)| a - s * b).collect())
                .collect();
            project(&v, h)
        })
    };

    let mut kernels: [Vec<Vec<f64>>; 2] = [identity.rows.clone(), identity.rows.clone()];
    let mut f = objective(&kernels);
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    while iterations < MAX_PG_ITER {
        iterations += 1;
        let grad = gradient(&kernels);
        // Stationarity: distance moved by a unit projected-gradient step.
        let probe = step_to(&kernels, &grad, 1.0);
        let gap = max_diff(&probe, &kernels);
        if gap <= tol {
            break;
        }
        step = (step * 2.0).min(1e6);
        loop {
            let cand = step_to(&kernels, &grad, step);
            let dir: f64 = (0..2)
                .map(|h| {
                    (0..k)
                        .map(|i| (0..k).map(|j| grad[h][i][j] * (cand[h][i][j] - kernels[h][i][j])).sum::<f64>())
                        .sum::<f64>()
                })
                .sum();
            let fc = objective(&cand);
            if fc <= f + 1e-4 * dir || step < 1e-16 {
                kernels = cand;
                f = fc;
                break;
            }
            step *= 0.5;
        }
    }
    let [q0, q1] = outputs(&kernels);
    let make = |rows: Vec<Vec<f64>>| Kernel::new(alphabet.clone(), alphabet.clone(), rows);
    let [r0, r1] = kernels;
    Ok(KlOptimum {
        kl_nats: kl_nats(&q0, &q1),
        kernel_h0: make(r0)?,
        kernel_h1: make(r1)?,
        iterations,
    })
}

fn max_diff(a: &[Vec<Vec<f64>>; 2], b: &[Vec<Vec<f64>>; 2]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ma, mb)| ma.iter().zip(mb))
        .flat_map(|(ra, rb)| ra.iter().zip(rb))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Euclidean projection of a row onto the probability simplex restricted to
/// the `allowed` coordinates.
fn project_row(v: &[f64], allowed: &[bool]) -> Vec<f64> {
    let mut vals: Vec<f64> = v.iter().zip(allowed).filter(|(_, a)| **a).map(|(x, _)| *x).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (r, u) in vals.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (r + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter()
        .zip(allowed)
        .map(|(x, a)| if *a { (x - theta).max(0.0) } else { 0.0 })
        .collect()
}

/// Projection onto row simplices intersected with `Σ p(x) Σ_y K(x,y)(x−y) ≤ budget`,
/// via bisection on the multiplier of the budget constraint.
fn project_budget(v: &[Vec<f64>], px: &[f64], dist: &[Vec<f64>], allowed: &[Vec<bool>], budget: f64) -> Vec<Vec<f64>> {
    let at = |mu: f64| -> (Vec<Vec<f64>>, f64) {
        let rows: Vec<Vec<f64>> = v
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let shifted: Vec<f64> = row.iter().zip(&dist[i]).map(|(a, d)| a - mu * px[i] * d).collect();
                project_row(&shifted, &allowed[i])
            })
            .collect();
        let used = rows
            .iter()
            .enumerate()
            .map(|(i, r)| px[i] * r.iter().zip(&dist[i]).map(|(k, d)| k * d).sum::<f64>())
            .sum::<f64>();
        (rows, used)
    };
    let (rows, used) = at(0.0);
    if used <= budget {
        return rows;
    }
    let mut hi = 1.0;
    while at(hi).1 > budget {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid).1 > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi).0
}

/// Type-II error exponent of the optimal detector, `D(p0 || p1)` in nats.
/// The result is `+inf` when `p0` has mass outside the support of `p1`
/// (the type-II error can then be driven to zero at any exponent).
pub fn chernoff_stein_exponent(p0: &Pmf, p1: &Pmf) -> Result<f64> {
    if !p0.same_alphabet(p1) {
        return Err(Error::InvalidParameter("distributions need a common alphabet".into()));
    }
    Ok(kl_nats(p0.probs(), p1.probs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    H0,
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub decision: Decision,
    /// `Σ ln(p0(y_t) / p1(y_t))`.
    pub log_likelihood_ratio: f64,
}

/// Likelihood-ratio detector: decides `h0` iff the log-likelihood ratio is at
/// least `ln(threshold)`.
///
/// A symbol with zero probability under `h1` only makes the ratio `+inf`, and
/// one with zero probability under `h0` only makes it `−inf`. Symbols
/// impossible under both hypotheses carry no evidence. A sequence containing
/// both kinds of impossible symbol has an undefined (`NaN`) ratio and is
/// assigned to `h0`.
pub fn np_detector(p0: &Pmf, p1: &Pmf, ys: &[f64], threshold: f64) -> Result<Detection> {
    if !p0.same_alphabet(p1) {
        return Err(Error::InvalidParameter("distributions need a common alphabet".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter("likelihood-ratio threshold must be positive".into()));
    }
    let mut llr = 0.0;
    for &y in ys {
        let i = index_of(p0.alphabet(), y).ok_or(Error::AlphabetMismatch { value: y })?;
        llr += symbol_llr(p0.probs()[i], p1.probs()[i]);
    }
    let decision = if llr.is_nan() || llr >= threshold.ln() { Decision::H0 } else { Decision::H1 };
    Ok(Detection { decision, log_likelihood_ratio: llr })
}

fn symbol_llr(a: f64, b: f64) -> f64 {
    match (a > 0.0, b > 0.0) {
        (true, true) => (a / b).ln(),
        (true, false) => f64::INFINITY,
        (false, true) => f64::NEG_INFINITY,
        (false, false) => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProbabilities {
    /// Probability of deciding `h1` when `h0` holds.
    pub type1: f64,
    /// Probability of deciding `h0` when `h1` holds.
    pub type2: f64,
}

/// Largest sequence length accepted by the exact error computations.
pub const MAX_EXACT_LENGTH: usize = 64;

/// Sequence types (symbol counts) of length `n` with their log-likelihood
/// ratio and probabilities under both hypotheses.
fn type_classes(p0: &Pmf, p1: &Pmf, n: usize) -> Vec<(f64, f64, f64)> {
    let k = p0.len();
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    let mut out = Vec::new();
    let mut counts = vec![0usize; k];
    fn rec(
        pos: usize,
        left: usize,
        counts: &mut Vec<usize>,
        p0: &[f64],
        p1: &[f64],
        ln_fact: &[f64],
        n: usize,
        out: &mut Vec<(f64, f64, f64)>,
    ) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            let mut ln_multi = ln_fact[n];
            let mut prob0 = 0.0_f64;
            let mut prob1 = 0.0_f64;
            let mut possible0 = true;
            let mut possible1 = true;
            let mut llr = 0.0;
            for (i, &c) in counts.iter().enumerate() {
                ln_multi -= ln_fact[c];
                if c > 0 {
                    if p0[i] > 0.0 {
                        prob0 += c as f64 * p0[i].ln();
                    } else {
                        possible0 = false;
                    }
                    if p1[i] > 0.0 {
                        prob1 += c as f64 * p1[i].ln();
                    } else {
                        possible1 = false;
                    }
                    llr += c as f64 * symbol_llr(p0[i], p1[i]);
                }
            }
            let pr0 = if possible0 { (ln_multi + prob0).exp() } else { 0.0 };
            let pr1 = if possible1 { (ln_multi + prob1).exp() } else { 0.0 };
            out.push((llr, pr0, pr1));
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, counts, p0, p1, ln_fact, n, out);
        }
    }
    rec(0, n, &mut counts, p0.probs(), p1.probs(), &ln_fact, n, &mut out);
    out
}

/// Exact error probabilities of [`np_detector`] on i.i.d. sequences of
/// length `n`, summed over sequence types.
pub fn np_errors_exact(p0: &Pmf, p1: &Pmf, n: usize, threshold: f64) -> Result<ErrorProbabilities> {
    check_exact(p0, p1, n)?;
    let log_t = threshold.ln();
    let mut type1 = 0.0;
    let mut type2 = 0.0;
    for (llr, pr0, pr1) in type_classes(p0, p1, n) {
        if llr.is_nan() || llr >= log_t {
            type2 += pr1;
        } else {
            type1 += pr0;
        }
    }
    Ok(ErrorProbabilities { type1, type2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NpTest {
    /// Decide `h0` iff the log-likelihood ratio is at least this value.
    pub log_threshold: f64,
    pub errors: ErrorProbabilities,
}

/// The deterministic likelihood-ratio test with the smallest type-II error
/// among those with type-I error at most `level`.
pub fn np_test_at_level(p0: &Pmf, p1: &Pmf, n: usize, level: f64) -> Result<NpTest> {
    check_exact(p0, p1, n)?;
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::InvalidParameter(format!("level {level} outside [0, 1]")));
    }
    let mut classes = type_classes(p0, p1, n);
    classes.retain(|c| !c.0.is_nan());
    classes.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Reject h0 on the lowest ratios, a whole tie group at a time.
    let mut type1 = 0.0;
    let mut idx = 0;
    let mut log_threshold = f64::NEG_INFINITY;
    while idx < classes.len() {
        let llr = classes[idx].0;
        let mut end = idx;
        let mut mass = 0.0;
        while end < classes.len() && classes[end].0 - llr <= 1e-12 * (1.0 + llr.abs()) {
            mass += classes[end].1;
            end += 1;
        }
        if type1 + mass > level + 1e-15 {
            break;
        }
        type1 += mass;
        idx = end;
        log_threshold = classes.get(idx).map_or(f64::INFINITY, |c| c.0);
    }
    if idx == 0 {
        log_threshold = f64::NEG_INFINITY;
    }
    let type2 = classes[idx..].iter().map(|c| c.2).sum();
    Ok(NpTest {
        log_threshold,
        errors: ErrorProbabilities { type1, type2 },
    })
}

fn check_exact(p0: &Pmf, p1: &Pmf, n: usize) -> Result<()> {
    if !p0.same_alphabet(p1) {
        return Err(Error::InvalidParameter("distributions need a common alphabet".into()));
    }
    if n == 0 || n > MAX_EXACT_LENGTH {
        return Err(Error::InvalidParameter(format!(
            "exact error computation needs 1 <= n <= {MAX_EXACT_LENGTH}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McExponent {
    /// `−ln(p̂_II) / n`.
    pub exponent: f64,
    pub log_threshold: f64,
    pub log_type2: f64,
}

/// Monte-Carlo estimate of the type-II exponent of the likelihood-ratio test
/// at type-I level `level` for sequences of length `n`.
///
/// `trials` sequences are drawn under `h0`; the threshold is their empirical
/// `level`-quantile of the log-likelihood ratio. The type-II probability,
/// far too small to observe directly, is estimated by importance sampling
/// from the same draws: `P_1(A) = E_0[exp(−LLR) 1_A]`.
pub fn mc_type2_exponent(p0: &Pmf, p1: &Pmf, n: usize, trials: usize, level: f64, seed: u64) -> Result<McExponent> {
    if !p0.same_alphabet(p1) {
        return Err(Error::InvalidParameter("distributions need a common alphabet".into()));
    }
    if n == 0 || trials == 0 || !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidParameter("need n, trials > 0 and level in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cdf: Vec<f64> = p0
        .probs()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let llr_sym: Vec<f64> = p0.probs().iter().zip(p1.probs()).map(|(a, b)| symbol_llr(*a, *b)).collect();
    let mut llrs: Vec<f64> = (0..trials)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    let i = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
                    llr_sym[i]
                })
                .sum()
        })
        .collect();
    llrs.sort_by(f64::total_cmp);
    let cut = (level * trials as f64).floor() as usize;
    let log_threshold = llrs[cut.min(trials - 1)];
    let accepted: Vec<f64> = llrs.iter().copied().filter(|l| *l >= log_threshold).map(|l| -l).collect();
    let top = accepted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_type2 = if top == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        top + accepted.iter().map(|a| (a - top).exp()).sum::<f64>().ln() - (trials as f64).ln()
    };
    Ok(McExponent {
        exponent: -log_type2 / n as f64,
        log_threshold,
        log_type2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn binary(p1: f64) -> Pmf {
        Pmf::new(vec![0.0, 1.0], vec![1.0 - p1, p1]).unwrap()
    }

    #[test]
    fn stein_examples() {
        let a = Pmf::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(chernoff_stein_exponent(&a, &binary(0.5)).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(chernoff_stein_exponent(&binary(0.3), &binary(0.3)).unwrap(), 0.0);
        assert_eq!(chernoff_stein_exponent(&binary(0.5), &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn detector_examples() {
        let p0 = binary(0.1);
        let p1 = binary(0.9);
        let d = np_detector(&p0, &p1, &[0.0], 1.0).unwrap();
        assert_eq!(d.decision, Decision::H0);
        assert_abs_diff_eq!(d.log_likelihood_ratio, 9f64.ln(), epsilon = 1e-12);
        let same = binary(0.4);
        assert_eq!(np_detector(&same, &same, &[1.0, 0.0], 1.0).unwrap().decision, Decision::H0);
        assert_eq!(np_detector(&same, &same, &[1.0, 0.0], 1.5).unwrap().decision, Decision::H1);
        assert!(matches!(
            np_detector(&same, &same, &[0.5], 1.0),
            Err(Error::AlphabetMismatch { .. })
        ));
    }

    #[test]
    fn infinite_ratio_convention() {
        let p0 = Pmf::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.5, 0.0]).unwrap();
        let p1 = Pmf::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(np_detector(&p0, &p1, &[1.0], 1e9).unwrap().log_likelihood_ratio, f64::INFINITY);
        assert_eq!(np_detector(&p0, &p1, &[2.0], 1e-9).unwrap().decision, Decision::H1);
        let both = np_detector(&p0, &p1, &[1.0, 2.0], 1.0).unwrap();
        assert!(both.log_likelihood_ratio.is_nan());
        assert_eq!(both.decision, Decision::H0);
    }

    #[test]
    fn exact_errors_match_sequence_enumeration() {
        let p0 = binary(0.2);
        let p1 = binary(0.6);
        let n = 6;
        let t = 1.7;
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        for bits in 0..(1u32 << n) {
            let ys: Vec<f64> = (0..n).map(|i| ((bits >> i) & 1) as f64).collect();
            let ones = bits.count_ones() as i32;
            let pr0 = 0.2f64.powi(ones) * 0.8f64.powi(n as i32 - ones);
            let pr1 = 0.6f64.powi(ones) * 0.4f64.powi(n as i32 - ones);
            match np_detector(&p0, &p1, &ys, t).unwrap().decision {
                Decision::H0 => e2 += pr1,
                Decision::H1 => e1 += pr0,
            }
        }
        let exact = np_errors_exact(&p0, &p1, n, t).unwrap();
        assert_abs_diff_eq!(exact.type1, e1, epsilon = 1e-14);
        assert_abs_diff_eq!(exact.type2, e2, epsilon = 1e-14);
    }

    #[test]
    fn kl_corners() {
        let pair = HypothesisPair::new(binary(0.3), binary(0.3), 0.2).unwrap();
        assert_eq!(hypothesis_kl_optimize(&pair, 1e-10).unwrap().kl_nats, 0.0);
        let pair = HypothesisPair::new(binary(0.3), binary(0.7), 0.0).unwrap();
        let out = hypothesis_kl_optimize(&pair, 1e-10).unwrap();
        assert_abs_diff_eq!(out.kl_nats, kl_nats(&[0.7, 0.3], &[0.3, 0.7]), epsilon = 1e-15);
    }

    #[test]
    fn enough_budget_hides_everything() {
        let pair = HypothesisPair::new(binary(0.3), binary(0.7), 0.7).unwrap();
        let out = hypothesis_kl_optimize(&pair, 1e-10).unwrap();
        assert!(out.kl_nats < 1e-8, "{}", out.kl_nats);
        for k in [&out.kernel_h0, &out.kernel_h1] {
            assert!(k.rows[0][1].abs() < 1e-12, "y may not exceed x");
        }
    }

    #[test]
    fn budget_is_respected() {
        let pair = HypothesisPair::new(binary(0.3), binary(0.8), 0.15).unwrap();
        let out = hypothesis_kl_optimize(&pair, 1e-10).unwrap();
        assert!(out.kernel_h0.mean_reduction(pair.p0.probs()) <= 0.15 + 1e-9);
        assert!(out.kernel_h1.mean_reduction(pair.p1.probs()) <= 0.15 + 1e-9);
    }
}
