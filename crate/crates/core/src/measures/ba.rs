//! Privacy-power function by Blahut-Arimoto iterations.
//!
//! `I(P̄) = min I(X;Y)` over kernels `p(y|x)` on the user-load alphabet with
//! `0 ≤ x − y ≤ P̂` and `E[X − Y] ≤ P̄`. Points on the curve come from the
//! Lagrangian form with slope `s`; the target `P̄` is met by a slope search
//! and, across jumps of the distortion, by time sharing.

use serde::{Deserialize, Serialize};

use super::pmf::{Kernel, Pmf, SYMBOL_TOLERANCE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyPower {
    pub leakage_bits: f64,
    pub kernel: Kernel,
    /// `E[X − Y]` under the returned kernel.
    pub mean_power_kw: f64,
}

fn allowed(x: f64, y: f64, peak: f64) -> bool {
    let d = x - y;
    d >= -SYMBOL_TOLERANCE && d <= peak + SYMBOL_TOLERANCE
}

/// Number of slopes in the initial geometric sweep.
const SLOPE_GRID: usize = 64;
const BA_MAX_ITER: usize = 200_000;

/// One Blahut-Arimoto run at slope `s` (nats per kW). Returns the kernel.
fn ba_at_slope(px: &[f64], alphabet: &[f64], peak: f64, s: f64, tol: f64) -> Vec<Vec<f64>> {
    let k = alphabet.len();
    let weights: Vec<Vec<f64>> = alphabet
        .iter()
        .map(|&x| {
            alphabet
                .iter()
                .map(|&y| if allowed(x, y, peak) { (-s * (x - y)).exp() } else { 0.0 })
                .collect()
        })
        .collect();
    let mut q = vec![1.0 / k as f64; k];
    let mut rows = vec![vec![0.0; k]; k];
    for _ in 0..BA_MAX_ITER {
        for i in 0..k {
            let z: f64 = (0..k).map(|j| q[j] * weights[i][j]).sum();
            for j in 0..k {
                rows[i][j] = if z > 0.0 { q[j] * weights[i][j] / z } else { 0.0 };
            }
        }
        let mut next = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                next[j] += px[i] * rows[i][j];
            }
        }
        let change = next
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if change < tol {
            break;
        }
    }
    rows
}

fn mix(a: &[Vec<f64>], b: &[Vec<f64>], w: f64) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(u, v)| (1.0 - w) * u + w * v).collect())
        .collect()
}

struct Point {
    rows: Vec<Vec<f64>>,
    distortion: f64,
}

fn point(px: &Pmf, peak: f64, s: f64, tol: f64) -> Point {
    let alphabet = px.alphabet();
    let rows = ba_at_slope(px.probs(), alphabet, peak, s, tol);
    let kernel = Kernel {
        input: alphabet.to_vec(),
        output: alphabet.to_vec(),
        rows,
    };
    let distortion = kernel.mean_reduction(px.probs());
    Point {
        rows: kernel.rows,
        distortion,
    }
}

fn finish(px: &Pmf, rows: Vec<Vec<f64>>) -> PrivacyPower {
    let kernel = Kernel {
        input: px.alphabet().to_vec(),
        output: px.alphabet().to_vec(),
        rows,
    };
    PrivacyPower {
        leakage_bits: kernel.mutual_information_bits(px.probs()),
        mean_power_kw: kernel.mean_reduction(px.probs()),
        kernel,
    }
}

/// Minimum leakage (bits per slot) under average power `pbar_kw` and peak
/// power `peak_kw`, with the grid load restricted to the user-load alphabet.
pub fn privacy_power_ba(px: &Pmf, pbar_kw: f64, peak_kw: f64, tol: f64) -> Result<PrivacyPower> {
    if !(pbar_kw >= 0.0) || !(peak_kw >= 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "privacy-power needs P̄ ≥ 0, P̂ ≥ 0 and tol > 0 (got {pbar_kw}, {peak_kw}, {tol})"
        )));
    }
    let alphabet = px.alphabet();
    let probs = px.probs();
    let k = alphabet.len();

    // Full hiding: one output symbol reachable from every input.
    let common = (0..k)
        .rev()
        .find(|&j| (0..k).all(|i| probs[i] == 0.0 || allowed(alphabet[i], alphabet[j], peak_kw)));
    if let Some(j) = common {
        if pbar_kw >= px.mean() - alphabet[j] - 1e-12 {
            let rows = vec![(0..k).map(|c| f64::from(u8::from(c == j))).collect(); k];
            return Ok(finish(px, rows));
        }
    }
    let identity = Kernel::identity(alphabet).rows;
    if pbar_kw <= 1e-15 {
        return Ok(finish(px, identity));
    }

    let spread = alphabet[k - 1] - alphabet[0];
    let scale = if spread > 0.0 { spread } else { 1.0 };
    let ba_tol = (tol * 1e-3).max(1e-15);
    let slopes: Vec<f64> = (0..SLOPE_GRID)
        .map(|i| 1e-4 * (1e8f64).powf(i as f64 / (SLOPE_GRID - 1) as f64) / scale)
        .collect();
    let mut prev: Option<(f64, Point)> = None;
    for &s in &slopes {
        let p = point(px, peak_kw, s, ba_tol);
        if p.distortion <= pbar_kw {
            let Some((s_lo, lo)) = prev else {
                // Even the flattest slope meets the budget.
                return Ok(finish(px, p.rows));
            };
            return Ok(refine(px, peak_kw, pbar_kw, tol, ba_tol, (s_lo, lo), (s, p)));
        }
        prev = Some((s, p));
    }
    // Budget below the steepest sweep point: share time with the identity.
    let (_, last) = prev.expect("slope grid is nonempty");
    let w = pbar_kw / last.distortion;
    Ok(finish(px, mix(&identity, &last.rows, w)))
}

/// Bisects the slope between a point above the budget (`lo`) and one within
/// it (`hi`); time-shares once the slopes can no longer be separated.
fn refine(
    px: &Pmf,
    peak: f64,
    pbar: f64,
    tol: f64,
    ba_tol: f64,
    lo: (f64, Point),
    hi: (f64, Point),
) -> PrivacyPower {
    let (mut s_lo, mut p_lo) = lo;
    let (mut s_hi, mut p_hi) = hi;
    for _ in 0..200 {
        if (p_hi.distortion - pbar).abs() <= tol.min(1e-6) {
            return finish(px, p_hi.rows);
        }
        if s_hi / s_lo - 1.0 < 1e-12 {
            break;
        }
        let s = (s_lo * s_hi).sqrt();
        let p = point(px, peak, s, ba_tol);
        if p.distortion <= pbar {
            s_hi = s;
            p_hi = p;
        } else {
            s_lo = s;
            p_lo = p;
        }
    }
    let span = p_lo.distortion - p_hi.distortion;
    let w = if span > 0.0 { (pbar - p_hi.distortion) / span } else { 0.0 };
    finish(px, mix(&p_hi.rows, &p_lo.rows, w.clamp(0.0, 1.0)))
}

/// Minimum leakage with renewable energy but no storage: the kernel
/// `p(y | x, e)` may only reduce the load by the energy generated in the same
/// slot, `0 ≤ x − y ≤ e`. The renewable process is not observed, so the
/// leakage is `I(X; Y)`.
///
/// Solved by exponentiated-gradient steps on the kernel rows with step
/// halving whenever the objective would increase.
pub fn res_only_leakage(px: &Pmf, pe: &Pmf, tol: f64) -> Result<f64> {
    let xs = px.alphabet();
    let ys = xs;
    let es = pe.alphabet();
    let (nx, ne, ny) = (xs.len(), es.len(), ys.len());
    let support = |i: usize, e: usize| -> Vec<bool> { (0..ny).map(|j| allowed(xs[i], ys[j], es[e])).collect() };
    let masks: Vec<Vec<Vec<bool>>> = (0..nx).map(|i| (0..ne).map(|e| support(i, e)).collect()).collect();
    for (i, row) in masks.iter().enumerate() {
        for (e, m) in row.iter().enumerate() {
            if px.probs()[i] > 0.0 && pe.probs()[e] > 0.0 && !m.iter().any(|b| *b) {
                return Err(Error::NoFeasibleKernel);
            }
        }
    }
    // A single output reachable for every (x, e) hides everything.
    let reachable_all = (0..ny).any(|j| {
        (0..nx).all(|i| {
            px.probs()[i] == 0.0 || (0..ne).all(|e| pe.probs()[e] == 0.0 || masks[i][e][j])
        })
    });
    if reachable_all {
        return Ok(0.0);
    }

    let mut k: Vec<Vec<Vec<f64>>> = masks
        .iter()
        .map(|row| {
            row.iter()
                .map(|m| {
                    let c = m.iter().filter(|b| **b).count().max(1) as f64;
                    m.iter().map(|b| if *b { 1.0 / c } else { 0.0 }).collect()
                })
                .collect()
        })
        .collect();
    let channel = |k: &Vec<Vec<Vec<f64>>>| -> Vec<Vec<f64>> {
        (0..nx)
            .map(|i| {
                (0..ny)
                    .map(|j| (0..ne).map(|e| pe.probs()[e] * k[i][e][j]).sum())
                    .collect()
            })
            .collect()
    };
    let objective = |ch: &Vec<Vec<f64>>| {
        Kernel {
            input: xs.to_vec(),
            output: ys.to_vec(),
            rows: ch.clone(),
        }
        .mutual_information_bits(px.probs())
    };
    let mut ch = channel(&k);
    let mut value = objective(&ch);
    let mut eta = 1.0;
    for _ in 0..200_000 {
        let q: Vec<f64> = (0..ny).map(|j| (0..nx).map(|i| px.probs()[i] * ch[i][j]).sum()).collect();
        let mut next = k.clone();
        for i in 0..nx {
            for e in 0..ne {
                let row = &mut next[i][e];
                let mut z = 0.0;
                for j in 0..ny {
                    if masks[i][e][j] && row[j] > 0.0 {
                        let ratio = if ch[i][j] > 0.0 { q[j] / ch[i][j] } else { 1.0 };
                        row[j] *= ratio.powf(eta);
                        z += row[j];
                    } else {
                        row[j] = 0.0;
                    }
                }
                if z > 0.0 {
                    row.iter_mut().for_each(|v| *v /= z);
                }
            }
        }
        let next_ch = channel(&next);
        let next_value = objective(&next_ch);
        if next_value > value + 1e-15 {
            eta *= 0.5;
            if eta < 1e-6 {
                break;
            }
            continue;
        }
        let gain = value - next_value;
        k = next;
        ch = next_ch;
        value = next_value;
        if gain < tol * 1e-3 {
            break;
        }
    }
    Ok(value.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_corners() {
        let px = Pmf::uniform_levels(4).unwrap();
        let zero = privacy_power_ba(&px, 0.0, 3.0, 1e-9).unwrap();
        assert_abs_diff_eq!(zero.leakage_bits, 2.0, epsilon = 1e-12);
        assert_eq!(zero.kernel, Kernel::identity(px.alphabet()));
        let full = privacy_power_ba(&px, 1.5, 3.0, 1e-9).unwrap();
        assert_eq!(full.leakage_bits, 0.0);
    }

    #[test]
    fn binary_closed_form() {
        // Only x = 1 can be hidden: y = 0 with probability a = 2P̄.
        let px = Pmf::uniform_levels(2).unwrap();
        let h = |p: f64| -> f64 { super::super::pmf::entropy_bits(&[p, 1.0 - p]) };
        for pbar in [0.05, 0.1, 0.25, 0.4] {
            let a = 2.0 * pbar;
            let exact = h(0.5 + 0.5 * a) - 0.5 * h(a);
            let got = privacy_power_ba(&px, pbar, 1.0, 1e-9).unwrap();
            assert_abs_diff_eq!(got.leakage_bits, exact, epsilon = 1e-6);
            assert!(got.mean_power_kw <= pbar + 1e-9);
        }
    }

    #[test]
    fn non_increasing_and_convex() {
        let px = Pmf::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.1, 0.4, 0.3, 0.2]).unwrap();
        let grid: Vec<f64> = (0..=16).map(|i| i as f64 * 0.1).collect();
        let vals: Vec<f64> = grid
            .iter()
            .map(|p| privacy_power_ba(&px, *p, 2.0, 1e-9).unwrap().leakage_bits)
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0] + 1e-6);
        }
        for w in vals.windows(3) {
            assert!(w[1] <= 0.5 * (w[0] + w[2]) + 1e-5);
        }
    }

    #[test]
    fn res_only_extremes() {
        let px = Pmf::uniform_levels(5).unwrap();
        let none = Pmf::binomial(4, 0.0).unwrap();
        assert_abs_diff_eq!(res_only_leakage(&px, &none, 1e-10).unwrap(), 5f64.log2(), epsilon = 1e-12);
        let all = Pmf::binomial(4, 1.0).unwrap();
        assert_eq!(res_only_leakage(&px, &all, 1e-10).unwrap(), 0.0);
    }
}
