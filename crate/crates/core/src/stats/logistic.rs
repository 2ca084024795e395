//! Five-parameter monotone logistic mapping from objective scores to MOS:
//!
//! `f(s) = b1·(1/2 − 1/(1 + exp(b2·(s − b3)))) + b4·s + b5`
//!
//! Fitted by Levenberg-Marquardt. `b2` is kept positive and `b1`, `b4` share
//! the sign of the score/MOS correlation, which keeps `f` monotone.

use serde::{Deserialize, Serialize};

use super::correlation::plcc;
use super::StatsError;

const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub beta: [f64; 5],
    pub mapped: Vec<f64>,
    pub sse: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn predict(&self, s: f64) -> f64 {
        logistic(&self.beta, s)
    }

    /// `mos - f(score)` for every item.
    pub fn residuals(&self, mos: &[f64]) -> Vec<f64> {
        mos.iter().zip(&self.mapped).map(|(m, f)| m - f).collect()
    }
}

/// `1 / (1 + exp(z))` without overflow.
fn inv_one_plus_exp(z: f64) -> f64 {
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

pub fn logistic(beta: &[f64; 5], s: f64) -> f64 {
    beta[0] * (0.5 - inv_one_plus_exp(beta[1] * (s - beta[2]))) + beta[3] * s + beta[4]
}

fn gradient(beta: &[f64; 5], s: f64) -> [f64; 5] {
    let z = beta[1] * (s - beta[2]);
    let g = inv_one_plus_exp(z);
    // d/dz of -1/(1+e^z) is g(1-g).
    let dz = g * (1.0 - g);
    [0.5 - g, beta[0] * dz * (s - beta[2]), -beta[0] * dz * beta[1], s, 1.0]
}

fn sse(beta: &[f64; 5], x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(s, m)| (m - logistic(beta, *s)).powi(2)).sum()
}

/// Solves the 5×5 system `a·x = b` by Gaussian elimination with partial
/// pivoting; `None` if singular.
fn solve5(mut a: [[f64; 5]; 5], mut b: [f64; 5]) -> Option<[f64; 5]> {
    for col in 0..5 {
        let pivot = (col..5).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..5 {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[row].iter_mut().zip(pivot_row).skip(col) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 5];
    for row in (0..5).rev() {
        let tail: f64 = (row + 1..5).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

fn project(beta: &mut [f64; 5], direction: f64) {
    beta[1] = beta[1].max(1e-12);
    if beta[0] * direction < 0.0 {
        beta[0] = 0.0;
    }
    if beta[3] * direction < 0.0 {
        beta[3] = 0.0;
    }
}

/// Projected Levenberg-Marquardt from `start`. Returns (beta, sse,
/// converged, iterations).
fn levenberg_marquardt(start: [f64; 5], x: &[f64], y: &[f64], direction: f64) -> ([f64; 5], f64, bool, usize) {
    let mut beta = start;
    project(&mut beta, direction);
    let mut cost = sse(&beta, x, y);
    let mut damping = 1e-3;
    let scale = y.iter().map(|v| v * v).sum::<f64>().max(1e-300);
    for it in 1..=MAX_ITERATIONS {
        let mut jtj = [[0.0; 5]; 5];
        let mut jtr = [0.0; 5];
        for (s, m) in x.iter().zip(y) {
            let g = gradient(&beta, *s);
            let r = m - logistic(&beta, *s);
            for i in 0..5 {
                jtr[i] += g[i] * r;
                for j in 0..5 {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        let mut accepted = false;
        while damping < 1e12 {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += damping * (jtj[i][i] + 1e-12);
            }
            if let Some(step) = solve5(a, jtr) {
                let mut trial = beta;
                for i in 0..5 {
                    trial[i] += step[i];
                }
                project(&mut trial, direction);
                let trial_cost = sse(&trial, x, y);
                if trial_cost.is_finite() && trial_cost <= cost {
                    let gain = cost - trial_cost;
                    beta = trial;
                    cost = trial_cost;
                    damping = (damping * 0.3).max(1e-15);
                    accepted = true;
                    if gain <= 1e-15 * scale {
                        return (beta, cost, true, it);
                    }
                    break;
                }
            }
            damping *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: a stationary point.
            return (beta, cost, true, it);
        }
    }
    (beta, cost, false, MAX_ITERATIONS)
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Fits the logistic mapping of `scores` onto `mos`.
///
/// Two deterministic starts are refined and the better kept: the standard
/// one (b3 = median score, b1 = MOS range, b2 = 1/std(score), b4 = 0,
/// b5 = mean MOS) and the least-squares affine fit (b1 = 0).
pub fn fit_logistic(scores: &[f64], mos: &[f64]) -> Result<LogisticFit, StatsError> {
    if scores.len() != mos.len() {
        return Err(StatsError::LengthMismatch(scores.len(), mos.len()));
    }
    if scores.len() < 5 {
        return Err(StatsError::TooFew {
            needed: 5,
            got: scores.len(),
        });
    }
    let r = plcc(scores, mos)?;
    let direction = if r < 0.0 { -1.0 } else { 1.0 };

    let n = scores.len() as f64;
    let ms = scores.iter().sum::<f64>() / n;
    let mm = mos.iter().sum::<f64>() / n;
    let sxx: f64 = scores.iter().map(|s| (s - ms).powi(2)).sum();
    let sxy: f64 = scores.iter().zip(mos).map(|(s, m)| (s - ms) * (m - mm)).sum();
    let std = (sxx / (n - 1.0)).sqrt();
    let lo = mos.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mos.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let standard = [direction * (hi - lo), 1.0 / std, median(scores), 0.0, mm];
    let slope = sxy / sxx;
    let affine = [0.0, 1.0 / std, median(scores), slope, mm - slope * ms];

    let a = levenberg_marquardt(standard, scores, mos, direction);
    let b = levenberg_marquardt(affine, scores, mos, direction);
    let (beta, cost, converged, iterations) = if b.1 < a.1 { b } else { a };
    Ok(LogisticFit {
        beta,
        mapped: scores.iter().map(|s| logistic(&beta, *s)).collect(),
        sse: cost,
        converged,
        iterations,
    })
}
