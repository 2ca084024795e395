use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hypothesis::{f_test_variance, wilcoxon_signed_rank, Decision};
use super::logistic::fit_logistic;
use super::StatsError;

#[derive(Debug, Clone, PartialEq)]
pub enum SignificanceTest {
    /// Signed-rank test on paired per-item samples; larger is better.
    Wilcoxon,
    /// Variance test on residuals after fitting each method's scores to
    /// these MOS values; smaller residual variance is better.
    FTest { mos: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    pub labels: Vec<String>,
    pub cells: Vec<Vec<Decision>>,
}

fn glyph(d: Decision) -> char {
    match d {
        Decision::RowBetter => '1',
        Decision::RowWorse => '0',
        Decision::Indistinguishable => '-',
    }
}

impl SignificanceMatrix {
    pub fn glyph(&self, row: usize, col: usize) -> char {
        glyph(self.cells[row][col])
    }

    /// Checks antisymmetry and the indistinguishable diagonal.
    pub fn is_consistent(&self) -> bool {
        let n = self.labels.len();
        self.cells.len() == n
            && (0..n).all(|i| {
                self.cells[i].len() == n
                    && self.cells[i][i] == Decision::Indistinguishable
                    && (0..n).all(|j| self.cells[i][j] == self.cells[j][i].flipped())
            })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for j in 0..self.labels.len() {
                out.push(',');
                out.push(self.glyph(i, j));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| |");
        for l in &self.labels {
            out.push_str(&format!(" {l} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(self.labels.len()));
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&format!("| {l} |"));
            for j in 0..self.labels.len() {
                out.push_str(&format!(" {} |", self.glyph(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Applies `test` to every pair of methods. `methods` holds one sample
/// vector per method, all over the same items in the same order.
pub fn build_significance_matrix(
    methods: &[(String, Vec<f64>)],
    test: &SignificanceTest,
    alpha: f64,
) -> Result<SignificanceMatrix, StatsError> {
    let n = methods.len();
    if let Some((_, first)) = methods.first() {
        if let Some((_, bad)) = methods.iter().find(|(_, v)| v.len() != first.len()) {
            return Err(StatsError::LengthMismatch(first.len(), bad.len()));
        }
    }
    let samples: Vec<Vec<f64>> = match test {
        SignificanceTest::Wilcoxon => methods.iter().map(|(_, v)| v.clone()).collect(),
        SignificanceTest::FTest { mos } => methods
            .par_iter()
            .map(|(_, scores)| fit_logistic(scores, mos).map(|fit| fit.residuals(mos)))
            .collect::<Result<_, _>>()?,
    };
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let decided: Vec<((usize, usize), Decision)> = pairs
        .into_par_iter()
        .map(|(i, j)| {
            let out = match test {
                SignificanceTest::Wilcoxon => wilcoxon_signed_rank(&samples[i], &samples[j], alpha)?,
                SignificanceTest::FTest { .. } => f_test_variance(&samples[i], &samples[j], alpha)?,
            };
            Ok(((i, j), out.decision))
        })
        .collect::<Result<_, StatsError>>()?;

    let mut cells = vec![vec![Decision::Indistinguishable; n]; n];
    for ((i, j), d) in decided {
        cells[i][j] = d;
        cells[j][i] = d.flipped();
    }
    Ok(SignificanceMatrix {
        labels: methods.iter().map(|(l, _)| l.clone()).collect(),
        cells,
    })
}
