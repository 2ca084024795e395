use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;

use super::correlation::average_ranks;
use super::StatsError;

/// Largest number of nonzero differences handled by the exact null.
pub const WILCOXON_EXACT_MAX_N: usize = 25;
/// Fewest nonzero differences at which a two-sided 5% test can reject.
pub const WILCOXON_MIN_N: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RowBetter,
    RowWorse,
    Indistinguishable,
}

impl Decision {
    pub fn flipped(self) -> Self {
        match self {
            Decision::RowBetter => Decision::RowWorse,
            Decision::RowWorse => Decision::RowBetter,
            Decision::Indistinguishable => Decision::Indistinguishable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub decision: Decision,
    pub p_value: f64,
    /// W+ for the signed-rank test, the variance ratio for the F-test, the
    /// mean-square ratio for ANOVA.
    pub statistic: f64,
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().any(|v| !v.is_finite()) {
        Err(StatsError::NonFinite)
    } else {
        Ok(())
    }
}

/// Nonzero differences `a - b` and their average ranks by magnitude.
fn signed_ranks(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>), StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    check_finite(a)?;
    check_finite(b)?;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&mags);
    Ok((diffs, ranks))
}

/// Number of sign patterns whose doubled positive rank sum equals each
/// value, for doubled (integer) ranks.
pub fn signed_rank_null_counts(doubled_ranks: &[u64]) -> Vec<u64> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Two-sided exact p-value of a doubled positive rank sum.
pub fn exact_signed_rank_p(doubled_ranks: &[u64], doubled_w_plus: u64) -> f64 {
    let counts = signed_rank_null_counts(doubled_ranks);
    let w = doubled_w_plus as usize;
    let lower: u64 = counts[..=w.min(counts.len() - 1)].iter().sum();
    let upper: u64 = counts[w.min(counts.len())..].iter().sum();
    let total = 2f64.powi(doubled_ranks.len() as i32);
    (2.0 * lower.min(upper) as f64 / total).min(1.0)
}

/// Two-sided Wilcoxon signed-rank test of `a` against `b`.
///
/// Larger values count as better: a significant excess of positive
/// differences yields [`Decision::RowBetter`]. Zero differences are
/// dropped; identical inputs are indistinguishable with p = 1.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alpha: f64) -> Result<TestOutcome, StatsError> {
    let (diffs, ranks) = signed_ranks(a, b)?;
    let n = diffs.len();
    if n == 0 {
        return Ok(TestOutcome {
            decision: Decision::Indistinguishable,
            p_value: 1.0,
            statistic: 0.0,
        });
    }
    if n < WILCOXON_MIN_N {
        return Err(StatsError::TooFew {
            needed: WILCOXON_MIN_N,
            got: n,
        });
    }
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let expected = (n * (n + 1)) as f64 / 4.0;

    let p = if n <= WILCOXON_EXACT_MAX_N {
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        exact_signed_rank_p(&doubled, (2.0 * w_plus).round() as u64)
    } else {
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
            let t = j as f64;
            tie_term += t * t * t - t;
            i += j;
        }
        let nf = n as f64;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = ((w_plus - expected).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * normal.sf(z)).min(1.0)
    };

    let decision = if p < alpha {
        if w_plus > expected {
            Decision::RowBetter
        } else {
            Decision::RowWorse
        }
    } else {
        Decision::Indistinguishable
    };
    Ok(TestOutcome {
        decision,
        p_value: p,
        statistic: w_plus,
    })
}

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    beta_reg(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
}

/// Upper tail of the F distribution, computed without cancellation.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d1 * x + d2))
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Two-sided variance-ratio F-test; the side with the smaller residual
/// variance is better.
pub fn f_test_variance(residuals_a: &[f64], residuals_b: &[f64], alpha: f64) -> Result<TestOutcome, StatsError> {
    for r in [residuals_a, residuals_b] {
        if r.len() < 2 {
            return Err(StatsError::TooFew {
                needed: 2,
                got: r.len(),
            });
        }
        check_finite(r)?;
    }
    let va = sample_variance(residuals_a);
    let vb = sample_variance(residuals_b);
    if vb == 0.0 {
        return Err(StatsError::Degenerate("zero variance in the denominator".into()));
    }
    let f = va / vb;
    let d1 = (residuals_a.len() - 1) as f64;
    let d2 = (residuals_b.len() - 1) as f64;
    let p = (2.0 * f_cdf(f, d1, d2).min(f_sf(f, d1, d2))).min(1.0);
    let decision = if p < alpha {
        if va < vb {
            Decision::RowBetter
        } else {
            Decision::RowWorse
        }
    } else {
        Decision::Indistinguishable
    };
    Ok(TestOutcome {
        decision,
        p_value: p,
        statistic: f,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaOutcome {
    pub f: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// Classical one-way ANOVA.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaOutcome, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: groups.len(),
        });
    }
    for g in groups {
        if g.len() < 2 {
            return Err(StatsError::Degenerate("every group needs two samples".into()));
        }
        check_finite(g)?;
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    if ss_within == 0.0 {
        return Err(StatsError::Degenerate("no variation within groups".into()));
    }
    let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
    Ok(AnovaOutcome {
        f,
        p_value: f_sf(f, df_between as f64, df_within as f64),
        df_between,
        df_within,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_are_indistinguishable() {
        let a = [1.0, 2.0, 3.0];
        let out = wilcoxon_signed_rank(&a, &a, 0.05).unwrap();
        assert_eq!(out.decision, Decision::Indistinguishable);
        assert_eq!(out.p_value, 1.0);
    }

    #[test]
    fn six_positive_differences() {
        let a = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let b = [1.0; 6];
        let out = wilcoxon_signed_rank(&a, &b, 0.05).unwrap();
        assert_eq!(out.p_value, 2.0 / 64.0);
        assert_eq!(out.decision, Decision::RowBetter);
        let back = wilcoxon_signed_rank(&b, &a, 0.05).unwrap();
        assert_eq!(back.p_value, out.p_value);
        assert_eq!(back.decision, Decision::RowWorse);
    }

    #[test]
    fn too_few_nonzero_differences() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut b = a;
        b[0] = 0.0;
        assert!(matches!(
            wilcoxon_signed_rank(&a, &b, 0.05),
            Err(StatsError::TooFew { .. })
        ));
    }

    #[test]
    fn normal_approximation_for_large_n() {
        let a: Vec<f64> = (0..40).map(|i| f64::from(i) + 0.5).collect();
        let b: Vec<f64> = (0..40).map(f64::from).collect();
        let out = wilcoxon_signed_rank(&a, &b, 0.05).unwrap();
        assert_eq!(out.decision, Decision::RowBetter);
        assert!(out.p_value < 1e-6);
    }

    #[test]
    fn null_counts_small_case() {
        // Ranks 1, 2, 3 doubled: sums over subsets of {2, 4, 6}.
        let c = signed_rank_null_counts(&[2, 4, 6]);
        assert_eq!(c.iter().sum::<u64>(), 8);
        assert_eq!(c[0], 1);
        assert_eq!(c[6], 2);
        assert_eq!(c[12], 1);
    }

    #[test]
    fn f_test_basics() {
        let r = [1.0, -1.0, 2.0, -2.0, 0.5];
        let out = f_test_variance(&r, &r, 0.05).unwrap();
        assert_eq!(out.statistic, 1.0);
        assert_eq!(out.decision, Decision::Indistinguishable);
        assert!(f_test_variance(&r, &[1.0, 1.0], 0.05).is_err());
        let scaled: Vec<f64> = r.iter().map(|v| v * 7.0).collect();
        let wide: Vec<f64> = r.iter().map(|v| v * 30.0).collect();
        let a = f_test_variance(&r, &wide, 0.05).unwrap();
        let b = f_test_variance(&scaled, &wide.iter().map(|v| v * 7.0).collect::<Vec<_>>(), 0.05).unwrap();
        assert_eq!(a.decision, b.decision);
        assert_eq!(a.decision, Decision::RowBetter);
    }

    #[test]
    fn f_cdf_reference_points() {
        // F(2, 2) has CDF x / (1 + x).
        for x in [0.1, 1.0, 3.0, 50.0] {
            assert!((f_cdf(x, 2.0, 2.0) - x / (1.0 + x)).abs() < 1e-14);
            assert!((f_sf(x, 2.0, 2.0) - 1.0 / (1.0 + x)).abs() < 1e-14);
        }
    }

    #[test]
    fn anova_examples() {
        let same = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
        let out = one_way_anova(&same).unwrap();
        assert_eq!(out.f, 0.0);
        assert!((out.p_value - 1.0).abs() < 1e-12);

        let far = vec![vec![0.0, 1.0, -1.0, 0.5, -0.5], vec![10.0, 11.0, 9.0, 10.5, 9.5]];
        assert!(one_way_anova(&far).unwrap().p_value < 1e-6);

        // Means 2, 5, 8; grand 5; SSB = 3*(9+0+9) = 54; SSW = 2+2+2 = 6.
        let g = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        let out = one_way_anova(&g).unwrap();
        assert!((out.f - (54.0 / 2.0) / (6.0 / 6.0)).abs() < 1e-12);
        assert_eq!((out.df_between, out.df_within), (2, 6));
        assert!(one_way_anova(&[vec![1.0, 1.0], vec![2.0, 2.0]]).is_err());
    }
}
