//! Evaluation statistics: correlation criteria, the logistic score
//! mapping, hypothesis tests and significance matrices.

mod correlation;
mod hypothesis;
mod logistic;
mod significance;

use thiserror::Error;

pub use correlation::{average_ranks, krcc, pair_counts, plcc, srcc, PairCounts};
pub use hypothesis::{
    exact_signed_rank_p, f_cdf, f_sf, f_test_variance, one_way_anova, signed_rank_null_counts, wilcoxon_signed_rank,
    AnovaOutcome, Decision, TestOutcome, WILCOXON_EXACT_MAX_N, WILCOXON_MIN_N,
};
pub use logistic::{fit_logistic, logistic, LogisticFit};
pub use significance::{build_significance_matrix, SignificanceMatrix, SignificanceTest};

/// Two-sided significance level used throughout.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("non-finite input")]
    NonFinite,
}

/// Correlation summary of objective scores against MOS. PLCC is taken
/// after the logistic mapping, SRCC and KRCC on the raw scores.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorrelationReport {
    pub plcc: f64,
    pub srcc: f64,
    pub krcc: f64,
}

pub fn correlation_report(scores: &[f64], mos: &[f64]) -> Result<CorrelationReport, StatsError> {
    let fit = fit_logistic(scores, mos)?;
    Ok(CorrelationReport {
        plcc: plcc(&fit.mapped, mos)?,
        srcc: srcc(scores, mos)?,
        krcc: krcc(scores, mos)?,
    })
}
