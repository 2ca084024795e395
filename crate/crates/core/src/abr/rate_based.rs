use serde::{Deserialize, Serialize};

use super::{arithmetic_mean_predict, AbrError, AbrPolicy, AbrState, DEFAULT_PREDICTION_WINDOW};
use crate::media::Representation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateBasedParams {
    pub window: usize,
    /// Require the bitrate to be strictly below the prediction.
    pub strict: bool,
}

impl Default for RateBasedParams {
    fn default() -> Self {
        Self {
            window: DEFAULT_PREDICTION_WINDOW,
            strict: true,
        }
    }
}

/// Highest rung whose bitrate lies below `prediction_kbps`; rung 1 if none.
pub fn select_below(ladder: &[Representation], prediction_kbps: f64, strict: bool) -> u32 {
    ladder
        .iter()
        .rev()
        .find(|rep| {
            if strict {
                rep.bitrate_kbps < prediction_kbps
            } else {
                rep.bitrate_kbps <= prediction_kbps
            }
        })
        .map_or(1, |rep| rep.index)
}

/// Rate-based choice with the default window and strictness.
pub fn rate_based_select(state: &AbrState<'_>) -> Result<u32, AbrError> {
    RateBased::default().select(state)
}

/// Picks the highest bitrate below the arithmetic-mean throughput forecast.
#[derive(Debug, Clone, Default)]
pub struct RateBased {
    params: RateBasedParams,
}

impl RateBased {
    pub fn new(params: RateBasedParams) -> Self {
        Self { params }
    }
}

impl AbrPolicy for RateBased {
    fn name(&self) -> &str {
        "rb"
    }

    fn select(&self, state: &AbrState<'_>) -> Result<u32, AbrError> {
        let prediction = arithmetic_mean_predict(state.throughput_history_kbps, self.params.window)?;
        Ok(select_below(state.manifest.ladder(), prediction, self.params.strict))
    }
}
