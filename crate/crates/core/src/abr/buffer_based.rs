use serde::{Deserialize, Serialize};

use super::{AbrError, AbrPolicy, AbrState};
use crate::media::Representation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BufferBasedParams {
    pub reservoir_s: f64,
    pub cushion_s: f64,
}

impl Default for BufferBasedParams {
    fn default() -> Self {
        Self {
            reservoir_s: 5.0,
            cushion_s: 10.0,
        }
    }
}

/// Maps buffer occupancy to a rung through a linear rate map.
///
/// At or below the reservoir the lowest rung is used, at or above
/// reservoir + cushion the highest. In between the target bitrate is
/// interpolated between the extreme bitrates and the highest rung not
/// exceeding it is chosen.
pub fn buffer_based_select(buffer_s: f64, reservoir_s: f64, cushion_s: f64, ladder: &[Representation]) -> u32 {
    let top = ladder.len() as u32;
    if buffer_s <= reservoir_s {
        return 1;
    }
    if buffer_s >= reservoir_s + cushion_s {
        return top;
    }
    let r_min = ladder[0].bitrate_kbps;
    let r_max = ladder[ladder.len() - 1].bitrate_kbps;
    let target = r_min + (buffer_s - reservoir_s) / cushion_s * (r_max - r_min);
    ladder
        .iter()
        .rev()
        .find(|rep| rep.bitrate_kbps <= target)
        .map_or(1, |rep| rep.index)
}

#[derive(Debug, Clone, Default)]
pub struct BufferBased {
    params: BufferBasedParams,
}

impl BufferBased {
    pub fn new(params: BufferBasedParams) -> Result<Self, AbrError> {
        if !(params.reservoir_s >= 0.0) || !(params.cushion_s > 0.0) {
            return Err(AbrError::InvalidParams("reservoir must be >= 0 and cushion > 0".into()));
        }
        Ok(Self { params })
    }
}

impl AbrPolicy for BufferBased {
    fn name(&self) -> &str {
        "bb"
    }

    fn select(&self, state: &AbrState<'_>) -> Result<u32, AbrError> {
        Ok(buffer_based_select(
            state.buffer_s,
            self.params.reservoir_s,
            self.params.cushion_s,
            state.manifest.ladder(),
        ))
    }
}
