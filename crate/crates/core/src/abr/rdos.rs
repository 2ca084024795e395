//! Rate-distortion optimized streaming: maximize a KSQI-style score of the
//! predicted horizon minus a weighted bitrate cost.
//!
//! The horizon record holds the previously played segment (when there is
//! one) followed by the candidate chunks. A stall predicted while chunk `j`
//! downloads sits at the boundary just before that chunk. Unlike MPC, RDOS
//! reads actual chunk sizes and qualities from the manifest.

use serde::{Deserialize, Serialize};

use super::{harmonic_mean_predict, AbrError, AbrPolicy, AbrState, DEFAULT_PREDICTION_WINDOW};
use crate::qoe::KsqiParams;
use crate::simulator::{buffer_step, SessionRecord, Stall};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RdosParams {
    pub ksqi_params: KsqiParams,
    /// Cost per Mb/s of chosen bitrate, per chunk.
    pub gamma_rate: f64,
    pub horizon: usize,
    pub window: usize,
}

impl Default for RdosParams {
    fn default() -> Self {
        Self {
            ksqi_params: KsqiParams::default(),
            gamma_rate: 0.02,
            horizon: 5,
            window: DEFAULT_PREDICTION_WINDOW,
        }
    }
}

impl RdosParams {
    pub fn validate(&self) -> Result<(), AbrError> {
        self.ksqi_params
            .validate()
            .map_err(|e| AbrError::InvalidParams(e.to_string()))?;
        if !(self.gamma_rate >= 0.0) || !self.gamma_rate.is_finite() {
            return Err(AbrError::InvalidParams("gamma_rate must be >= 0".into()));
        }
        if self.horizon == 0 {
            return Err(AbrError::InvalidParams("horizon must be >= 1".into()));
        }
        Ok(())
    }
}

/// Horizon data for one decision.
struct Model<'p> {
    ksqi: &'p KsqiParams,
    gamma: f64,
    steps: usize,
    reps: usize,
    /// `[j][r]` quality, actual Mb/s and predicted download time.
    quality: Vec<Vec<f64>>,
    rate_mbps: Vec<Vec<f64>>,
    download_s: Vec<Vec<f64>>,
    prev_quality: Option<f64>,
    record_len: f64,
    start_buffer_s: f64,
    segment_duration_s: f64,
    max_buffer_s: f64,
}

impl<'p> Model<'p> {
    fn new(state: &AbrState<'_>, steps: usize, tput_kbps: f64, params: &'p RdosParams) -> Self {
        let m = state.manifest;
        let reps = m.ladder_size();
        let dur = m.segment_duration_s();
        let mut quality = Vec::with_capacity(steps);
        let mut rate_mbps = Vec::with_capacity(steps);
        let mut download_s = Vec::with_capacity(steps);
        for j in 0..steps {
            let chunk = state.chunk_index + j;
            let segs = &m.segments()[chunk];
            quality.push(segs.iter().map(|s| s.quality).collect());
            rate_mbps.push(segs.iter().map(|s| s.size_bits as f64 / dur / 1e6).collect());
            download_s.push(
                segs.iter()
                    .map(|s| s.size_bits as f64 / (tput_kbps * 1000.0) + state.rtt_s)
                    .collect(),
            );
        }
        let prev_quality = (state.chunk_index >= 1).then(|| m.segment(state.chunk_index - 1, state.last_rep).quality);
        let record_len = (steps + usize::from(prev_quality.is_some())) as f64;
        Self {
            ksqi: &params.ksqi_params,
            gamma: params.gamma_rate,
            steps,
            reps,
            quality,
            rate_mbps,
            download_s,
            prev_quality,
            record_len,
            start_buffer_s: state.buffer_s,
            segment_duration_s: dur,
            max_buffer_s: state.max_buffer_s,
        }
    }

    /// Value of choosing rung `r` for step `j` from `buffer_s`, with
    /// `prev_q` the quality of the segment played just before.
    fn step(&self, j: usize, buffer_s: f64, prev_q: Option<f64>, r: usize) -> (f64, f64) {
        let q = self.quality[j][r];
        let (next, stall, _) = buffer_step(
            buffer_s,
            self.download_s[j][r],
            self.segment_duration_s,
            self.max_buffer_s,
        );
        let mut penalty = 0.0;
        if stall > 0.0 {
            penalty += self.ksqi.stall_penalty(stall, prev_q.unwrap_or(q));
        }
        if let Some(p) = prev_q {
            penalty += self.ksqi.switch_penalty(p, q);
        }
        let value = (q - penalty) / self.record_len - self.gamma * self.rate_mbps[j][r];
        (next, value)
    }

    fn base(&self) -> f64 {
        self.prev_quality.map_or(0.0, |q| q / self.record_len)
    }

    fn evaluate(&self, seq: &[usize]) -> f64 {
        let mut acc = self.base();
        let mut buffer = self.start_buffer_s;
        let mut prev = self.prev_quality;
        for (j, &r) in seq.iter().enumerate() {
            let (next, v) = self.step(j, buffer, prev, r);
            acc += v;
            buffer = next;
            prev = Some(self.quality[j][r]);
        }
        acc
    }

    fn solve(&self) -> Vec<usize> {
        // Penalties are nonnegative, so the best per-step reward ignoring
        // them bounds every completion.
        let mut suffix = vec![0.0; self.steps + 1];
        for j in (0..self.steps).rev() {
            let best = (0..self.reps)
                .map(|r| self.quality[j][r] / self.record_len - self.gamma * self.rate_mbps[j][r])
                .fold(f64::NEG_INFINITY, f64::max);
            suffix[j] = suffix[j + 1] + best;
        }
        let incumbent = (0..self.reps)
            .map(|r| self.evaluate(&vec![r; self.steps]))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut search = Search {
            model: self,
            suffix,
            incumbent,
            best: None,
            cur: vec![0; self.steps],
        };
        search.dfs(0, self.start_buffer_s, self.prev_quality, self.base());
        search.best.expect("the best constant sequence is always reached").0
    }
}

struct Search<'a, 'p> {
    model: &'a Model<'p>,
    suffix: Vec<f64>,
    incumbent: f64,
    best: Option<(Vec<usize>, f64)>,
    cur: Vec<usize>,
}

impl Search<'_, '_> {
    fn threshold(&self) -> f64 {
        self.best.as_ref().map_or(self.incumbent, |b| b.1.max(self.incumbent))
    }

    fn dfs(&mut self, j: usize, buffer_s: f64, prev_q: Option<f64>, acc: f64) {
        if j == self.model.steps {
            let better = match &self.best {
                None => acc + 1e-9 * (1.0 + acc.abs()) >= self.incumbent,
                Some((_, v)) => acc > *v,
            };
            if better {
                self.best = Some((self.cur.clone(), acc));
            }
            return;
        }
        let bound = acc + self.suffix[j];
        if bound + 1e-9 * (1.0 + bound.abs()) < self.threshold() {
            return;
        }
        for r in 0..self.model.reps {
            let (next, v) = self.model.step(j, buffer_s, prev_q, r);
            self.cur[j] = r;
            self.dfs(j + 1, next, Some(self.model.quality[j][r]), acc + v);
        }
    }
}

fn horizon_steps(state: &AbrState<'_>, params: &RdosParams) -> Result<usize, AbrError> {
    params.validate()?;
    if !state.manifest.is_valid_rep(state.last_rep) {
        return Err(AbrError::InvalidChoice(state.last_rep));
    }
    let steps = params.horizon.min(state.remaining_chunks());
    if steps == 0 {
        return Err(AbrError::InvalidParams("no chunks left to choose".into()));
    }
    Ok(steps)
}

/// RDOS objective of `choices` under a constant throughput forecast,
/// computed by scoring the horizon record with the KSQI-style model.
pub fn rdos_objective(
    choices: &[u32],
    state: &AbrState<'_>,
    predicted_tput_kbps: f64,
    params: &RdosParams,
) -> Result<f64, AbrError> {
    params.validate()?;
    if choices.is_empty() || choices.len() > state.remaining_chunks() {
        return Err(AbrError::InvalidParams(
            "choices must cover 1..=remaining chunks".into(),
        ));
    }
    if let Some(&bad) = choices.iter().find(|&&c| !state.manifest.is_valid_rep(c)) {
        return Err(AbrError::InvalidChoice(bad));
    }
    let m = state.manifest;
    let dur = m.segment_duration_s();
    let has_prev = state.chunk_index >= 1;
    let mut qualities = Vec::new();
    let mut bitrates = Vec::new();
    if has_prev {
        qualities.push(m.segment(state.chunk_index - 1, state.last_rep).quality);
        bitrates.push(m.actual_bitrate_kbps(state.chunk_index - 1, state.last_rep));
    }
    let mut stalls = Vec::new();
    let mut buffer = state.buffer_s;
    let mut rate_cost = 0.0;
    for (j, &c) in choices.iter().enumerate() {
        let chunk = state.chunk_index + j;
        let seg = m.segment(chunk, c);
        let dl = seg.size_bits as f64 / (predicted_tput_kbps * 1000.0) + state.rtt_s;
        let (next, stall, _) = buffer_step(buffer, dl, dur, state.max_buffer_s);
        if stall > 0.0 {
            stalls.push(Stall {
                position_s: (j + usize::from(has_prev)) as f64 * dur,
                duration_s: stall,
            });
        }
        buffer = next;
        qualities.push(seg.quality);
        bitrates.push(m.actual_bitrate_kbps(chunk, c));
        rate_cost += m.actual_bitrate_kbps(chunk, c) / 1000.0;
    }
    let record = SessionRecord::new(dur, qualities, bitrates, stalls, 0.0)
        .map_err(|e| AbrError::InvalidParams(e.to_string()))?;
    Ok(params.ksqi_params.score(&record) - params.gamma_rate * rate_cost)
}

/// RDOS decision under a given constant throughput forecast.
pub fn rdos_select_with_prediction(
    state: &AbrState<'_>,
    predicted_tput_kbps: f64,
    params: &RdosParams,
) -> Result<u32, AbrError> {
    let steps = horizon_steps(state, params)?;
    if !(predicted_tput_kbps > 0.0) {
        return Err(AbrError::NonPositiveSample(predicted_tput_kbps));
    }
    let model = Model::new(state, steps, predicted_tput_kbps, params);
    Ok(model.solve()[0] as u32 + 1)
}

/// RDOS decision with the harmonic-mean forecast.
pub fn rdos_select(state: &AbrState<'_>, params: &RdosParams) -> Result<u32, AbrError> {
    let tput = harmonic_mean_predict(state.throughput_history_kbps, params.window)?;
    rdos_select_with_prediction(state, tput, params)
}

#[derive(Debug, Clone)]
pub struct Rdos {
    params: RdosParams,
}

impl Rdos {
    pub fn new(params: RdosParams) -> Result<Self, AbrError> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl AbrPolicy for Rdos {
    fn name(&self) -> &str {
        "rdos"
    }

    fn select(&self, state: &AbrState<'_>) -> Result<u32, AbrError> {
        rdos_select(state, &self.params)
    }
}
