//! Model-predictive bitrate control over a short horizon.
//!
//! The objective rewards bitrate (Mb/s) and penalizes bitrate switches and
//! predicted stall time. Predicted stalls come from the same buffer
//! recursion the simulator uses, with download time `size / tput + rtt`.
//!
//! The exact solver is a depth-first branch and bound over all
//! `ladder^horizon` sequences. It returns the first element of the
//! lexicographically smallest maximizing sequence, the same answer as
//! plain enumeration, and evaluates rewards with the exact arithmetic
//! [`mpc_objective`] uses so both routes agree bit-for-bit.

use serde::{Deserialize, Serialize};

use super::{harmonic_mean_predict, AbrError, AbrPolicy, AbrState, DEFAULT_PREDICTION_WINDOW};
use crate::simulator::buffer_step;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcObjectiveParams {
    /// Weight on |ΔR| in Mb/s.
    pub lambda_switch: f64,
    /// Penalty per second of predicted stall.
    pub mu_rebuf: f64,
    /// Lookahead in chunks.
    pub horizon: usize,
    /// Use the manifest's actual future chunk sizes instead of
    /// nominal bitrate × duration.
    pub manifest_sizes: bool,
    /// Harmonic-mean window for the throughput forecast.
    pub window: usize,
}

impl Default for MpcObjectiveParams {
    fn default() -> Self {
        Self {
            lambda_switch: 1.0,
            mu_rebuf: 16.8,
            horizon: 5,
            manifest_sizes: false,
            window: DEFAULT_PREDICTION_WINDOW,
        }
    }
}

impl MpcObjectiveParams {
    pub fn validate(&self) -> Result<(), AbrError> {
        if !(self.lambda_switch >= 0.0) || !(self.mu_rebuf >= 0.0) {
            return Err(AbrError::InvalidParams("MPC weights must be non-negative".into()));
        }
        if self.horizon == 0 {
            return Err(AbrError::InvalidParams("MPC horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// A fully specified horizon problem.
#[derive(Debug, Clone)]
pub(crate) struct HorizonModel {
    pub steps: usize,
    pub reps: usize,
    pub rate_mbps: Vec<f64>,
    /// `download_s[j * reps + r]`.
    pub download_s: Vec<f64>,
    pub segment_duration_s: f64,
    pub max_buffer_s: f64,
    pub start_buffer_s: f64,
    /// 0-based rung of the previous chunk.
    pub last: usize,
    pub lambda: f64,
    pub mu: f64,
}

impl HorizonModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rates_kbps: &[f64],
        steps: usize,
        size_bits: impl Fn(usize, usize) -> f64,
        tput_kbps: impl Fn(usize) -> f64,
        segment_duration_s: f64,
        rtt_s: f64,
        max_buffer_s: f64,
        start_buffer_s: f64,
        last: usize,
        lambda: f64,
        mu: f64,
    ) -> Self {
        let reps = rates_kbps.len();
        let mut download_s = Vec::with_capacity(steps * reps);
        for j in 0..steps {
            let bps = tput_kbps(j) * 1000.0;
            for r in 0..reps {
                download_s.push(size_bits(j, r) / bps + rtt_s);
            }
        }
        Self {
            steps,
            reps,
            rate_mbps: rates_kbps.iter().map(|r| r / 1000.0).collect(),
            download_s,
            segment_duration_s,
            max_buffer_s,
            start_buffer_s,
            last,
            lambda,
            mu,
        }
    }

    /// Buffer after step `j` and its reward.
    #[inline]
    pub fn step(&self, j: usize, buffer_s: f64, prev: usize, r: usize) -> (f64, f64) {
        let d = self.download_s[j * self.reps + r];
        let (next, stall, _) = buffer_step(buffer_s, d, self.segment_duration_s, self.max_buffer_s);
        let rate = self.rate_mbps[r];
        let reward = rate - self.lambda * (rate - self.rate_mbps[prev]).abs() - self.mu * stall;
        (next, reward)
    }

    /// Objective of a full sequence of 0-based rungs.
    pub fn evaluate(&self, seq: &[usize]) -> f64 {
        let mut buffer = self.start_buffer_s;
        let mut prev = self.last;
        let mut total = 0.0;
        for (j, &r) in seq.iter().enumerate() {
            let (next, reward) = self.step(j, buffer, prev, r);
            total += reward;
            buffer = next;
            prev = r;
        }
        total
    }

    /// Lexicographically first maximizing sequence and its value.
    pub fn solve(&self) -> (Vec<usize>, f64) {
        let mut search = Search::new(self);
        search.dfs(0, self.start_buffer_s, self.last, 0.0);
        (search.best_seq, search.best_val)
    }
}

const MULTIPLIER_FRACTIONS: [f64; 5] = [0.0, 0.125, 0.25, 0.5, 1.0];

struct Search<'m> {
    model: &'m HorizonModel,
    multipliers: Vec<f64>,
    /// `suffix[k][j]`: Σ_{i ≥ j} max_r (rate_r − L_k · d_{i,r}).
    suffix: Vec<Vec<f64>>,
    incumbent: f64,
    best_val: f64,
    best_seq: Vec<usize>,
    cur: Vec<usize>,
}

impl<'m> Search<'m> {
    fn new(model: &'m HorizonModel) -> Self {
        let multipliers: Vec<f64> = if model.mu > 0.0 {
            MULTIPLIER_FRACTIONS.iter().map(|f| f * model.mu).collect()
        } else {
            vec![0.0]
        };
        let suffix = multipliers
            .iter()
            .map(|&l| {
                let mut s = vec![0.0; model.steps + 1];
                for j in (0..model.steps).rev() {
                    let best = (0..model.reps)
                        .map(|r| model.rate_mbps[r] - l * model.download_s[j * model.reps + r])
                        .fold(f64::NEG_INFINITY, f64::max);
                    s[j] = s[j + 1] + best;
                }
                s
            })
            .collect();
        let incumbent = (0..model.reps)
            .map(|r| model.evaluate(&vec![r; model.steps]))
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            model,
            multipliers,
            suffix,
            incumbent,
            best_val: f64::NEG_INFINITY,
            best_seq: Vec::new(),
            cur: vec![0; model.steps],
        }
    }

    /// Upper bound on the reward still obtainable from depth `j` with
    /// `buffer_s` buffered. Uses Σ stall ≥ Σ d − b − (m − 1)·T, which
    /// follows from the buffer never dropping below one segment after a
    /// download, relaxed with a few multipliers in [0, μ].
    fn bound(&self, j: usize, buffer_s: f64) -> f64 {
        let m = self.model.steps - j;
        let slack = buffer_s + (m as f64 - 1.0) * self.model.segment_duration_s;
        self.multipliers
            .iter()
            .zip(&self.suffix)
            .map(|(&l, s)| s[j] + l * slack)
            .fold(f64::INFINITY, f64::min)
    }

    fn dfs(&mut self, j: usize, buffer_s: f64, prev: usize, acc: f64) {
        if j == self.model.steps {
            if acc > self.best_val {
                self.best_val = acc;
                self.best_seq.clone_from(&self.cur);
            }
            return;
        }
        for r in 0..self.model.reps {
            let (next, reward) = self.model.step(j, buffer_s, prev, r);
            let value = acc + reward;
            let optimistic = if j + 1 < self.model.steps {
                value + self.bound(j + 1, next)
            } else {
                value
            };
            let threshold = self.best_val.max(self.incumbent);
            if optimistic + 1e-9 * (1.0 + optimistic.abs()) < threshold {
                continue;
            }
            self.cur[j] = r;
            self.dfs(j + 1, next, r, value);
        }
    }
}

fn check_state(state: &AbrState<'_>) -> Result<(), AbrError> {
    if !state.manifest.is_valid_rep(state.last_rep) {
        return Err(AbrError::InvalidChoice(state.last_rep));
    }
    if state.remaining_chunks() == 0 {
        return Err(AbrError::InvalidParams("no chunks left to choose".into()));
    }
    Ok(())
}

fn model_for_state(
    state: &AbrState<'_>,
    steps: usize,
    tput_kbps: impl Fn(usize) -> f64,
    params: &MpcObjectiveParams,
) -> HorizonModel {
    let manifest = state.manifest;
    let rates: Vec<f64> = manifest.ladder().iter().map(|r| r.bitrate_kbps).collect();
    let dur = manifest.segment_duration_s();
    let first = state.chunk_index;
    HorizonModel::new(
        &rates,
        steps,
        |j, r| {
            if params.manifest_sizes {
                manifest.segment(first + j, r as u32 + 1).size_bits as f64
            } else {
                rates[r] * 1000.0 * dur
            }
        },
        tput_kbps,
        dur,
        state.rtt_s,
        state.max_buffer_s,
        state.buffer_s,
        state.last_rep as usize - 1,
        params.lambda_switch,
        params.mu_rebuf,
    )
}

/// MPC objective of `choices` (1-based rungs for chunks
/// `state.chunk_index..`) under a constant throughput forecast.
pub fn mpc_objective(
    choices: &[u32],
    state: &AbrState<'_>,
    predicted_tput_kbps: f64,
    params: &MpcObjectiveParams,
) -> Result<f64, AbrError> {
    check_state(state)?;
    if choices.len() > state.remaining_chunks() {
        return Err(AbrError::InvalidParams("choices run past the last chunk".into()));
    }
    let mut seq = Vec::with_capacity(choices.len());
    for &c in choices {
        if !state.manifest.is_valid_rep(c) {
            return Err(AbrError::InvalidChoice(c));
        }
        seq.push(c as usize - 1);
    }
    let model = model_for_state(state, seq.len(), |_| predicted_tput_kbps, params);
    Ok(model.evaluate(&seq))
}

/// Exact MPC decision under a given constant throughput forecast.
pub fn mpc_select_with_prediction(
    state: &AbrState<'_>,
    predicted_tput_kbps: f64,
    params: &MpcObjectiveParams,
) -> Result<u32, AbrError> {
    check_state(state)?;
    params.validate()?;
    let steps = params.horizon.min(state.remaining_chunks());
    let model = model_for_state(state, steps, |_| predicted_tput_kbps, params);
    Ok(model.solve().0[0] as u32 + 1)
}

/// Exact MPC decision with the harmonic-mean forecast.
pub fn mpc_select_exact(state: &AbrState<'_>, params: &MpcObjectiveParams) -> Result<u32, AbrError> {
    let tput = harmonic_mean_predict(state.throughput_history_kbps, params.window)?;
    mpc_select_with_prediction(state, tput, params)
}

/// Exact MPC decision with a per-chunk throughput forecast
/// (`forecast[j]` applies to chunk `chunk_index + j`).
pub fn mpc_select_forecast(
    state: &AbrState<'_>,
    forecast_kbps: &[f64],
    params: &MpcObjectiveParams,
) -> Result<u32, AbrError> {
    check_state(state)?;
    params.validate()?;
    let steps = params.horizon.min(state.remaining_chunks()).min(forecast_kbps.len());
    if steps == 0 {
        return Err(AbrError::InvalidParams("empty forecast".into()));
    }
    if let Some(&bad) = forecast_kbps[..steps].iter().find(|&&t| !(t > 0.0)) {
        return Err(AbrError::NonPositiveSample(bad));
    }
    let model = model_for_state(state, steps, |j| forecast_kbps[j], params);
    Ok(model.solve().0[0] as u32 + 1)
}

/// MPC solved from scratch at every decision.
#[derive(Debug, Clone)]
pub struct MpcSolver {
    params: MpcObjectiveParams,
}

impl MpcSolver {
    pub fn new(params: MpcObjectiveParams) -> Result<Self, AbrError> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl AbrPolicy for MpcSolver {
    fn name(&self) -> &str {
        "mpc_exact"
    }

    fn select(&self, state: &AbrState<'_>) -> Result<u32, AbrError> {
        mpc_select_exact(state, &self.params)
    }
}

/// FastMPC: MPC decisions read from a precomputed table.
#[derive(Debug, Clone)]
pub struct FastMpc {
    table: super::LookupTable,
}

impl FastMpc {
    pub fn new(table: super::LookupTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &super::LookupTable {
        &self.table
    }
}

impl AbrPolicy for FastMpc {
    fn name(&self) -> &str {
        "fastmpc"
    }

    fn select(&self, state: &AbrState<'_>) -> Result<u32, AbrError> {
        if state.manifest.ladder_size() != self.table.rep_count() {
            return Err(AbrError::InvalidParams(format!(
                "table covers {} rungs, manifest has {}",
                self.table.rep_count(),
                state.manifest.ladder_size()
            )));
        }
        super::mpc_select_table(state, &self.table)
    }
}
