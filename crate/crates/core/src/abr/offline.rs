//! Clairvoyant references for the MPC objective.
//!
//! Both solvers see the exact per-chunk throughput of a session: chunk `k`
//! downloads in `size / tput[k] + rtt`. The first chunk is fixed at the
//! initial rung and leaves one segment in the buffer; the objective then
//! scores chunks `1..n` with the same per-step reward MPC uses (nominal
//! Mb/s minus switch and stall costs).

use serde::{Deserialize, Serialize};

use super::{mpc_select_forecast, AbrError, AbrState, MpcObjectiveParams};
use crate::media::Manifest;
use crate::simulator::buffer_step;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OfflineConfig {
    pub params: MpcObjectiveParams,
    pub rtt_s: f64,
    pub max_buffer_s: f64,
    pub initial_rep: u32,
    /// Width of the buffer buckets the dynamic program merges states in.
    pub buffer_resolution_s: f64,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            params: MpcObjectiveParams::default(),
            rtt_s: 0.08,
            max_buffer_s: 60.0,
            initial_rep: 1,
            buffer_resolution_s: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflinePlan {
    /// Rungs for every chunk, the fixed first one included.
    pub choices: Vec<u32>,
    pub objective: f64,
}

fn check(manifest: &Manifest, tput_kbps: &[f64], config: &OfflineConfig) -> Result<(), AbrError> {
    config.params.validate()?;
    if tput_kbps.len() != manifest.segment_count() {
        return Err(AbrError::InvalidParams(format!(
            "{} throughputs for {} chunks",
            tput_kbps.len(),
            manifest.segment_count()
        )));
    }
    if let Some(&bad) = tput_kbps.iter().find(|&&t| !(t > 0.0)) {
        return Err(AbrError::NonPositiveSample(bad));
    }
    if !manifest.is_valid_rep(config.initial_rep) {
        return Err(AbrError::InvalidChoice(config.initial_rep));
    }
    if !(config.buffer_resolution_s > 0.0) {
        return Err(AbrError::InvalidParams("buffer_resolution_s must be positive".into()));
    }
    Ok(())
}

fn download(manifest: &Manifest, chunk: usize, rep: u32, tput_kbps: f64, rtt: f64) -> f64 {
    manifest.segment(chunk, rep).size_bits as f64 / (tput_kbps * 1000.0) + rtt
}

fn start_buffer(manifest: &Manifest, config: &OfflineConfig) -> f64 {
    manifest.segment_duration_s().min(config.max_buffer_s)
}

/// Objective of a full choice sequence under known throughputs.
pub fn session_objective(
    manifest: &Manifest,
    tput_kbps: &[f64],
    choices: &[u32],
    config: &OfflineConfig,
) -> Result<f64, AbrError> {
    check(manifest, tput_kbps, config)?;
    if choices.len() != manifest.segment_count() || choices[0] != config.initial_rep {
        return Err(AbrError::InvalidParams(
            "choices must cover every chunk and start at the initial rung".into(),
        ));
    }
    let dur = manifest.segment_duration_s();
    let p = &config.params;
    let mut buffer = start_buffer(manifest, config);
    let mut total = 0.0;
    for k in 1..choices.len() {
        let rep = choices[k];
        if !manifest.is_valid_rep(rep) {
            return Err(AbrError::InvalidChoice(rep));
        }
        let dl = download(manifest, k, rep, tput_kbps[k], config.rtt_s);
        let (next, stall, _) = buffer_step(buffer, dl, dur, config.max_buffer_s);
        let r = manifest.bitrate_kbps(rep) / 1000.0;
        let r_prev = manifest.bitrate_kbps(choices[k - 1]) / 1000.0;
        total += r - p.lambda_switch * (r - r_prev).abs() - p.mu_rebuf * stall;
        buffer = next;
    }
    Ok(total)
}

/// Dynamic program over (chunk, rung, buffer bucket). Each bucket keeps
/// its best-valued state with the exact buffer level, so the returned plan
/// is evaluated exactly; merging may cost a sliver of optimality.
pub fn offline_optimal(
    manifest: &Manifest,
    tput_kbps: &[f64],
    config: &OfflineConfig,
) -> Result<OfflinePlan, AbrError> {
    check(manifest, tput_kbps, config)?;
    let n = manifest.segment_count();
    let reps = manifest.ladder_size();
    let dur = manifest.segment_duration_s();
    let p = &config.params;
    let buckets = (config.max_buffer_s / config.buffer_resolution_s).ceil() as usize + 1;
    let bucket = |b: f64| ((b / config.buffer_resolution_s).round() as usize).min(buckets - 1);

    #[derive(Clone, Copy)]
    struct Cell {
        value: f64,
        buffer: f64,
        /// Index of the predecessor cell in the previous layer.
        from: usize,
    }
    let index = |rep: usize, b: usize| rep * buckets + b;

    let mut layers: Vec<Vec<Option<Cell>>> = Vec::with_capacity(n);
    let mut first = vec![None; reps * buckets];
    let b0 = start_buffer(manifest, config);
    first[index(config.initial_rep as usize - 1, bucket(b0))] = Some(Cell {
        value: 0.0,
        buffer: b0,
        from: usize::MAX,
    });
    layers.push(first);

    for k in 1..n {
        let mut next_layer: Vec<Option<Cell>> = vec![None; reps * buckets];
        let dl: Vec<f64> = (1..=reps as u32)
            .map(|r| download(manifest, k, r, tput_kbps[k], config.rtt_s))
            .collect();
        for (from, cell) in layers[k - 1].iter().enumerate() {
            let Some(cell) = cell else { continue };
            let prev = from / buckets;
            let r_prev = manifest.ladder()[prev].bitrate_kbps / 1000.0;
            for r in 0..reps {
                let (buf, stall, _) = buffer_step(cell.buffer, dl[r], dur, config.max_buffer_s);
                let rate = manifest.ladder()[r].bitrate_kbps / 1000.0;
                let value = cell.value + rate - p.lambda_switch * (rate - r_prev).abs() - p.mu_rebuf * stall;
                let slot = &mut next_layer[index(r, bucket(buf))];
                let replace = match slot {
                    None => true,
                    Some(old) => value > old.value || (value == old.value && buf > old.buffer),
                };
                if replace {
                    *slot = Some(Cell {
                        value,
                        buffer: buf,
                        from,
                    });
                }
            }
        }
        layers.push(next_layer);
    }

    let (mut at, _) = layers[n - 1]
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|c| (i, c.value)))
        .fold(
            (usize::MAX, f64::NEG_INFINITY),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
    let mut choices = vec![0u32; n];
    for k in (0..n).rev() {
        choices[k] = (at / buckets) as u32 + 1;
        at = layers[k][at].expect("backpointer targets a live cell").from;
    }
    let objective = session_objective(manifest, tput_kbps, &choices, config)?;
    Ok(OfflinePlan { choices, objective })
}

/// Receding-horizon MPC that is told the true throughput of the next
/// `horizon` chunks at every decision.
pub fn clairvoyant_mpc(
    manifest: &Manifest,
    tput_kbps: &[f64],
    config: &OfflineConfig,
) -> Result<OfflinePlan, AbrError> {
    check(manifest, tput_kbps, config)?;
    let n = manifest.segment_count();
    let dur = manifest.segment_duration_s();
    let params = MpcObjectiveParams {
        manifest_sizes: true,
        ..config.params
    };
    let mut choices = vec![config.initial_rep];
    let mut buffer = start_buffer(manifest, config);
    let history = [tput_kbps[0]];
    for k in 1..n {
        let state = AbrState {
            chunk_index: k,
            buffer_s: buffer,
            last_rep: choices[k - 1],
            throughput_history_kbps: &history,
            manifest,
            rtt_s: config.rtt_s,
            max_buffer_s: config.max_buffer_s,
        };
        let rep = mpc_select_forecast(&state, &tput_kbps[k..], &params)?;
        let dl = download(manifest, k, rep, tput_kbps[k], config.rtt_s);
        buffer = buffer_step(buffer, dl, dur, config.max_buffer_s).0;
        choices.push(rep);
    }
    let objective = session_objective(manifest, tput_kbps, &choices, config)?;
    Ok(OfflinePlan { choices, objective })
}
