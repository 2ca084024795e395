//! Player state machine: sequential chunk downloads, buffer dynamics and
//! stall accounting.
//!
//! Playback starts once the first chunk has arrived. Afterwards each
//! download drains the buffer while it runs; if the buffer empties the
//! player stalls until the chunk lands. When a completed chunk would push
//! the buffer past capacity, the player idles (keeps playing without
//! downloading) until the chunk fits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abr::{AbrError, AbrPolicy, AbrState};
use crate::media::Manifest;
use crate::nettrace::{download_time, ChannelConfig, Trace, TraceError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Channel(#[from] TraceError),
    #[error(transparent)]
    Policy(#[from] AbrError),
    #[error("invalid player configuration: {0}")]
    Config(String),
    #[error("invalid session record: {0}")]
    Record(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlayerConfig {
    /// Buffer capacity in seconds of content.
    pub max_buffer_s: f64,
    /// Rung every session starts from.
    pub initial_rep: u32,
    /// Drop the first chunk and the startup delay when building records.
    pub drop_first_chunk: bool,
    pub channel: ChannelConfig,
}

impl Default for PlayerConfig {
    fn default() -> Self {
        Self {
            max_buffer_s: 60.0,
            initial_rep: 1,
            drop_first_chunk: true,
            channel: ChannelConfig::default(),
        }
    }
}

impl PlayerConfig {
    pub fn validate(&self, manifest: &Manifest) -> Result<(), SimError> {
        if !(self.max_buffer_s >= 2.0 * manifest.segment_duration_s()) {
            return Err(SimError::Config(format!(
                "max_buffer_s {} is below two segments",
                self.max_buffer_s
            )));
        }
        if !manifest.is_valid_rep(self.initial_rep) {
            return Err(SimError::Config(format!(
                "initial_rep {} is not in the ladder",
                self.initial_rep
            )));
        }
        if !(self.channel.rtt_s >= 0.0) {
            return Err(SimError::Config("rtt_s must be non-negative".into()));
        }
        Ok(())
    }
}

/// A playback interruption: where the playhead stood and for how long.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stall {
    /// Content time at which playback froze.
    pub position_s: f64,
    pub duration_s: f64,
}

/// Everything that happened during one simulated session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub choices: Vec<u32>,
    /// `(request_time_s, finish_time_s)` per chunk.
    pub download_spans: Vec<(f64, f64)>,
    pub startup_delay_s: f64,
    pub stalls: Vec<Stall>,
    pub total_wall_time_s: f64,
    /// Buffer right after each chunk was appended.
    pub buffer_levels_s: Vec<f64>,
    /// Stall incurred while each chunk downloaded.
    pub chunk_stalls_s: Vec<f64>,
}

impl SessionLog {
    pub fn total_stall_s(&self) -> f64 {
        self.stalls.iter().map(|s| s.duration_s).fold(0.0, |a, d| a + d)
    }

    /// Sum of |ΔR| over consecutive chunks, using nominal ladder bitrates.
    pub fn switch_magnitude_kbps(&self, manifest: &Manifest) -> f64 {
        self.choices
            .windows(2)
            .map(|w| (manifest.bitrate_kbps(w[1]) - manifest.bitrate_kbps(w[0])).abs())
            .sum()
    }

    /// Per-chunk rows for spreadsheets.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("chunk,rep,request_time_s,finish_time_s,buffer_after_s,stall_s\n");
        for (k, &rep) in self.choices.iter().enumerate() {
            let (req, fin) = self.download_spans[k];
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                k + 1,
                rep,
                req,
                fin,
                self.buffer_levels_s[k],
                self.chunk_stalls_s[k]
            ));
        }
        out
    }
}

/// The QoE-facing summary of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub segment_duration_s: f64,
    pub qualities: Vec<f64>,
    /// Actual per-segment bitrate (size over duration).
    pub bitrates_kbps: Vec<f64>,
    pub stalls: Vec<Stall>,
    pub startup_delay_s: f64,
    /// Lowest nominal ladder bitrate, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_bitrate_kbps: Option<f64>,
}

impl SessionRecord {
    /// Validated constructor.
    pub fn new(
        segment_duration_s: f64,
        qualities: Vec<f64>,
        bitrates_kbps: Vec<f64>,
        stalls: Vec<Stall>,
        startup_delay_s: f64,
    ) -> Result<Self, SimError> {
        let record = Self {
            segment_duration_s,
            qualities,
            bitrates_kbps,
            stalls,
            startup_delay_s,
            min_bitrate_kbps: None,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn with_min_bitrate(mut self, kbps: f64) -> Self {
        self.min_bitrate_kbps = Some(kbps);
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Record(m.to_string()));
        if self.qualities.is_empty() {
            return bad("no segments");
        }
        if self.qualities.len() != self.bitrates_kbps.len() {
            return bad("qualities and bitrates differ in length");
        }
        if !(self.segment_duration_s > 0.0) {
            return bad("segment duration must be positive");
        }
        if self.qualities.iter().any(|q| !(0.0..=100.0).contains(q)) {
            return bad("quality outside [0, 100]");
        }
        if self.bitrates_kbps.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return bad("bitrates must be positive");
        }
        if self
            .stalls
            .iter()
            .any(|s| !(s.duration_s > 0.0) || !(s.position_s >= 0.0) || !s.duration_s.is_finite())
        {
            return bad("stalls need positive duration and non-negative position");
        }
        if !(self.startup_delay_s >= 0.0) {
            return bad("negative startup delay");
        }
        if let Some(m) = self.min_bitrate_kbps {
            if !(m > 0.0) {
                return bad("min bitrate must be positive");
            }
        }
        Ok(())
    }

    pub fn segment_count(&self) -> usize {
        self.qualities.len()
    }

    pub fn content_duration_s(&self) -> f64 {
        self.segment_duration_s * self.qualities.len() as f64
    }

    pub fn total_stall_s(&self) -> f64 {
        self.stalls.iter().map(|s| s.duration_s).fold(0.0, |a, d| a + d)
    }

    /// Reference bitrate for log-utility models: the ladder minimum when
    /// recorded, otherwise the smallest observed bitrate.
    pub fn reference_bitrate_kbps(&self) -> f64 {
        self.min_bitrate_kbps
            .unwrap_or_else(|| self.bitrates_kbps.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Index of the segment played right before a stall at `position_s`.
    pub fn segment_before(&self, position_s: f64) -> usize {
        let x = position_s / self.segment_duration_s;
        // Positions produced by arithmetic on boundaries land a few ulps off.
        let x = if (x - x.round()).abs() < 1e-9 { x.round() } else { x };
        let idx = x.ceil() as isize - 1;
        idx.clamp(0, self.qualities.len() as isize - 1) as usize
    }

    pub fn mean_quality(&self) -> f64 {
        self.qualities.iter().sum::<f64>() / self.qualities.len() as f64
    }

    /// Sample standard deviation of segment quality (0 for one segment).
    pub fn quality_std(&self) -> f64 {
        let n = self.qualities.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean_quality();
        let ss: f64 = self.qualities.iter().map(|q| (q - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    /// Wall-clock onset of every stall on the presented timeline
    /// (startup, then content interleaved with earlier stalls).
    pub fn stall_onsets_s(&self) -> Vec<f64> {
        let mut elapsed_stall = 0.0;
        self.stalls
            .iter()
            .map(|s| {
                let onset = self.startup_delay_s + s.position_s + elapsed_stall;
                elapsed_stall += s.duration_s;
                onset
            })
            .collect()
    }
}

/// One buffer update around a chunk download.
///
/// Returns `(new_buffer_s, stall_s, idle_s)`.
pub fn buffer_step(buffer_s: f64, download_time_s: f64, segment_duration_s: f64, max_buffer_s: f64) -> (f64, f64, f64) {
    let stall = (download_time_s - buffer_s).max(0.0);
    let drained = buffer_s.min(download_time_s);
    let tentative = buffer_s - drained + segment_duration_s;
    if tentative > max_buffer_s {
        (max_buffer_s, stall, tentative - max_buffer_s)
    } else {
        (tentative, stall, 0.0)
    }
}

/// Simulates one streaming session.
pub fn run_session(
    manifest: &Manifest,
    trace: &Trace,
    policy: &dyn AbrPolicy,
    config: &PlayerConfig,
) -> Result<SessionLog, SimError> {
    config.validate(manifest)?;
    let n = manifest.segment_count();
    let dur = manifest.segment_duration_s();
    let rtt = config.channel.rtt_s;

    let mut choices = Vec::with_capacity(n);
    let mut spans = Vec::with_capacity(n);
    let mut stalls = Vec::new();
    let mut levels = Vec::with_capacity(n);
    let mut chunk_stalls = Vec::with_capacity(n);
    let mut history: Vec<f64> = Vec::with_capacity(n);

    let fetch = |clock: f64, chunk: usize, rep: u32| -> Result<(f64, f64), SimError> {
        let size = manifest.segment(chunk, rep).size_bits as f64;
        let dl = download_time(trace, &config.channel, clock, size)?;
        let transfer = (dl - rtt).max(f64::MIN_POSITIVE);
        Ok((dl, size / transfer / 1000.0))
    };

    // First chunk: fixed rung, playback starts when it lands.
    let first = config.initial_rep;
    let (startup, tput) = fetch(0.0, 0, first)?;
    let mut clock = startup;
    let mut buffer = dur.min(config.max_buffer_s);
    let mut played = 0.0;
    choices.push(first);
    spans.push((0.0, startup));
    levels.push(buffer);
    chunk_stalls.push(0.0);
    history.push(tput);

    for chunk in 1..n {
        let state = AbrState {
            chunk_index: chunk,
            buffer_s: buffer,
            last_rep: choices[chunk - 1],
            throughput_history_kbps: &history,
            manifest,
            rtt_s: rtt,
            max_buffer_s: config.max_buffer_s,
        };
        let rep = policy.select(&state)?;
        if !manifest.is_valid_rep(rep) {
            return Err(AbrError::InvalidChoice(rep).into());
        }
        let (dl, tput) = fetch(clock, chunk, rep)?;
        let (next, stall, idle) = buffer_step(buffer, dl, dur, config.max_buffer_s);
        if stall > 0.0 {
            stalls.push(Stall {
                position_s: played + buffer,
                duration_s: stall,
            });
        }
        played += buffer.min(dl) + idle;
        spans.push((clock, clock + dl));
        clock += dl + idle;
        buffer = next;
        choices.push(rep);
        levels.push(buffer);
        chunk_stalls.push(stall);
        history.push(tput);
    }

    Ok(SessionLog {
        choices,
        download_spans: spans,
        startup_delay_s: startup,
        stalls,
        total_wall_time_s: clock + buffer,
        buffer_levels_s: levels,
        chunk_stalls_s: chunk_stalls,
    })
}

/// Maps a log onto the presented session, optionally trimming the first
/// chunk and the startup delay.
pub fn to_record(log: &SessionLog, manifest: &Manifest, config: &PlayerConfig) -> SessionRecord {
    let dur = manifest.segment_duration_s();
    let skip = usize::from(config.drop_first_chunk && log.choices.len() > 1);
    let offset = skip as f64 * dur;
    let (qualities, bitrates) = log
        .choices
        .iter()
        .enumerate()
        .skip(skip)
        .map(|(k, &rep)| (manifest.segment(k, rep).quality, manifest.actual_bitrate_kbps(k, rep)))
        .unzip();
    SessionRecord {
        segment_duration_s: dur,
        qualities,
        bitrates_kbps: bitrates,
        stalls: log
            .stalls
            .iter()
            .map(|s| Stall {
                position_s: (s.position_s - offset).max(0.0),
                duration_s: s.duration_s,
            })
            .collect(),
        startup_delay_s: if skip == 1 { 0.0 } else { log.startup_delay_s },
        min_bitrate_kbps: Some(manifest.min_bitrate_kbps()),
    }
}
