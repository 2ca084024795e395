//! The knowledge-driven QoE models. Every model is a parameter struct with
//! documented defaults and a pure `score` method.
//!
//! Bitrates enter in Mb/s, times in seconds, qualities on the 0-100 scale.

use serde::{Deserialize, Serialize};

use super::{PenaltySurface, QoeError};
use crate::simulator::SessionRecord;

fn nonneg(name: &str, v: f64) -> Result<(), QoeError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(QoeError::Params(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn mbps(record: &SessionRecord) -> impl Iterator<Item = f64> + '_ {
    record.bitrates_kbps.iter().map(|r| r / 1000.0)
}

fn switch_magnitude(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    xs.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, |a, d| a + d)
}

/// Linear bitrate / switch / stall / startup form, scored on bitrates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct YinParams {
    pub lambda: f64,
    /// Per stalled second.
    pub mu: f64,
    /// Per second of startup delay.
    pub mu_startup: f64,
}

impl Default for YinParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            mu: 4.3,
            mu_startup: 4.3,
        }
    }
}

impl YinParams {
    pub fn validate(&self) -> Result<(), QoeError> {
        nonneg("lambda", self.lambda)?;
        nonneg("mu", self.mu)?;
        nonneg("mu_startup", self.mu_startup)
    }

    pub fn score(&self, record: &SessionRecord) -> f64 {
        mbps(record).sum::<f64>()
            - self.lambda * switch_magnitude(mbps(record))
            - self.mu * record.total_stall_s()
            - self.mu_startup * record.startup_delay_s
    }
}

/// The same linear form with segment qualities in place of bitrates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BentalebParams {
    pub lambda: f64,
    pub mu: f64,
    pub mu_startup: f64,
}

impl Default for BentalebParams {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            mu: 50.0,
            mu_startup: 50.0,
        }
    }
}

impl BentalebParams {
    pub fn validate(&self) -> Result<(), QoeError> {
        nonneg("lambda", self.lambda)?;
        nonneg("mu", self.mu)?;
        nonneg("mu_startup", self.mu_startup)
    }

    pub fn score(&self, record: &SessionRecord) -> f64 {
        record.qualities.iter().sum::<f64>()
            - self.lambda * switch_magnitude(record.qualities.iter().copied())
            - self.mu * record.total_stall_s()
            - self.mu_startup * record.startup_delay_s
    }
}

/// Exponential stall model: `a·exp(-(b_len·mean_stall + b_cnt)·count) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FtwParams {
    pub a: f64,
    pub b_len: f64,
    pub b_cnt: f64,
    pub c: f64,
}

impl Default for FtwParams {
    fn default() -> Self {
        Self {
            a: 3.5,
            b_len: 0.15,
            b_cnt: 0.19,
            c: 1.5,
        }
    }
}

impl FtwParams {
    pub fn validate(&self) -> Result<(), QoeError> {
        nonneg("a", self.a)?;
        nonneg("b_len", self.b_len)?;
        nonneg("b_cnt", self.b_cnt)?;
        if !self.c.is_finite() {
            return Err(QoeError::Params("c must be finite".into()));
        }
        Ok(())
    }

    pub fn score(&self, record: &SessionRecord) -> f64 {
        let count = record.stalls.len() as f64;
        if count == 0.0 {
            return self.a + self.c;
        }
        let mean = record.total_stall_s() / count;
        self.a * (-(self.b_len * mean + self.b_cnt) * count).exp() + self.c
    }
}

/// Level-based regression on startup delay, stall frequency and mean stall
/// duration, each quantized to 0, 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MokParams {
    pub intercept: f64,
    pub w_init: f64,
    pub w_freq: f64,
    pub w_dur: f64,
    /// Startup delay (s) at which levels 1 and 2 begin.
    pub init_thresholds_s: [f64; 2],
    /// Stalls per minute of content at which levels 1 and 2 begin.
    pub freq_thresholds_per_min: [f64; 2],
    /// Mean stall duration (s) at which levels 1 and 2 begin.
    pub dur_thresholds_s: [f64; 2],
}

impl Default for MokParams {
    fn default() -> Self {
        Self {
            intercept: 4.23,
            w_init: 0.0672,
            w_freq: 0.742,
            w_dur: 0.106,
            init_thresholds_s: [1.0, 5.0],
            freq_thresholds_per_min: [1.2, 9.0],
            dur_thresholds_s: [5.0, 10.0],
        }
    }
}

fn level(value: f64, thresholds: [f64; 2]) -> u8 {
    if value < thresholds[0] {
        0
    } else if value < thresholds[1] {
        1
    } else {
        2
    }
}

impl MokParams {
    pub fn validate(&self) -> Result<(), QoeError> {
        nonneg("w_init", self.w_init)?;
        nonneg("w_freq", self.w_freq)?;
        nonneg("w_dur", self.w_dur)?;
        for t in [
            self.init_thresholds_s,
            self.freq_thresholds_per_min,
            self.dur_thresholds_s,
        ] {
            if !(t[0] > 0.0 && t[1] >= t[0] && t[1].is_finite()) {
                return Err(QoeError::Params("level thresholds must be positive and ordered".into()));
            }
        }
        Ok(())
    }

    /// `(L_init, L_freq, L_dur)` for a record.
    pub fn levels(&self, record: &SessionRecord) -> (u8, u8, u8) {
        let count = record.stalls.len() as f64;
        let per_min = count / (record.content_duration_s() / 60.0);
        let mean = if count > 0.0 {
            record.total_stall_s() / count
        } else {
            0.0
        };
        let freq = if count > 0.0 {
            level(per_min, self.freq_thresholds_per_min)
        } else {
            0
        };
        let dur = if count > 0.0 {
            level(mean, self.dur_thresholds_s)
        } else {
            0
        };
        (level(record.startup_delay_s, self.init_thresholds_s), freq, dur)
    }

    pub fn score_levels(&self, levels: (u8, u8, u8)) -> f64 {
        self.intercept
            - self.w_init * f64::from(levels.0.min(2))
            - self.w_freq * f64::from(levels.1.min(2))
            - self.w_dur * f64::from(levels.2.min(2))
    }

    pub fn score(&self, record: &SessionRecord) -> f64 {
        self.score_levels(self.levels(record))
    }
}

/// Mean bitrate against the rebuffering ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiuParams {
    /// Weight of the rebuffering ratio.
    pub c1: f64,
    /// Weight of the mean bitrate (Mb/s).
    pub c2: f64,
}

impl Default for LiuParams {
    fn default() -> Self {
        Self { c1: 4.0, c2: 1.0 }
    }
}

impl LiuParams {
    pub fn validate(&self) -> Result<(), QoeError> {
        nonneg("c1", self.c1)?;
        nonneg("c2", self.c2)
    }

    pub fn rebuffer_ratio(record: &SessionRecord) -> f64 {
        let stall = record.total_stall_s();
        stall / (stall + record.content_duration_s())
    }

    pub fn score(&self, record: &SessionRecord) -> f64 {
        let mean = mbps(record).sum::<f64>() / record.segment_count() as f64;
        self.c2 * mean - self.c1 * Self::rebuffer_ratio(record)
    }
}

fn log_utility(record: &SessionRecord) -> f64 {
    let r_min = record.reference_bitrate_kbps();
    record.bitrates_kbps.iter().map(|r| (r / r_min).ln()).sum()
}

/// Log-bitrate chunk utility minus a linear stall cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct XueParams {
    pub rho: f64,
}

impl Default for XueParams {
    fn default() -> Self {
        Self { rho: 1.0 }
    }
}

impl XueParams {
    pub fn validate(&self) -> Result<(), QoeError> {
        nonneg("rho", self.rho)
    }

    pub fn score(&self, record: &SessionRecord) -> f64 {
        log_utility(record) - self.rho * record.total_stall_s()
    }
}

/// Log-bitrate utility with a smoothness reward on played time, which
/// reduces to a per-stalled-second cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpiteriParams {
    pub gamma: f64,
}

impl Default for SpiteriParams {
    fn default() -> Self {
        Self { gamma: 2.0 }
    }
}

impl SpiteriParams {
    pub fn validate(&self) -> Result<(), QoeError> {
        nonneg("gamma", self.gamma)
    }

    pub fn score(&self, record: &SessionRecord) -> f64 {
        let played = record.content_duration_s();
        let stalled = record.total_stall_s();
        log_utility(record) + self.gamma * played - self.gamma * (played + stalled)
    }
}

/// Mean presentation quality plus quality-weighted, position-decayed stall
/// penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SqiParams {
    pub u0: f64,
    /// Extra penalty per quality point of the segment playing when the
    /// stall hit.
    pub u1: f64,
    /// Decay constant of the position weighting; infinity disables it.
    pub tau_memory_s: f64,
}

impl Default for SqiParams {
    fn default() -> Self {
        Self {
            u0: 2.0,
            u1: 0.05,
            tau_memory_s: 60.0,
        }
    }
}

impl SqiParams {
    pub fn validate(&self) -> Result<(), QoeError> {
        nonneg("u0", self.u0)?;
        nonneg("u1", self.u1)?;
        if !(self.tau_memory_s > 0.0) {
            return Err(QoeError::Params("tau_memory_s must be positive".into()));
        }
        Ok(())
    }

    pub fn score(&self, record: &SessionRecord) -> f64 {
        let n = record.segment_count() as f64;
        let penalty: f64 = record
            .stalls
            .iter()
            .map(|s| {
                let q = record.qualities[record.segment_before(s.position_s)];
                (self.u0 + self.u1 * q) * s.duration_s * (-s.position_s / self.tau_memory_s).exp()
            })
            .sum();
        record.mean_quality() - penalty / n
    }
}

/// Mean quality minus stall and adaptation penalties, each averaged over
/// the segment count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KsqiParams {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// Per quality point of a downward switch.
    pub beta_neg: f64,
    /// Per quality point of an upward switch.
    pub beta_pos: f64,
    /// Learned stall penalty over (duration_s, quality_before); replaces
    /// the parametric stall term when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stall_surface: Option<PenaltySurface>,
    /// Learned switch penalty over (quality_from, quality_to); replaces the
    /// parametric switch term when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switch_surface: Option<PenaltySurface>,
}

impl Default for KsqiParams {
    fn default() -> Self {
        Self {
            c0: 1.0,
            c1: 25.0,
            c2: 0.25,
            beta_neg: 0.5,
            beta_pos: 0.1,
            stall_surface: None,
            switch_surface: None,
        }
    }
}

impl KsqiParams {
    /// Parametric constructor; fails if the invariants do not hold.
    pub fn new(c0: f64, c1: f64, c2: f64, beta_neg: f64, beta_pos: f64) -> Result<Self, QoeError> {
        let p = Self {
            c0,
            c1,
            c2,
            beta_neg,
            beta_pos,
            stall_surface: None,
            switch_surface: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), QoeError> {
        for (name, v) in [
            ("c0", self.c0),
            ("c1", self.c1),
            ("c2", self.c2),
            ("beta_neg", self.beta_neg),
            ("beta_pos", self.beta_pos),
        ] {
            nonneg(name, v)?;
        }
        if self.beta_neg < self.beta_pos {
            return Err(QoeError::Params(format!(
                "beta_neg ({}) must be >= beta_pos ({})",
                self.beta_neg, self.beta_pos
            )));
        }
        Ok(())
    }

    /// Penalty of a stall of `duration_s` after a segment of `quality_before`.
    pub fn stall_penalty(&self, duration_s: f64, quality_before: f64) -> f64 {
        match &self.stall_surface {
            Some(s) => s.eval(duration_s, quality_before),
            None => self.c0 * duration_s.ln_1p() * (self.c1 + self.c2 * (100.0 - quality_before)),
        }
    }

    /// Penalty of moving from quality `from` to quality `to`.
    pub fn switch_penalty(&self, from: f64, to: f64) -> f64 {
        match &self.switch_surface {
            Some(s) => s.eval(from, to),
            None => {
                let dq = to - from;
                self.beta_neg * (-dq).max(0.0) + self.beta_pos * dq.max(0.0)
            }
        }
    }

    pub fn score(&self, record: &SessionRecord) -> f64 {
        let n = record.segment_count() as f64;
        let q = &record.qualities;
        let stall: f64 = record
            .stalls
            .iter()
            .map(|s| self.stall_penalty(s.duration_s, q[record.segment_before(s.position_s)]))
            .sum();
        let switch: f64 = q.windows(2).map(|w| self.switch_penalty(w[0], w[1])).sum();
        record.mean_quality() - (stall + switch) / n
    }
}
