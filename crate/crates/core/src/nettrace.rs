//! Bandwidth traces and the fluid channel model.
//!
//! A [`Trace`] is a piecewise-constant bandwidth timeline. Chunk downloads
//! are modelled as a bit-rate integral over that timeline, preceded by one
//! round trip for the request.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default evaluation window length in seconds.
pub const DEFAULT_WINDOW_S: f64 = 55.0;
/// Traces whose mean throughput does not exceed this are discarded.
pub const DEFAULT_MIN_AVG_KBPS: f64 = 200.0;
/// Default request round-trip time.
pub const DEFAULT_RTT_S: f64 = 0.08;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("trace input is empty")]
    Empty,
    #[error("line {line}: cannot parse {text:?}")]
    Syntax { line: usize, text: String },
    #[error("negative or non-finite bandwidth {value} at sample {index}")]
    NegativeBandwidth { index: usize, value: f64 },
    #[error("sample times must be strictly increasing (sample {index})")]
    Unordered { index: usize },
    #[error("first sample must start at 0, found {0}")]
    Origin(f64),
    #[error("trace duration {duration} does not cover last sample start {last_start}")]
    Duration { duration: f64, last_start: f64 },
    #[error("window of {window}s does not fit a {duration}s trace")]
    WindowTooLong { window: f64, duration: f64 },
    #[error("window length and stride must be positive")]
    BadStride,
    #[error("unknown trace format {0:?}")]
    UnknownFormat(String),
    #[error("trace exhausted with {remaining_bits} bits still to deliver")]
    Exhausted { remaining_bits: f64 },
    #[error("trace carries no bandwidth at all; transfer can never finish")]
    ZeroBandwidth,
    #[error("invalid channel or transfer parameter: {0}")]
    InvalidInput(&'static str),
}

/// Supported trace file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    /// One kb/s value per line, 5 s apart (FCC-style).
    #[serde(rename = "granular_5s")]
    Granular5s,
    /// One kb/s value per line, 1 s apart (HSDPA/Belgium-style).
    #[serde(rename = "granular_1s")]
    Granular1s,
    /// `time_s,bandwidth_kbps` rows.
    Pairs,
}

impl TraceFormat {
    fn granularity(self) -> Option<f64> {
        match self {
            TraceFormat::Granular5s => Some(5.0),
            TraceFormat::Granular1s => Some(1.0),
            TraceFormat::Pairs => None,
        }
    }
}

impl FromStr for TraceFormat {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "granular_5s" => Ok(TraceFormat::Granular5s),
            "granular_1s" => Ok(TraceFormat::Granular1s),
            "pairs" | "csv" => Ok(TraceFormat::Pairs),
            other => Err(TraceError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceFormat::Granular5s => "granular_5s",
            TraceFormat::Granular1s => "granular_1s",
            TraceFormat::Pairs => "pairs",
        })
    }
}

/// Request latency and end-of-trace behaviour of the emulated link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub rtt_s: f64,
    /// Wrap around to the start of the trace when a session outlasts it.
    pub loop_trace: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            rtt_s: DEFAULT_RTT_S,
            loop_trace: true,
        }
    }
}

/// Piecewise-constant bandwidth timeline.
///
/// `samples[i] = (start_s, kbps)` holds until the next sample starts, the
/// last one until `duration_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrace")]
pub struct Trace {
    samples: Vec<(f64, f64)>,
    duration_s: f64,
    #[serde(skip)]
    total_bits: f64,
}

#[derive(Deserialize)]
struct RawTrace {
    samples: Vec<(f64, f64)>,
    duration_s: f64,
}

impl TryFrom<RawTrace> for Trace {
    type Error = TraceError;

    fn try_from(raw: RawTrace) -> Result<Self, Self::Error> {
        Trace::new(raw.samples, raw.duration_s)
    }
}

impl Trace {
    pub fn new(samples: Vec<(f64, f64)>, duration_s: f64) -> Result<Self, TraceError> {
        let Some(&(first, _)) = samples.first() else {
            return Err(TraceError::Empty);
        };
        if first != 0.0 {
            return Err(TraceError::Origin(first));
        }
        for (i, &(t, bw)) in samples.iter().enumerate() {
            if !(bw >= 0.0) || !bw.is_finite() {
                return Err(TraceError::NegativeBandwidth { index: i, value: bw });
            }
            if i > 0 && !(t > samples[i - 1].0) {
                return Err(TraceError::Unordered { index: i });
            }
        }
        let last_start = samples[samples.len() - 1].0;
        if !(duration_s > 0.0) || !duration_s.is_finite() || duration_s < last_start {
            return Err(TraceError::Duration {
                duration: duration_s,
                last_start,
            });
        }
        let mut trace = Self {
            samples,
            duration_s,
            total_bits: 0.0,
        };
        trace.total_bits = trace
            .spans()
            .map(|(start, end, kbps)| kbps * 1000.0 * (end - start))
            .sum();
        Ok(trace)
    }

    pub fn constant(kbps: f64, duration_s: f64) -> Result<Self, TraceError> {
        Self::new(vec![(0.0, kbps)], duration_s)
    }

    /// Evenly spaced samples, `step_s` apart.
    pub fn from_granular(values: &[f64], step_s: f64) -> Result<Self, TraceError> {
        if values.is_empty() {
            return Err(TraceError::Empty);
        }
        let samples = values
            .iter()
            .enumerate()
            .map(|(k, &v)| (k as f64 * step_s, v))
            .collect();
        Self::new(samples, values.len() as f64 * step_s)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    /// `(start, end, kbps)` for every constant-bandwidth span.
    pub fn spans(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.samples.iter().enumerate().map(move |(i, &(start, kbps))| {
            let end = self.samples.get(i + 1).map_or(self.duration_s, |&(next, _)| next);
            (start, end, kbps)
        })
    }

    /// Time-weighted mean bandwidth in kb/s.
    pub fn mean_kbps(&self) -> f64 {
        self.total_bits / 1000.0 / self.duration_s
    }

    /// Bandwidth in effect at `t` (clamped into the trace).
    pub fn bandwidth_at(&self, t: f64) -> f64 {
        self.samples[self.span_index(t)].1
    }

    fn span_index(&self, local_t: f64) -> usize {
        self.samples
            .partition_point(|&(start, _)| start <= local_t)
            .saturating_sub(1)
    }

    /// Multiplies every sample by `factor` (≥ 0).
    pub fn scaled(&self, factor: f64) -> Result<Self, TraceError> {
        Self::new(
            self.samples.iter().map(|&(t, v)| (t, v * factor)).collect(),
            self.duration_s,
        )
    }

    /// Serializes as `time_s,bandwidth_kbps` rows.
    pub fn to_pairs_text(&self) -> String {
        let mut out = String::from("time_s,bandwidth_kbps\n");
        for &(t, v) in &self.samples {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }
}

fn is_skippable(line: &str) -> bool {
    line.is_empty() || line.starts_with('#')
}

/// Parses a trace file in the given layout.
///
/// Fixed-granularity files expand to `(k·Δ, value)`. `pairs` files are
/// re-origined so the first row starts at 0; the final row lasts as long as
/// the gap before it (1 s for a single-row file).
pub fn parse_trace(text: &str, format: TraceFormat) -> Result<Trace, TraceError> {
    if let Some(step) = format.granularity() {
        let mut values = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if is_skippable(line) {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| TraceError::Syntax {
                line: n + 1,
                text: line.to_string(),
            })?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(TraceError::NegativeBandwidth {
                    index: values.len(),
                    value: v,
                });
            }
            values.push(v);
        }
        return Trace::from_granular(&values, step);
    }

    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if is_skippable(line) {
            continue;
        }
        let body = line.trim_start_matches('(').trim_end_matches(')');
        let mut fields = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty());
        let parsed = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(row) => rows.push(row),
            // A non-numeric first row is a header.
            None if rows.is_empty() && !line.starts_with('(') => continue,
            None => {
                return Err(TraceError::Syntax {
                    line: n + 1,
                    text: line.to_string(),
                })
            }
        }
    }
    if rows.is_empty() {
        return Err(TraceError::Empty);
    }
    for (i, &(_, v)) in rows.iter().enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(TraceError::NegativeBandwidth { index: i, value: v });
        }
    }
    let origin = rows[0].0;
    let samples: Vec<(f64, f64)> = rows.iter().map(|&(t, v)| (t - origin, v)).collect();
    let n = samples.len();
    let tail = if n > 1 {
        samples[n - 1].0 - samples[n - 2].0
    } else {
        1.0
    };
    if n > 1 && !(tail > 0.0) {
        return Err(TraceError::Unordered { index: n - 1 });
    }
    let duration = samples[n - 1].0 + tail;
    Trace::new(samples, duration)
}

/// Cuts `trace` into windows of `window_s`, starting every `stride_s`, each
/// re-origined to 0.
pub fn window_traces(trace: &Trace, window_s: f64, stride_s: f64) -> Result<Vec<Trace>, TraceError> {
    if !(stride_s > 0.0) || !(window_s > 0.0) {
        return Err(TraceError::BadStride);
    }
    const EPS: f64 = 1e-9;
    if window_s > trace.duration_s + EPS {
        return Err(TraceError::WindowTooLong {
            window: window_s,
            duration: trace.duration_s,
        });
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let start = k as f64 * stride_s;
        if start + window_s > trace.duration_s + EPS {
            break;
        }
        let end = start + window_s;
        let mut samples = vec![(0.0, trace.bandwidth_at(start))];
        samples.extend(
            trace
                .samples
                .iter()
                .filter(|&&(t, _)| t > start && t < end)
                .map(|&(t, v)| (t - start, v)),
        );
        out.push(Trace::new(samples, window_s)?);
        k += 1;
    }
    Ok(out)
}

/// Keeps traces whose time-weighted mean strictly exceeds `min_avg_kbps`.
pub fn filter_traces(traces: Vec<Trace>, min_avg_kbps: f64) -> Vec<Trace> {
    traces.into_iter().filter(|t| t.mean_kbps() > min_avg_kbps).collect()
}

/// Wall time to fetch `size_bits` with the request issued at `start_time_s`.
///
/// One RTT elapses before any bits flow; afterwards the transfer drains the
/// trace's bandwidth integral. Zero-bandwidth spans simply pass.
pub fn download_time(
    trace: &Trace,
    channel: &ChannelConfig,
    start_time_s: f64,
    size_bits: f64,
) -> Result<f64, TraceError> {
    if !(size_bits >= 0.0) || !size_bits.is_finite() {
        return Err(TraceError::InvalidInput("size_bits"));
    }
    if !(start_time_s >= 0.0) || !start_time_s.is_finite() {
        return Err(TraceError::InvalidInput("start_time_s"));
    }
    if !(channel.rtt_s >= 0.0) {
        return Err(TraceError::InvalidInput("rtt_s"));
    }
    if size_bits == 0.0 {
        return Ok(channel.rtt_s);
    }

    let duration = trace.duration_s;
    let flow_start = start_time_s + channel.rtt_s;
    let mut cycle_offset = 0.0;
    let mut local = flow_start;
    if flow_start >= duration {
        if !channel.loop_trace {
            return Err(TraceError::Exhausted {
                remaining_bits: size_bits,
            });
        }
        let cycles = (flow_start / duration).floor();
        cycle_offset = cycles * duration;
        local = flow_start - cycle_offset;
        if local >= duration {
            cycle_offset += duration;
            local -= duration;
        }
    }

    let mut remaining = size_bits;
    let mut idx = trace.span_index(local);
    loop {
        let (_, kbps) = trace.samples[idx];
        let span_end = trace.samples.get(idx + 1).map_or(duration, |&(next, _)| next);
        let rate = kbps * 1000.0;
        if rate > 0.0 {
            let capacity = rate * (span_end - local);
            if capacity >= remaining {
                let finish = cycle_offset + local + remaining / rate;
                return Ok(finish - start_time_s);
            }
            remaining -= capacity;
        }
        local = span_end;
        idx += 1;
        if idx == trace.samples.len() {
            if !channel.loop_trace {
                return Err(TraceError::Exhausted {
                    remaining_bits: remaining,
                });
            }
            if trace.total_bits <= 0.0 {
                return Err(TraceError::ZeroBandwidth);
            }
            idx = 0;
            local = 0.0;
            cycle_offset += duration;
            // Skip whole cycles, leaving a remainder in (0, total_bits].
            let skip = (remaining / trace.total_bits).ceil() - 1.0;
            if skip >= 1.0 {
                remaining -= skip * trace.total_bits;
                cycle_offset += skip * duration;
            }
        }
    }
}
