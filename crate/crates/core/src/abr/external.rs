//! Adapter for policies that live in another process, such as a trained
//! neural controller.
//!
//! Before every decision the command is started, receives one JSON object
//! on stdin and must print a single 1-based ladder index on stdout.

use serde::Serialize;

use super::{AbrError, AbrPolicy, AbrState};

#[derive(Serialize)]
struct Request<'a> {
    chunk_index: usize,
    buffer_s: f64,
    last_rep: u32,
    throughput_history_kbps: &'a [f64],
    rtt_s: f64,
    max_buffer_s: f64,
    segment_duration_s: f64,
    remaining_chunks: usize,
    ladder_kbps: Vec<f64>,
    /// Sizes of the chunk about to be requested, one per rung.
    next_sizes_bits: Vec<u64>,
    next_qualities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExternalPolicy {
    command: Vec<String>,
    name: String,
}

impl ExternalPolicy {
    pub fn new(command: Vec<String>) -> Result<Self, AbrError> {
        if command.is_empty() {
            return Err(AbrError::InvalidParams("external policy needs a command".into()));
        }
        Ok(Self {
            command,
            name: "external".into(),
        })
    }

    pub fn with_name(mut self, name: String) -> Self {
        self.name = name;
        self
    }
}

impl AbrPolicy for ExternalPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn select(&self, state: &AbrState<'_>) -> Result<u32, AbrError> {
        let m = state.manifest;
        let next = &m.segments()[state.chunk_index.min(m.segment_count() - 1)];
        let request = Request {
            chunk_index: state.chunk_index,
            buffer_s: state.buffer_s,
            last_rep: state.last_rep,
            throughput_history_kbps: state.throughput_history_kbps,
            rtt_s: state.rtt_s,
            max_buffer_s: state.max_buffer_s,
            segment_duration_s: m.segment_duration_s(),
            remaining_chunks: state.remaining_chunks(),
            ladder_kbps: m.ladder().iter().map(|r| r.bitrate_kbps).collect(),
            next_sizes_bits: next.iter().map(|s| s.size_bits).collect(),
            next_qualities: next.iter().map(|s| s.quality).collect(),
        };
        let input = serde_json::to_string(&request).expect("request serializes");
        let out = crate::process::run_once(&self.command, &input).map_err(AbrError::External)?;
        let rep: u32 = out
            .parse()
            .map_err(|_| AbrError::External(format!("expected a ladder index, got {out:?}")))?;
        if !m.is_valid_rep(rep) {
            return Err(AbrError::InvalidChoice(rep));
        }
        Ok(rep)
    }
}
