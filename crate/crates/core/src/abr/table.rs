//! Offline FastMPC lookup table.
//!
//! Cells are indexed by (throughput bin, buffer bin, previous rung). Each
//! cell stores the exact MPC decision at the cell's representative state:
//! bin-center throughput, bin-center buffer, nominal chunk sizes, full
//! horizon.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic         8 bytes  "SQMPCT01"
//! n_tput        u32
//! n_buffer      u32
//! n_rep         u32
//! horizon       u32
//! window        u32      (harmonic-mean forecast window)
//! lambda        f64
//! mu            f64
//! rtt_s         f64
//! segment_s     f64
//! max_buffer_s  f64
//! bitrates      f64 × n_rep      (kb/s)
//! tput_edges    f64 × (n_tput + 1)
//! buffer_edges  f64 × (n_buffer + 1)
//! entries       u8 × n_tput·n_buffer·n_rep, row-major [tput][buffer][prev]
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mpc::HorizonModel;
use super::{harmonic_mean_predict, AbrError, AbrState, MpcObjectiveParams};
use crate::media::Representation;

const MAGIC: &[u8; 8] = b"SQMPCT01";

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("bin counts must be positive")]
    ZeroBins,
    #[error("bin range must be positive and finite")]
    BadRange,
    #[error("a table needs between 1 and 255 rungs, got {0}")]
    RepCount(usize),
    #[error("table artifact is truncated or malformed: {0}")]
    Malformed(&'static str),
}

/// Uniform binning of the table axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinningConfig {
    pub tput_bins: usize,
    pub buffer_bins: usize,
    pub tput_max_kbps: f64,
    pub max_buffer_s: f64,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            tput_bins: 100,
            buffer_bins: 100,
            tput_max_kbps: 20_000.0,
            max_buffer_s: 60.0,
        }
    }
}

impl BinningConfig {
    fn validate(&self) -> Result<(), TableError> {
        if self.tput_bins == 0 || self.buffer_bins == 0 {
            return Err(TableError::ZeroBins);
        }
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.tput_max_kbps) || !ok(self.max_buffer_s) {
            return Err(TableError::BadRange);
        }
        Ok(())
    }
}

fn uniform_edges(bins: usize, max: f64) -> Vec<f64> {
    (0..=bins).map(|i| max * i as f64 / bins as f64).collect()
}

fn bin_of(edges: &[f64], value: f64) -> usize {
    let bins = edges.len() - 1;
    edges[1..bins].partition_point(|&e| e <= value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    tput_edges: Vec<f64>,
    buffer_edges: Vec<f64>,
    bitrates_kbps: Vec<f64>,
    params: MpcObjectiveParams,
    rtt_s: f64,
    segment_duration_s: f64,
    entries: Vec<u8>,
}

impl LookupTable {
    pub fn tput_bins(&self) -> usize {
        self.tput_edges.len() - 1
    }

    pub fn buffer_bins(&self) -> usize {
        self.buffer_edges.len() - 1
    }

    pub fn rep_count(&self) -> usize {
        self.bitrates_kbps.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tput_edges(&self) -> &[f64] {
        &self.tput_edges
    }

    pub fn buffer_edges(&self) -> &[f64] {
        &self.buffer_edges
    }

    pub fn params(&self) -> &MpcObjectiveParams {
        &self.params
    }

    pub fn rtt_s(&self) -> f64 {
        self.rtt_s
    }

    pub fn segment_duration_s(&self) -> f64 {
        self.segment_duration_s
    }

    pub fn max_buffer_s(&self) -> f64 {
        self.buffer_edges[self.buffer_edges.len() - 1]
    }

    /// Representative throughput of a bin (its center).
    pub fn tput_center(&self, bin: usize) -> f64 {
        0.5 * (self.tput_edges[bin] + self.tput_edges[bin + 1])
    }

    pub fn buffer_center(&self, bin: usize) -> f64 {
        0.5 * (self.buffer_edges[bin] + self.buffer_edges[bin + 1])
    }

    pub fn tput_bin(&self, tput_kbps: f64) -> usize {
        bin_of(&self.tput_edges, tput_kbps)
    }

    pub fn buffer_bin(&self, buffer_s: f64) -> usize {
        bin_of(&self.buffer_edges, buffer_s)
    }

    fn offset(&self, tput_bin: usize, buffer_bin: usize, prev_rep: u32) -> usize {
        (tput_bin * self.buffer_bins() + buffer_bin) * self.rep_count() + (prev_rep as usize - 1)
    }

    /// Stored decision (1-based rung) of one cell.
    pub fn entry(&self, tput_bin: usize, buffer_bin: usize, prev_rep: u32) -> u32 {
        self.entries[self.offset(tput_bin, buffer_bin, prev_rep)] as u32
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(64 + self.entries.len() + 8 * (self.tput_edges.len() + self.buffer_edges.len()));
        out.extend_from_slice(MAGIC);
        for n in [
            self.tput_bins(),
            self.buffer_bins(),
            self.rep_count(),
            self.params.horizon,
            self.params.window,
        ] {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for v in [
            self.params.lambda_switch,
            self.params.mu_rebuf,
            self.rtt_s,
            self.segment_duration_s,
            self.max_buffer_s(),
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self
            .bitrates_kbps
            .iter()
            .chain(&self.tput_edges)
            .chain(&self.buffer_edges)
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.entries);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TableError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(TableError::Malformed("bad magic"));
        }
        let n_tput = cur.u32()? as usize;
        let n_buffer = cur.u32()? as usize;
        let n_rep = cur.u32()? as usize;
        let horizon = cur.u32()? as usize;
        let window = cur.u32()? as usize;
        if n_tput == 0 || n_buffer == 0 {
            return Err(TableError::ZeroBins);
        }
        if n_rep == 0 || n_rep > 255 {
            return Err(TableError::RepCount(n_rep));
        }
        let lambda = cur.f64()?;
        let mu = cur.f64()?;
        let rtt_s = cur.f64()?;
        let segment_duration_s = cur.f64()?;
        let _max_buffer = cur.f64()?;
        let bitrates_kbps = cur.f64s(n_rep)?;
        let tput_edges = cur.f64s(n_tput + 1)?;
        let buffer_edges = cur.f64s(n_buffer + 1)?;
        let entries = cur.take(n_tput * n_buffer * n_rep)?.to_vec();
        if cur.pos != bytes.len() {
            return Err(TableError::Malformed("trailing bytes"));
        }
        if entries.iter().any(|&e| e == 0 || e as usize > n_rep) {
            return Err(TableError::Malformed("entry outside the ladder"));
        }
        let increasing = |e: &[f64]| e.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&tput_edges) || !increasing(&buffer_edges) {
            return Err(TableError::Malformed("bin edges not increasing"));
        }
        Ok(Self {
            tput_edges,
            buffer_edges,
            bitrates_kbps,
            params: MpcObjectiveParams {
                lambda_switch: lambda,
                mu_rebuf: mu,
                horizon,
                window,
                ..Default::default()
            },
            rtt_s,
            segment_duration_s,
            entries,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TableError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(TableError::Malformed("truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, TableError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, TableError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, TableError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Tabulates exact MPC decisions over the binned state space.
pub fn build_mpc_table(
    ladder: &[Representation],
    segment_duration_s: f64,
    rtt_s: f64,
    params: &MpcObjectiveParams,
    binning: &BinningConfig,
) -> Result<LookupTable, AbrError> {
    binning.validate()?;
    params.validate()?;
    if ladder.is_empty() || ladder.len() > 255 {
        return Err(TableError::RepCount(ladder.len()).into());
    }
    let rates: Vec<f64> = ladder.iter().map(|r| r.bitrate_kbps).collect();
    let reps = rates.len();
    let mut table = LookupTable {
        tput_edges: uniform_edges(binning.tput_bins, binning.tput_max_kbps),
        buffer_edges: uniform_edges(binning.buffer_bins, binning.max_buffer_s),
        bitrates_kbps: rates.clone(),
        params: MpcObjectiveParams {
            manifest_sizes: false,
            ..*params
        },
        rtt_s,
        segment_duration_s,
        entries: Vec::new(),
    };
    let per_tput = binning.buffer_bins * reps;
    let table_ref = &table;
    let entries: Vec<u8> = (0..binning.tput_bins)
        .into_par_iter()
        .flat_map_iter(|t| {
            let tput = table_ref.tput_center(t);
            let rates = &rates;
            (0..per_tput).map(move |cell| {
                let b = cell / reps;
                let prev = cell % reps;
                let model = HorizonModel::new(
                    rates,
                    params.horizon,
                    |_, r| rates[r] * 1000.0 * segment_duration_s,
                    |_| tput,
                    segment_duration_s,
                    rtt_s,
                    binning.max_buffer_s,
                    table_ref.buffer_center(b),
                    prev,
                    params.lambda_switch,
                    params.mu_rebuf,
                );
                model.solve().0[0] as u8 + 1
            })
        })
        .collect();
    table.entries = entries;
    Ok(table)
}

/// Online FastMPC decision: harmonic-mean forecast, then a table read.
/// Out-of-range forecasts and buffers clamp to the edge bins.
pub fn mpc_select_table(state: &AbrState<'_>, table: &LookupTable) -> Result<u32, AbrError> {
    if state.last_rep == 0 || state.last_rep as usize > table.rep_count() {
        return Err(AbrError::InvalidChoice(state.last_rep));
    }
    let tput = harmonic_mean_predict(state.throughput_history_kbps, table.params.window)?;
    Ok(table.entry(table.tput_bin(tput), table.buffer_bin(state.buffer_s), state.last_rep))
}
