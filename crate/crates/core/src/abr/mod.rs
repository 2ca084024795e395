//! Bitrate adaptation policies.
//!
//! Every policy sees the same [`AbrState`] before each chunk request and
//! returns a 1-based ladder index. Policies are pure decision functions;
//! the simulator owns all mutable session state.

mod buffer_based;
mod external;
mod mpc;
pub mod offline;
mod rate_based;
mod rdos;
mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::Manifest;

pub use buffer_based::{buffer_based_select, BufferBased, BufferBasedParams};
pub use external::ExternalPolicy;
pub use mpc::{
    mpc_objective, mpc_select_exact, mpc_select_forecast, mpc_select_with_prediction, FastMpc, MpcObjectiveParams,
    MpcSolver,
};
pub use rate_based::{rate_based_select, RateBased, RateBasedParams};
pub use rdos::{rdos_objective, rdos_select, rdos_select_with_prediction, Rdos, RdosParams};
pub use table::{build_mpc_table, mpc_select_table, BinningConfig, LookupTable, TableError};

/// Number of past chunks the throughput predictors average over.
pub const DEFAULT_PREDICTION_WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum AbrError {
    #[error("throughput history is empty")]
    EmptyHistory,
    #[error("throughput sample {0} is not positive")]
    NonPositiveSample(f64),
    #[error("policy returned index {0}, outside the ladder")]
    InvalidChoice(u32),
    #[error("unknown policy id {0:?}")]
    UnknownPolicy(String),
    #[error("invalid policy parameters: {0}")]
    InvalidParams(String),
    #[error("external policy failed: {0}")]
    External(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Decision inputs available before requesting chunk `chunk_index`.
#[derive(Debug, Clone, Copy)]
pub struct AbrState<'a> {
    /// 0-based index of the chunk about to be requested.
    pub chunk_index: usize,
    /// Seconds of content buffered.
    pub buffer_s: f64,
    /// Ladder index of the previous chunk.
    pub last_rep: u32,
    /// Per-chunk measured throughputs (size over transfer time), oldest first.
    pub throughput_history_kbps: &'a [f64],
    pub manifest: &'a Manifest,
    /// Request latency of the link, known to the client.
    pub rtt_s: f64,
    /// Player buffer capacity.
    pub max_buffer_s: f64,
}

impl AbrState<'_> {
    /// Chunks left including the one about to be requested.
    pub fn remaining_chunks(&self) -> usize {
        self.manifest.segment_count().saturating_sub(self.chunk_index)
    }
}

/// A bitrate selection policy.
pub trait AbrPolicy: Send + Sync {
    fn name(&self) -> &str;
    fn select(&self, state: &AbrState<'_>) -> Result<u32, AbrError>;
}

fn recent(history: &[f64], window: usize) -> Result<&[f64], AbrError> {
    if history.is_empty() {
        return Err(AbrError::EmptyHistory);
    }
    let n = window.max(1).min(history.len());
    Ok(&history[history.len() - n..])
}

/// Arithmetic mean of the last `window` samples.
pub fn arithmetic_mean_predict(history: &[f64], window: usize) -> Result<f64, AbrError> {
    let xs = recent(history, window)?;
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Harmonic mean of the last `window` samples; every sample must be positive.
pub fn harmonic_mean_predict(history: &[f64], window: usize) -> Result<f64, AbrError> {
    let xs = recent(history, window)?;
    let mut inv = 0.0;
    for &x in xs {
        if !(x > 0.0) {
            return Err(AbrError::NonPositiveSample(x));
        }
        inv += 1.0 / x;
    }
    Ok(xs.len() as f64 / inv)
}

/// Declarative policy selection, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum PolicyConfig {
    /// Rate-based.
    Rb(#[serde(default)] RateBasedParams),
    /// Buffer-based.
    Bb(#[serde(default)] BufferBasedParams),
    /// FastMPC through a precomputed lookup table.
    Fastmpc {
        #[serde(default)]
        params: MpcObjectiveParams,
        #[serde(default)]
        binning: BinningConfig,
        /// Load the table from here instead of building it.
        #[serde(default)]
        table_path: Option<String>,
    },
    /// MPC solved exactly at every decision.
    MpcExact {
        #[serde(default)]
        params: MpcObjectiveParams,
    },
    Rdos(#[serde(default)] RdosParams),
    /// A policy living in another process (e.g. a learned model).
    External {
        command: Vec<String>,
        #[serde(default)]
        name: Option<String>,
    },
}

impl PolicyConfig {
    pub fn label(&self) -> String {
        match self {
            PolicyConfig::Rb(_) => "rb".into(),
            PolicyConfig::Bb(_) => "bb".into(),
            PolicyConfig::Fastmpc { .. } => "fastmpc".into(),
            PolicyConfig::MpcExact { .. } => "mpc_exact".into(),
            PolicyConfig::Rdos(_) => "rdos".into(),
            PolicyConfig::External { name, .. } => name.clone().unwrap_or_else(|| "external".into()),
        }
    }

    /// Instantiates the policy for a given manifest ladder / segment length.
    ///
    /// FastMPC builds its table here unless a path is given.
    pub fn instantiate(
        &self,
        manifest: &Manifest,
        rtt_s: f64,
        max_buffer_s: f64,
    ) -> Result<Box<dyn AbrPolicy>, AbrError> {
        Ok(match self {
            PolicyConfig::Rb(p) => Box::new(RateBased::new(*p)),
            PolicyConfig::Bb(p) => Box::new(BufferBased::new(*p)?),
            PolicyConfig::Fastmpc {
                params,
                binning,
                table_path,
            } => {
                let table = match table_path {
                    Some(path) => {
                        let bytes = std::fs::read(path).map_err(|e| AbrError::InvalidParams(format!("{path}: {e}")))?;
                        LookupTable::from_bytes(&bytes)?
                    }
                    None => {
                        let binning = BinningConfig {
                            max_buffer_s,
                            ..*binning
                        };
                        build_mpc_table(
                            manifest.ladder(),
                            manifest.segment_duration_s(),
                            rtt_s,
                            params,
                            &binning,
                        )?
                    }
                };
                Box::new(FastMpc::new(table))
            }
            PolicyConfig::MpcExact { params } => Box::new(MpcSolver::new(*params)?),
            PolicyConfig::Rdos(p) => Box::new(Rdos::new(p.clone())?),
            PolicyConfig::External { command, name } => {
                let mut policy = ExternalPolicy::new(command.clone())?;
                if let Some(name) = name {
                    policy = policy.with_name(name.clone());
                }
                Box::new(policy)
            }
        })
    }
}
