//! Trace-driven adaptive bitrate streaming simulation and QoE evaluation.
//!
//! The pipeline runs manifests ([`media`]) over bandwidth traces
//! ([`nettrace`]) through a player model ([`simulator`]) driven by an
//! adaptation policy ([`abr`]). The resulting session records are scored by
//! objective QoE models ([`qoe`]) and compared with subjective ratings
//! ([`subjective`]) using the tools in [`stats`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abr;
pub mod media;
pub mod nettrace;
mod process;
pub mod qoe;
pub mod simulator;
pub mod stats;
pub mod subjective;
pub mod synth;
