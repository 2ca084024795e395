//! Seeded synthetic content and bandwidth traces for experiments and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::media::{Manifest, MediaError, Representation, SegmentInfo};
use crate::nettrace::{Trace, TraceError};

/// Shape of synthetic content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContentModel {
    /// Bitrate (kb/s) at which a segment of average complexity reaches
    /// about 63% of full quality.
    pub knee_kbps: f64,
    /// Spread of per-segment complexity (log scale).
    pub complexity_sigma: f64,
    /// Relative spread of actual sizes around the nominal bitrate.
    pub size_jitter: f64,
}

impl Default for ContentModel {
    fn default() -> Self {
        Self {
            knee_kbps: 1500.0,
            complexity_sigma: 0.3,
            size_jitter: 0.1,
        }
    }
}

/// Quality of a segment encoded at `bitrate_kbps` with relative
/// `complexity` (1 = average): concave in bitrate, capped at 100.
pub fn quality_curve(bitrate_kbps: f64, knee_kbps: f64, complexity: f64) -> f64 {
    (100.0 * (1.0 - (-bitrate_kbps / (knee_kbps * complexity)).exp())).clamp(0.0, 100.0)
}

/// A manifest with random per-segment complexity and size jitter.
pub fn synthetic_manifest(
    ladder: Vec<Representation>,
    segment_duration_s: f64,
    segment_count: usize,
    model: &ContentModel,
    seed: u64,
) -> Result<Manifest, MediaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let complexity = Normal::new(0.0, model.complexity_sigma.max(0.0)).expect("finite sigma");
    let jitter = Normal::new(0.0, model.size_jitter.max(0.0)).expect("finite jitter");
    let segments = (0..segment_count)
        .map(|_| {
            let c = complexity.sample(&mut rng).exp();
            let mut last_quality = 0.0f64;
            ladder
                .iter()
                .map(|rep| {
                    let scale = (1.0 + jitter.sample(&mut rng)).clamp(0.5, 1.5);
                    let bits = (rep.bitrate_kbps * 1000.0 * segment_duration_s * scale)
                        .round()
                        .max(1.0);
                    // Higher rungs never look worse than lower ones.
                    let q = quality_curve(rep.bitrate_kbps, model.knee_kbps, c).max(last_quality);
                    last_quality = q;
                    SegmentInfo {
                        size_bits: bits as u64,
                        quality: q,
                    }
                })
                .collect()
        })
        .collect();
    Manifest::new(segment_duration_s, ladder, segments)
}

/// Shape of a synthetic bandwidth trace: an AR(1) process on log bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceModel {
    pub mean_kbps: f64,
    /// Standard deviation of log bandwidth.
    pub volatility: f64,
    /// Step-to-step correlation of log bandwidth.
    pub persistence: f64,
    pub step_s: f64,
    pub duration_s: f64,
}

impl Default for TraceModel {
    fn default() -> Self {
        Self {
            mean_kbps: 3000.0,
            volatility: 0.5,
            persistence: 0.8,
            step_s: 1.0,
            duration_s: 55.0,
        }
    }
}

pub fn synthetic_trace(model: &TraceModel, seed: u64) -> Result<Trace, TraceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = (model.duration_s / model.step_s).ceil().max(1.0) as usize;
    let phi = model.persistence.clamp(0.0, 0.999);
    let innovation = Normal::new(0.0, model.volatility.max(0.0) * (1.0 - phi * phi).sqrt()).expect("finite volatility");
    let start = Normal::new(0.0, model.volatility.max(0.0)).expect("finite volatility");
    // Centre so that the mean of exp(x) matches mean_kbps.
    let centre = model.mean_kbps.ln() - model.volatility * model.volatility / 2.0;
    let mut x = start.sample(&mut rng);
    let values: Vec<f64> = (0..steps)
        .map(|_| {
            let v = (centre + x).exp();
            x = phi * x + innovation.sample(&mut rng);
            v
        })
        .collect();
    Trace::from_granular(&values, model.step_s)
}

/// Nine traces crossing three bandwidth levels with three volatility levels.
pub fn trace_grid(seed: u64, duration_s: f64) -> Vec<(String, Trace)> {
    let mut out = Vec::with_capacity(9);
    for (i, mean) in [800.0, 2500.0, 8000.0].into_iter().enumerate() {
        for (j, vol) in [0.15, 0.45, 0.9].into_iter().enumerate() {
            let model = TraceModel {
                mean_kbps: mean,
                volatility: vol,
                duration_s,
                ..Default::default()
            };
            let trace =
                synthetic_trace(&model, seed.wrapping_add((i * 3 + j) as u64)).expect("grid parameters are valid");
            out.push((format!("mean{}_vol{}", mean as u32, j), trace));
        }
    }
    out
}

/// A uniformly random `(trace, size, start)` query for channel checks.
pub fn random_piecewise_trace(rng: &mut impl Rng, max_pieces: usize) -> Trace {
    let pieces = rng.gen_range(1..=max_pieces.max(1));
    let mut t = 0.0;
    let mut samples = Vec::with_capacity(pieces);
    for _ in 0..pieces {
        let bw = if rng.gen_bool(0.15) {
            0.0
        } else {
            rng.gen_range(50.0..20_000.0)
        };
        samples.push((t, bw));
        t += rng.gen_range(0.2..8.0);
    }
    if samples.iter().all(|s| s.1 == 0.0) {
        samples[0].1 = 500.0;
    }
    Trace::new(samples, t).expect("generated trace is valid")
}
