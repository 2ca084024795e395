//! Representations, segments and manifests.
//!
//! A [`Manifest`] is the sender side of a streaming session: the bitrate
//! ladder plus, for every segment and every representation, the transfer
//! size in bits and a precomputed perceptual quality score.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default segment length in seconds.
pub const DEFAULT_SEGMENT_DURATION_S: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum MediaError {
    #[error("malformed manifest document: {0}")]
    Schema(String),
    #[error("ladder is empty")]
    EmptyLadder,
    #[error("ladder index {found} at position {position}, expected {expected}")]
    LadderIndex { position: usize, expected: u32, found: u32 },
    #[error("ladder bitrates must be strictly increasing (index {index})")]
    NonIncreasingBitrate { index: u32 },
    #[error("representation {index} has invalid dimensions or bitrate")]
    InvalidRepresentation { index: u32 },
    #[error("segment row {row} has {found} entries, ladder has {expected}")]
    RaggedSegments { row: usize, expected: usize, found: usize },
    #[error("segment {row}/{rep}: quality {quality} outside [0, 100]")]
    QualityOutOfRange { row: usize, rep: u32, quality: f64 },
    #[error("segment {row}/{rep}: size must be positive")]
    ZeroSize { row: usize, rep: u32 },
    #[error("segment duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("manifest has no segments")]
    NoSegments,
    #[error("choice list is empty")]
    EmptyChoices,
    #[error("representation index {0} is not in the ladder")]
    IndexOutOfRange(u32),
    #[error("{choices} choices for a manifest of {segments} segments")]
    TooManyChoices { choices: usize, segments: usize },
}

/// One encoding of the content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    /// 1-based ordinal within the ladder.
    pub index: u32,
    pub width: u32,
    pub height: u32,
    /// Nominal bitrate in kb/s.
    pub bitrate_kbps: f64,
}

impl Representation {
    pub const fn new(index: u32, width: u32, height: u32, bitrate_kbps: f64) -> Self {
        Self {
            index,
            width,
            height,
            bitrate_kbps,
        }
    }
}

/// Per-segment, per-representation payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    /// Transfer size in bits.
    pub size_bits: u64,
    /// Perceptual quality score in `[0, 100]`.
    pub quality: f64,
}

/// The 13-rung encoding ladder used throughout the toolkit.
pub fn ladder_default() -> Vec<Representation> {
    vec![
        Representation::new(1, 320, 180, 235.0),
        Representation::new(2, 384, 216, 375.0),
        Representation::new(3, 512, 288, 560.0),
        Representation::new(4, 512, 288, 750.0),
        Representation::new(5, 640, 360, 1050.0),
        Representation::new(6, 960, 540, 1750.0),
        Representation::new(7, 1280, 720, 2350.0),
        Representation::new(8, 1280, 720, 3000.0),
        Representation::new(9, 1920, 1080, 4300.0),
        Representation::new(10, 1920, 1080, 5800.0),
        Representation::new(11, 2560, 1440, 8100.0),
        Representation::new(12, 3840, 2160, 11600.0),
        Representation::new(13, 3840, 2160, 16800.0),
    ]
}

/// Checks the ladder invariants: contiguous 1-based indices, positive
/// dimensions, strictly increasing bitrate.
pub fn validate_ladder(ladder: &[Representation]) -> Result<(), MediaError> {
    if ladder.is_empty() {
        return Err(MediaError::EmptyLadder);
    }
    for (pos, rep) in ladder.iter().enumerate() {
        let expected = pos as u32 + 1;
        if rep.index != expected {
            return Err(MediaError::LadderIndex {
                position: pos,
                expected,
                found: rep.index,
            });
        }
        if rep.width == 0 || rep.height == 0 || !(rep.bitrate_kbps > 0.0) || !rep.bitrate_kbps.is_finite() {
            return Err(MediaError::InvalidRepresentation { index: rep.index });
        }
        if pos > 0 && rep.bitrate_kbps <= ladder[pos - 1].bitrate_kbps {
            return Err(MediaError::NonIncreasingBitrate { index: rep.index });
        }
    }
    Ok(())
}

/// Ladder, segment duration and the segment size/quality matrix.
///
/// Immutable after construction; every constructor validates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    segment_duration_s: f64,
    ladder: Vec<Representation>,
    /// `segments[k][r]` is segment `k` at ladder position `r` (index `r + 1`).
    segments: Vec<Vec<SegmentInfo>>,
}

#[derive(Deserialize)]
struct RawManifest {
    #[serde(default = "default_duration")]
    segment_duration_s: f64,
    ladder: Vec<Representation>,
    segments: Vec<Vec<SegmentInfo>>,
}

fn default_duration() -> f64 {
    DEFAULT_SEGMENT_DURATION_S
}

impl Manifest {
    pub fn new(
        segment_duration_s: f64,
        ladder: Vec<Representation>,
        segments: Vec<Vec<SegmentInfo>>,
    ) -> Result<Self, MediaError> {
        if !(segment_duration_s > 0.0) || !segment_duration_s.is_finite() {
            return Err(MediaError::InvalidDuration(segment_duration_s));
        }
        validate_ladder(&ladder)?;
        if segments.is_empty() {
            return Err(MediaError::NoSegments);
        }
        for (row, entries) in segments.iter().enumerate() {
            if entries.len() != ladder.len() {
                return Err(MediaError::RaggedSegments {
                    row,
                    expected: ladder.len(),
                    found: entries.len(),
                });
            }
            for (r, seg) in entries.iter().enumerate() {
                let rep = r as u32 + 1;
                if !(0.0..=100.0).contains(&seg.quality) {
                    return Err(MediaError::QualityOutOfRange {
                        row,
                        rep,
                        quality: seg.quality,
                    });
                }
                if seg.size_bits == 0 {
                    return Err(MediaError::ZeroSize { row, rep });
                }
            }
        }
        Ok(Self {
            segment_duration_s,
            ladder,
            segments,
        })
    }

    /// Builds a manifest whose segment sizes equal the nominal bitrate times
    /// the segment duration. `quality(k, rep)` supplies the scores.
    pub fn nominal(
        ladder: Vec<Representation>,
        segment_duration_s: f64,
        segment_count: usize,
        mut quality: impl FnMut(usize, u32) -> f64,
    ) -> Result<Self, MediaError> {
        let segments = (0..segment_count)
            .map(|k| {
                ladder
                    .iter()
                    .map(|rep| SegmentInfo {
                        size_bits: (rep.bitrate_kbps * 1000.0 * segment_duration_s).round() as u64,
                        quality: quality(k, rep.index),
                    })
                    .collect()
            })
            .collect();
        Self::new(segment_duration_s, ladder, segments)
    }

    pub fn segment_duration_s(&self) -> f64 {
        self.segment_duration_s
    }

    pub fn ladder(&self) -> &[Representation] {
        &self.ladder
    }

    pub fn ladder_size(&self) -> usize {
        self.ladder.len()
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[Vec<SegmentInfo>] {
        &self.segments
    }

    pub fn is_valid_rep(&self, rep: u32) -> bool {
        rep >= 1 && (rep as usize) <= self.ladder.len()
    }

    /// Nominal ladder bitrate of a 1-based representation index.
    ///
    /// Panics if `rep` is outside the ladder.
    pub fn bitrate_kbps(&self, rep: u32) -> f64 {
        self.ladder[rep as usize - 1].bitrate_kbps
    }

    pub fn min_bitrate_kbps(&self) -> f64 {
        self.ladder[0].bitrate_kbps
    }

    pub fn max_bitrate_kbps(&self) -> f64 {
        self.ladder[self.ladder.len() - 1].bitrate_kbps
    }

    /// Panics if either index is out of range.
    pub fn segment(&self, chunk: usize, rep: u32) -> SegmentInfo {
        self.segments[chunk][rep as usize - 1]
    }

    /// Size of a chunk encoded at the nominal ladder bitrate.
    pub fn nominal_size_bits(&self, rep: u32) -> f64 {
        self.bitrate_kbps(rep) * 1000.0 * self.segment_duration_s
    }

    /// Actual bitrate of one segment in kb/s (size over duration).
    pub fn actual_bitrate_kbps(&self, chunk: usize, rep: u32) -> f64 {
        self.segment(chunk, rep).size_bits as f64 / self.segment_duration_s / 1000.0
    }

    pub fn from_json(text: &str) -> Result<Self, MediaError> {
        let raw: RawManifest = serde_json::from_str(text).map_err(|e| MediaError::Schema(e.to_string()))?;
        Self::new(raw.segment_duration_s, raw.ladder, raw.segments)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization cannot fail")
    }
}

impl<'de> Deserialize<'de> for Manifest {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawManifest::deserialize(deserializer)?;
        Manifest::new(raw.segment_duration_s, raw.ladder, raw.segments).map_err(serde::de::Error::custom)
    }
}

/// Parses a manifest document (JSON, see `docs/formats.md`).
pub fn parse_manifest(text: &str) -> Result<Manifest, MediaError> {
    Manifest::from_json(text)
}

/// Mean actual bitrate, in kb/s, of the segments picked by `choices`.
///
/// `choices[k]` is the 1-based representation chosen for segment `k`.
pub fn average_bitrate(manifest: &Manifest, choices: &[u32]) -> Result<f64, MediaError> {
    if choices.is_empty() {
        return Err(MediaError::EmptyChoices);
    }
    if choices.len() > manifest.segment_count() {
        return Err(MediaError::TooManyChoices {
            choices: choices.len(),
            segments: manifest.segment_count(),
        });
    }
    let mut total = 0.0;
    for (k, &rep) in choices.iter().enumerate() {
        if !manifest.is_valid_rep(rep) {
            return Err(MediaError::IndexOutOfRange(rep));
        }
        total += manifest.actual_bitrate_kbps(k, rep);
    }
    Ok(total / choices.len() as f64)
}
