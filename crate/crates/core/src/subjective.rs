//! Post-processing of subjective ratings and per-viewer analysis.
//!
//! Raw 0-100 ratings become per-subject, per-session Z-scores; unreliable
//! subjects are screened out; a per-day linear map learnt on anchor videos
//! turns mean Z-scores into MOS. Per-viewer sensitivities compare a
//! subject's mean rating on two contrasting video sets.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::SessionRecord;

#[derive(Debug, Error)]
pub enum SubjectiveError {
    #[error("subject {subject} has fewer than two ratings in session {session}")]
    TooFewRatings { subject: String, session: String },
    #[error("subject {subject} rated every video of session {session} identically")]
    ZeroSpread { subject: String, session: String },
    #[error("day {day} has {got} anchor videos, need at least 2")]
    TooFewAnchors { day: String, got: usize },
    #[error("anchor video {0} does not appear in the ratings")]
    UnknownAnchor(String),
    #[error("set holds {got} rated videos, need at least {needed}")]
    UndersizedSet { needed: usize, got: usize },
    #[error("inconsistent ratings: {0}")]
    Inconsistent(String),
}

/// One line of a ratings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRow {
    pub subject_id: String,
    pub video_id: String,
    pub session_id: String,
    pub day: String,
    pub device: String,
    pub score: f64,
}

/// Subjects × videos ratings with their bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsMatrix {
    pub subjects: Vec<String>,
    pub videos: Vec<String>,
    /// `scores[subject][video]`, `None` where unrated.
    pub scores: Vec<Vec<Option<f64>>>,
    /// Session of each video.
    pub session_of: Vec<String>,
    /// Experiment day of each session.
    pub day_of_session: BTreeMap<String, String>,
    /// Viewing device of each subject.
    pub device_of: Vec<String>,
    /// Fraction of stalls each subject flagged correctly, when known.
    pub keystroke_accuracy: Vec<Option<f64>>,
}

impl RatingsMatrix {
    /// Builds the matrix, checking that every video belongs to one session,
    /// every session to one day and every subject to one device.
    pub fn from_rows(rows: &[RatingRow]) -> Result<Self, SubjectiveError> {
        let mut subjects: Vec<String> = Vec::new();
        let mut videos: Vec<String> = Vec::new();
        let mut s_idx: HashMap<&str, usize> = HashMap::new();
        let mut v_idx: HashMap<&str, usize> = HashMap::new();
        let mut session_of: Vec<String> = Vec::new();
        let mut device_of: Vec<String> = Vec::new();
        let mut day_of_session: BTreeMap<String, String> = BTreeMap::new();
        for r in rows {
            if !(0.0..=100.0).contains(&r.score) {
                return Err(SubjectiveError::Inconsistent(format!(
                    "score {} for {}/{} is outside [0, 100]",
                    r.score, r.subject_id, r.video_id
                )));
            }
            let s = *s_idx.entry(&r.subject_id).or_insert_with(|| {
                subjects.push(r.subject_id.clone());
                device_of.push(r.device.clone());
                subjects.len() - 1
            });
            if device_of[s] != r.device {
                return Err(SubjectiveError::Inconsistent(format!(
                    "subject {} uses two devices",
                    r.subject_id
                )));
            }
            let v = *v_idx.entry(&r.video_id).or_insert_with(|| {
                videos.push(r.video_id.clone());
                session_of.push(r.session_id.clone());
                videos.len() - 1
            });
            if session_of[v] != r.session_id {
                return Err(SubjectiveError::Inconsistent(format!(
                    "video {} appears in two sessions",
                    r.video_id
                )));
            }
            let day = day_of_session
                .entry(r.session_id.clone())
                .or_insert_with(|| r.day.clone());
            if *day != r.day {
                return Err(SubjectiveError::Inconsistent(format!(
                    "session {} spans two days",
                    r.session_id
                )));
            }
        }
        let mut scores = vec![vec![None; videos.len()]; subjects.len()];
        for r in rows {
            let cell = &mut scores[s_idx[r.subject_id.as_str()]][v_idx[r.video_id.as_str()]];
            if cell.is_some() {
                return Err(SubjectiveError::Inconsistent(format!(
                    "{} rated {} twice",
                    r.subject_id, r.video_id
                )));
            }
            *cell = Some(r.score);
        }
        let n = subjects.len();
        Ok(Self {
            subjects,
            videos,
            scores,
            session_of,
            day_of_session,
            device_of,
            keystroke_accuracy: vec![None; n],
        })
    }

    pub fn video_index(&self, video_id: &str) -> Option<usize> {
        self.videos.iter().position(|v| v == video_id)
    }

    pub fn subject_index(&self, subject_id: &str) -> Option<usize> {
        self.subjects.iter().position(|s| s == subject_id)
    }

    /// Keeps only the listed subjects, in the given order.
    pub fn retain_subjects(&self, keep: &[usize]) -> Self {
        Self {
            subjects: keep.iter().map(|&i| self.subjects[i].clone()).collect(),
            videos: self.videos.clone(),
            scores: keep.iter().map(|&i| self.scores[i].clone()).collect(),
            session_of: self.session_of.clone(),
            day_of_session: self.day_of_session.clone(),
            device_of: keep.iter().map(|&i| self.device_of[i].clone()).collect(),
            keystroke_accuracy: keep.iter().map(|&i| self.keystroke_accuracy[i]).collect(),
        }
    }

    /// Mean over subjects of each video's present scores.
    pub fn video_means(&self) -> Vec<Option<f64>> {
        (0..self.videos.len())
            .map(|v| {
                let xs: Vec<f64> = self.scores.iter().filter_map(|row| row[v]).collect();
                (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
            })
            .collect()
    }

    fn sessions(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (v, s) in self.session_of.iter().enumerate() {
            out.entry(s.as_str()).or_default().push(v);
        }
        out
    }
}

/// Per subject and session: `(x - mean) / std` with the sample standard
/// deviation.
pub fn z_normalize(matrix: &RatingsMatrix) -> Result<RatingsMatrix, SubjectiveError> {
    let mut out = matrix.clone();
    let sessions = matrix.sessions();
    for (s, row) in matrix.scores.iter().enumerate() {
        for (session, vids) in &sessions {
            let xs: Vec<f64> = vids.iter().filter_map(|&v| row[v]).collect();
            if xs.is_empty() {
                continue;
            }
            if xs.len() < 2 {
                return Err(SubjectiveError::TooFewRatings {
                    subject: matrix.subjects[s].clone(),
                    session: session.to_string(),
                });
            }
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            if var == 0.0 {
                return Err(SubjectiveError::ZeroSpread {
                    subject: matrix.subjects[s].clone(),
                    session: session.to_string(),
                });
            }
            let sd = var.sqrt();
            for &v in vids {
                if let Some(x) = row[v] {
                    out.scores[s][v] = Some((x - mean) / sd);
                }
            }
        }
    }
    Ok(out)
}

/// Keystroke tolerance: a flag within this many seconds of a true stall
/// onset counts as correct.
pub const KEYSTROKE_TOLERANCE_S: f64 = 2.0;

/// Matches keystrokes to true stall onsets one-to-one within `tolerance_s`,
/// earliest first. Returns the number of onsets matched.
pub fn matched_onsets(onsets_s: &[f64], keystrokes_s: &[f64], tolerance_s: f64) -> usize {
    let mut keys: Vec<f64> = keystrokes_s.to_vec();
    keys.sort_by(f64::total_cmp);
    let mut used = vec![false; keys.len()];
    let mut onsets = onsets_s.to_vec();
    onsets.sort_by(f64::total_cmp);
    let mut hits = 0;
    for t in onsets {
        if let Some(k) = (0..keys.len()).find(|&k| !used[k] && (keys[k] - t).abs() <= tolerance_s) {
            used[k] = true;
            hits += 1;
        }
    }
    hits
}

/// Fraction of true stall onsets flagged in time, pooled over videos.
/// `None` when the subject saw no stalls.
pub fn keystroke_accuracy(per_video: &[(Vec<f64>, Vec<f64>)], tolerance_s: f64) -> Option<f64> {
    let total: usize = per_video.iter().map(|(o, _)| o.len()).sum();
    if total == 0 {
        return None;
    }
    let hit: usize = per_video.iter().map(|(o, k)| matched_onsets(o, k, tolerance_s)).sum();
    Some(hit as f64 / total as f64)
}

/// Subjects whose keystroke accuracy is at least `1 - threshold`.
/// Subjects without a recorded accuracy are kept.
pub fn reject_auxiliary(matrix: &RatingsMatrix, threshold: f64) -> Vec<usize> {
    let floor = 1.0 - threshold;
    (0..matrix.subjects.len())
        .filter(|&s| matrix.keystroke_accuracy[s].is_none_or(|a| a >= floor - 1e-12))
        .collect()
}

/// Per-subject counts from the screening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bt500Counts {
    pub above: usize,
    pub below: usize,
    pub rated: usize,
    pub rejected: bool,
}

/// Kurtosis-conditioned outlier screening, one pass over the panel.
///
/// For each video the bound is 2σ when the score kurtosis lies in
/// [2, 4] and √20·σ otherwise. A subject is rejected when more than 5% of
/// their ratings fall outside the bounds and the excursions are not
/// predominantly on one side (|P − Q| / (P + Q) < 0.3).
pub fn bt500_screen(matrix: &RatingsMatrix) -> Vec<Bt500Counts> {
    let n_s = matrix.subjects.len();
    let mut counts = vec![
        Bt500Counts {
            above: 0,
            below: 0,
            rated: 0,
            rejected: false,
        };
        n_s
    ];
    for v in 0..matrix.videos.len() {
        let xs: Vec<(usize, f64)> = (0..n_s).filter_map(|s| matrix.scores[s][v].map(|x| (s, x))).collect();
        for &(s, _) in &xs {
            counts[s].rated += 1;
        }
        if xs.len() < 2 {
            continue;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().map(|p| p.1).sum::<f64>() / n;
        let m2 = xs.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n;
        let m4 = xs.iter().map(|p| (p.1 - mean).powi(4)).sum::<f64>() / n;
        if m2 == 0.0 {
            continue;
        }
        let kurtosis = m4 / (m2 * m2);
        let sd = (xs.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let bound = if (2.0..=4.0).contains(&kurtosis) {
            2.0 * sd
        } else {
            20f64.sqrt() * sd
        };
        for &(s, x) in &xs {
            if x >= mean + bound {
                counts[s].above += 1;
            }
            if x <= mean - bound {
                counts[s].below += 1;
            }
        }
    }
    for c in &mut counts {
        let pq = (c.above + c.below) as f64;
        c.rejected = c.rated > 0 && pq / c.rated as f64 > 0.05 && (c.above as f64 - c.below as f64).abs() / pq < 0.3;
    }
    counts
}

/// Subjects kept by [`bt500_screen`]. Fewer than three subjects are all
/// kept.
pub fn reject_bt500(matrix: &RatingsMatrix) -> Vec<usize> {
    if matrix.subjects.len() < 3 {
        return (0..matrix.subjects.len()).collect();
    }
    bt500_screen(matrix)
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.rejected)
        .map(|(i, _)| i)
        .collect()
}

/// A video of the realignment experiment and the score it received there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub video_id: String,
    pub mos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realignment {
    /// `(slope, intercept)` per day.
    pub mappings: BTreeMap<String, (f64, f64)>,
    /// Realigned MOS per video, in matrix order; `None` for unrated videos
    /// or days without a mapping.
    pub mos: Vec<Option<f64>>,
}

/// Least-squares line through `(x, y)`.
fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let a = sxy / sxx;
    Some((a, my - a * mx))
}

/// Learns `MOS = a·z̄ + b` per day from the anchors, where `z̄` is an
/// anchor's mean Z-score in its original session, and maps every video.
pub fn realign(z_matrix: &RatingsMatrix, anchors: &[Anchor]) -> Result<Realignment, SubjectiveError> {
    let means = z_matrix.video_means();
    let mut per_day: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for a in anchors {
        let v = z_matrix
            .video_index(&a.video_id)
            .ok_or_else(|| SubjectiveError::UnknownAnchor(a.video_id.clone()))?;
        let z = means[v].ok_or_else(|| SubjectiveError::UnknownAnchor(a.video_id.clone()))?;
        let day = z_matrix.day_of_session[&z_matrix.session_of[v]].clone();
        per_day.entry(day).or_default().push((z, a.mos));
    }
    let mut mappings = BTreeMap::new();
    for (day, pts) in &per_day {
        let line = (pts.len() >= 2).then(|| fit_line(pts)).flatten();
        match line {
            Some(l) => {
                mappings.insert(day.clone(), l);
            }
            None => {
                return Err(SubjectiveError::TooFewAnchors {
                    day: day.clone(),
                    got: pts.len(),
                })
            }
        }
    }
    let mos = means
        .iter()
        .enumerate()
        .map(|(v, z)| {
            let day = &z_matrix.day_of_session[&z_matrix.session_of[v]];
            match (z, mappings.get(day)) {
                (Some(z), Some((a, b))) => Some(a * z + b),
                _ => None,
            }
        })
        .collect();
    Ok(Realignment { mappings, mos })
}

/// Screening stages applied before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreeningConfig {
    /// Subjects flagging fewer than `1 - threshold` of the stalls are removed.
    pub auxiliary_threshold: f64,
    pub bt500: bool,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            auxiliary_threshold: 0.10,
            bt500: true,
        }
    }
}

/// Outcome of [`process_panel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelResult {
    /// Raw ratings of the kept subjects.
    pub kept: RatingsMatrix,
    pub rejected_auxiliary: Vec<String>,
    pub rejected_bt500: Vec<String>,
    /// Per-day `(slope, intercept)`; empty without anchors.
    pub mappings: BTreeMap<String, (f64, f64)>,
    /// Per video in matrix order: realigned MOS when anchors are given,
    /// otherwise the mean raw score of the kept subjects.
    pub mos: Vec<Option<f64>>,
}

/// Auxiliary rejection, then BT.500 screening, then Z-scores and the
/// per-day realignment.
pub fn process_panel(
    matrix: &RatingsMatrix,
    anchors: &[Anchor],
    config: &ScreeningConfig,
) -> Result<PanelResult, SubjectiveError> {
    let names = |m: &RatingsMatrix, keep: &[usize]| -> Vec<String> {
        (0..m.subjects.len())
            .filter(|i| !keep.contains(i))
            .map(|i| m.subjects[i].clone())
            .collect()
    };
    let keep = reject_auxiliary(matrix, config.auxiliary_threshold);
    let rejected_auxiliary = names(matrix, &keep);
    let after_aux = matrix.retain_subjects(&keep);
    let keep = if config.bt500 {
        reject_bt500(&after_aux)
    } else {
        (0..after_aux.subjects.len()).collect()
    };
    let rejected_bt500 = names(&after_aux, &keep);
    let kept = after_aux.retain_subjects(&keep);
    let (mappings, mos) = if anchors.is_empty() {
        (BTreeMap::new(), kept.video_means())
    } else {
        let r = realign(&z_normalize(&kept)?, anchors)?;
        (r.mappings, r.mos)
    };
    Ok(PanelResult {
        kept,
        rejected_auxiliary,
        rejected_bt500,
        mappings,
        mos,
    })
}

/// Summary of a test video used to build the analysis sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub mean_quality: f64,
    pub quality_std: f64,
    pub total_stall_s: f64,
    pub longest_stall_s: f64,
    pub first_quality: f64,
    pub last_quality: f64,
}

impl VideoMeta {
    pub fn from_record(record: &SessionRecord) -> Self {
        Self {
            mean_quality: record.mean_quality(),
            quality_std: record.quality_std(),
            total_stall_s: record.total_stall_s(),
            longest_stall_s: record.stalls.iter().map(|s| s.duration_s).fold(0.0, f64::max),
            first_quality: record.qualities[0],
            last_quality: *record.qualities.last().expect("records are non-empty"),
        }
    }
}

/// Thresholds of the set constructions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionFilter {
    /// Target mean quality and tolerance for the rebuffering and
    /// adaptation sets.
    pub centre_quality: f64,
    pub centre_tolerance: f64,
    /// Quality std above which a video counts as varying.
    pub std_limit: f64,
    /// A stall longer than this counts as a rebuffering event.
    pub stall_limit_s: f64,
    /// Mean quality splitting the presentation-quality sets.
    pub quality_split: f64,
    /// Threshold for a degraded first or last segment.
    pub edge_quality: f64,
    /// Target mean quality and tolerance for the primacy / recency sets.
    pub edge_centre_quality: f64,
    pub edge_centre_tolerance: f64,
}

impl Default for PartitionFilter {
    fn default() -> Self {
        Self {
            centre_quality: 80.0,
            centre_tolerance: 10.0,
            std_limit: 10.0,
            stall_limit_s: 1.0,
            quality_split: 60.0,
            edge_quality: 70.0,
            edge_centre_quality: 85.0,
            edge_centre_tolerance: 10.0,
        }
    }
}

/// Video indices of the contrasting sets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Partitions {
    /// No rebuffering.
    pub rebuffer_free: Vec<usize>,
    /// A stall longer than the limit.
    pub rebuffered: Vec<usize>,
    pub high_quality: Vec<usize>,
    pub low_quality: Vec<usize>,
    pub adapting: Vec<usize>,
    pub steady: Vec<usize>,
    pub first_degraded: Vec<usize>,
    pub last_degraded: Vec<usize>,
}

pub fn partition_sessions(videos: &[VideoMeta], f: &PartitionFilter) -> Partitions {
    let mut p = Partitions::default();
    for (i, m) in videos.iter().enumerate() {
        let centred = (m.mean_quality - f.centre_quality).abs() <= f.centre_tolerance;
        let steady = m.quality_std <= f.std_limit;
        let no_stall = m.total_stall_s == 0.0;
        if centred && steady {
            if no_stall {
                p.rebuffer_free.push(i);
            } else if m.longest_stall_s > f.stall_limit_s {
                p.rebuffered.push(i);
            }
        }
        if m.longest_stall_s <= f.stall_limit_s && steady {
            if m.mean_quality > f.quality_split {
                p.high_quality.push(i);
            } else {
                p.low_quality.push(i);
            }
        }
        if no_stall && centred {
            if steady {
                p.steady.push(i);
            } else {
                p.adapting.push(i);
            }
        }
        let edge_centred = (m.mean_quality - f.edge_centre_quality).abs() <= f.edge_centre_tolerance;
        if no_stall && steady && edge_centred {
            let first_low = m.first_quality < f.edge_quality;
            let last_low = m.last_quality < f.edge_quality;
            if first_low && !last_low {
                p.first_degraded.push(i);
            } else if last_low && !first_low {
                p.last_degraded.push(i);
            }
        }
    }
    p
}

/// Mean of `ratings` over `set_a` minus the mean over `set_b`, skipping
/// unrated videos. Both sets must hold at least `min_size` ratings.
pub fn sensitivity(
    ratings: &[Option<f64>],
    set_a: &[usize],
    set_b: &[usize],
    min_size: usize,
) -> Result<f64, SubjectiveError> {
    let mean = |set: &[usize]| -> Result<f64, SubjectiveError> {
        let xs: Vec<f64> = set.iter().filter_map(|&v| ratings[v]).collect();
        if xs.len() < min_size.max(1) {
            return Err(SubjectiveError::UndersizedSet {
                needed: min_size.max(1),
                got: xs.len(),
            });
        }
        Ok(xs.iter().sum::<f64>() / xs.len() as f64)
    };
    Ok(mean(set_a)? - mean(set_b)?)
}

/// Smallest set size behind a reported sensitivity.
pub const MIN_SET_SIZE: usize = 30;

/// Sensitivity to rebuffering: rebuffer-free minus rebuffered.
pub fn sensitivity_rebuffering(ratings: &[Option<f64>], p: &Partitions) -> Result<f64, SubjectiveError> {
    sensitivity(ratings, &p.rebuffer_free, &p.rebuffered, MIN_SET_SIZE)
}

/// Sensitivity to presentation quality: high minus low quality.
pub fn sensitivity_quality(ratings: &[Option<f64>], p: &Partitions) -> Result<f64, SubjectiveError> {
    sensitivity(ratings, &p.high_quality, &p.low_quality, MIN_SET_SIZE)
}

/// Sensitivity to adaptation: adapting minus steady.
pub fn sensitivity_adaptation(ratings: &[Option<f64>], p: &Partitions) -> Result<f64, SubjectiveError> {
    sensitivity(ratings, &p.adapting, &p.steady, MIN_SET_SIZE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub subject_id: String,
    pub s_r: Option<f64>,
    pub s_q: Option<f64>,
    pub s_a: Option<f64>,
    /// Mean on first-degraded minus mean on last-degraded videos; positive
    /// when the end of a video weighs more. No equation defines this one,
    /// hence the flag in [`SensitivityReport`].
    pub recency_minus_primacy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub rows: Vec<SensitivityRow>,
    /// Sizes of the video sets (before per-subject missing ratings).
    pub set_sizes: BTreeMap<String, usize>,
    /// Metrics defined by analogy rather than by a published formula.
    pub underspecified: Vec<String>,
}

/// All sensitivities for every subject; undersized sets yield `None`.
pub fn sensitivity_report(matrix: &RatingsMatrix, p: &Partitions, min_size: usize) -> SensitivityReport {
    let rows = matrix
        .subjects
        .iter()
        .zip(&matrix.scores)
        .map(|(id, r)| SensitivityRow {
            subject_id: id.clone(),
            s_r: sensitivity(r, &p.rebuffer_free, &p.rebuffered, min_size).ok(),
            s_q: sensitivity(r, &p.high_quality, &p.low_quality, min_size).ok(),
            s_a: sensitivity(r, &p.adapting, &p.steady, min_size).ok(),
            recency_minus_primacy: sensitivity(r, &p.first_degraded, &p.last_degraded, min_size).ok(),
        })
        .collect();
    let set_sizes = [
        ("rebuffer_free", p.rebuffer_free.len()),
        ("rebuffered", p.rebuffered.len()),
        ("high_quality", p.high_quality.len()),
        ("low_quality", p.low_quality.len()),
        ("adapting", p.adapting.len()),
        ("steady", p.steady.len()),
        ("first_degraded", p.first_degraded.len()),
        ("last_degraded", p.last_degraded.len()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    SensitivityReport {
        rows,
        set_sizes,
        underspecified: vec!["recency_minus_primacy".into()],
    }
}

/// Per device: each subject's mean rating, sorted, with empirical CDF k/n.
pub fn personal_mean_cdf(matrix: &RatingsMatrix) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut by_device: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (s, row) in matrix.scores.iter().enumerate() {
        let xs: Vec<f64> = row.iter().flatten().copied().collect();
        if xs.is_empty() {
            continue;
        }
        by_device
            .entry(matrix.device_of[s].clone())
            .or_default()
            .push(xs.iter().sum::<f64>() / xs.len() as f64);
    }
    by_device
        .into_iter()
        .map(|(d, mut means)| {
            means.sort_by(f64::total_cmp);
            let n = means.len() as f64;
            let cdf = means
                .into_iter()
                .enumerate()
                .map(|(k, m)| (m, (k + 1) as f64 / n))
                .collect();
            (d, cdf)
        })
        .collect()
}
