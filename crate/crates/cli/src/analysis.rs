//! `qoe`, `subjective` and `stats`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use sqoe::qoe::score_batch;
use sqoe::simulator::SessionRecord;
use sqoe::stats::{build_significance_matrix, correlation_report, SignificanceTest};
use sqoe::subjective::{
    keystroke_accuracy, partition_sessions, personal_mean_cdf, process_panel, sensitivity_report, Anchor, RatingRow,
    RatingsMatrix, VideoMeta, KEYSTROKE_TOLERANCE_S,
};

use crate::config::{Experiment, TestKind};
use crate::output::{json_bytes, read_csv, read_text, write_atomic, write_rows, Format};
use crate::Outcome;

/// Reads an id → record map. Records that fail to parse are returned as
/// errors so the caller can keep going.
fn read_records(path: &Path) -> anyhow::Result<BTreeMap<String, Result<SessionRecord, String>>> {
    let text = read_text(path, "records")?;
    let raw: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&text).with_context(|| format!("records {} must map ids to records", path.display()))?;
    Ok(raw
        .into_iter()
        .map(|(id, v)| {
            let r = serde_json::from_value::<SessionRecord>(v)
                .map_err(|e| e.to_string())
                .and_then(|r| r.validate().map(|_| r).map_err(|e| e.to_string()));
            (id, r)
        })
        .collect())
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    video_id: &'a str,
    model_id: &'a str,
    score: f64,
}

#[derive(Serialize)]
struct ErrorRow<'a> {
    video_id: &'a str,
    model_id: &'a str,
    error: String,
}

pub fn qoe(exp: &Experiment, records: Option<PathBuf>, format: Format) -> anyhow::Result<Outcome> {
    let path = match (records, &exp.config.records) {
        (Some(p), _) => p,
        (None, Some(p)) => exp.resolve(p),
        (None, None) => exp.out.join("records.json"),
    };
    let models = exp.models()?;
    let parsed = read_records(&path)?;
    let mut good = Vec::new();
    let mut errors = Vec::new();
    for (id, r) in &parsed {
        match r {
            Ok(r) => good.push((id.clone(), r.clone())),
            Err(e) => {
                for m in &models {
                    errors.push(ErrorRow {
                        video_id: id,
                        model_id: m.as_str(),
                        error: format!("invalid record: {e}"),
                    });
                }
            }
        }
    }
    let batch = score_batch(&good, &models, &exp.config.qoe);
    let mut rows = Vec::with_capacity(batch.len());
    for b in &batch {
        match &b.score {
            Ok(s) => rows.push(ScoreRow {
                video_id: &b.video_id,
                model_id: b.model_id.as_str(),
                score: *s,
            }),
            Err(e) => errors.push(ErrorRow {
                video_id: &b.video_id,
                model_id: b.model_id.as_str(),
                error: e.to_string(),
            }),
        }
    }
    let out = write_rows(&exp.out, "scores", &rows, format)?;
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("{} / {}: {}", e.video_id, e.model_id, e.error);
        }
        write_rows(&exp.out, "score_errors", &errors, format)?;
    }
    println!(
        "{} scores, {} failed; written to {}",
        rows.len(),
        errors.len(),
        out.display()
    );
    Ok(Outcome { failures: errors.len() })
}

#[derive(Deserialize)]
struct AccuracyRow {
    subject_id: String,
    accuracy: f64,
}

#[derive(Deserialize)]
struct KeystrokeRow {
    subject_id: String,
    video_id: String,
    time_s: f64,
}

#[derive(Serialize)]
struct MosRow<'a> {
    video_id: &'a str,
    mos: Option<f64>,
}

#[derive(Serialize)]
struct ScreeningRow<'a> {
    subject_id: &'a str,
    stage: &'static str,
}

#[derive(Serialize)]
struct MappingRow<'a> {
    day: &'a str,
    slope: f64,
    intercept: f64,
}

#[derive(Serialize)]
struct CdfRow<'a> {
    device: &'a str,
    personal_mean: f64,
    cdf: f64,
}

#[derive(Serialize)]
struct SetRow<'a> {
    set: &'a str,
    size: usize,
}

fn attach_accuracy(
    exp: &Experiment,
    matrix: &mut RatingsMatrix,
    records: Option<&BTreeMap<String, SessionRecord>>,
) -> anyhow::Result<()> {
    let cfg = &exp.config.subjective;
    if let Some(path) = exp.existing(cfg.accuracy.as_ref(), "keystroke accuracy")? {
        for row in read_csv::<AccuracyRow>(&path, "keystroke accuracy")? {
            let s = matrix
                .subject_index(&row.subject_id)
                .with_context(|| format!("{}: unknown subject {}", path.display(), row.subject_id))?;
            if !(0.0..=1.0).contains(&row.accuracy) {
                bail!("{}: accuracy {} outside [0, 1]", path.display(), row.accuracy);
            }
            matrix.keystroke_accuracy[s] = Some(row.accuracy);
        }
    }
    if let Some(path) = exp.existing(cfg.keystrokes.as_ref(), "keystrokes")? {
        let records = records.context("scoring keystrokes needs [subjective] records")?;
        let mut keys: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for row in read_csv::<KeystrokeRow>(&path, "keystrokes")? {
            keys.entry((row.subject_id, row.video_id)).or_default().push(row.time_s);
        }
        for (s, subject) in matrix.subjects.iter().enumerate() {
            let per_video: Vec<(Vec<f64>, Vec<f64>)> = matrix
                .videos
                .iter()
                .enumerate()
                .filter(|&(v, _)| matrix.scores[s][v].is_some())
                .filter_map(|(_, vid)| {
                    let onsets = records.get(vid)?.stall_onsets_s();
                    let k = keys.get(&(subject.clone(), vid.clone())).cloned().unwrap_or_default();
                    Some((onsets, k))
                })
                .collect();
            if let Some(a) = keystroke_accuracy(&per_video, KEYSTROKE_TOLERANCE_S) {
                matrix.keystroke_accuracy[s] = Some(a);
            }
        }
    }
    Ok(())
}

pub fn subjective(exp: &Experiment, format: Format) -> anyhow::Result<Outcome> {
    let cfg = &exp.config.subjective;
    let ratings_path = cfg.ratings.as_ref().context("[subjective] ratings is not set")?;
    let ratings_path = exp.resolve(ratings_path);
    if !ratings_path.is_file() {
        bail!("ratings file not found: {}", ratings_path.display());
    }
    let rows: Vec<RatingRow> = read_csv(&ratings_path, "ratings")?;
    let mut matrix = RatingsMatrix::from_rows(&rows).with_context(|| format!("ratings {}", ratings_path.display()))?;

    let records = match exp.existing(cfg.records.as_ref(), "records")? {
        Some(p) => {
            let mut ok = BTreeMap::new();
            for (id, r) in read_records(&p)? {
                ok.insert(
                    id.clone(),
                    r.map_err(|e| anyhow::anyhow!("{}: record {id}: {e}", p.display()))?,
                );
            }
            Some(ok)
        }
        None => None,
    };
    attach_accuracy(exp, &mut matrix, records.as_ref())?;
    let anchors: Vec<Anchor> = match exp.existing(cfg.anchors.as_ref(), "anchors")? {
        Some(p) => read_csv(&p, "anchors")?,
        None => Vec::new(),
    };

    let panel = process_panel(&matrix, &anchors, &cfg.screening)?;
    let out = &exp.out;
    let mos: Vec<MosRow> = panel
        .kept
        .videos
        .iter()
        .zip(&panel.mos)
        .map(|(v, m)| MosRow { video_id: v, mos: *m })
        .collect();
    write_rows(out, "mos", &mos, format)?;
    let screening: Vec<ScreeningRow> = panel
        .rejected_auxiliary
        .iter()
        .map(|s| ScreeningRow {
            subject_id: s,
            stage: "auxiliary",
        })
        .chain(panel.rejected_bt500.iter().map(|s| ScreeningRow {
            subject_id: s,
            stage: "bt500",
        }))
        .collect();
    write_rows(out, "rejected", &screening, format)?;
    let mappings: Vec<MappingRow> = panel
        .mappings
        .iter()
        .map(|(d, &(a, b))| MappingRow {
            day: d,
            slope: a,
            intercept: b,
        })
        .collect();
    write_rows(out, "mappings", &mappings, format)?;
    let cdf = personal_mean_cdf(&panel.kept);
    let cdf_rows: Vec<CdfRow> = cdf
        .iter()
        .flat_map(|(d, pts)| {
            pts.iter().map(move |&(m, c)| CdfRow {
                device: d,
                personal_mean: m,
                cdf: c,
            })
        })
        .collect();
    write_rows(out, "personal_mean_cdf", &cdf_rows, format)?;

    if let Some(records) = &records {
        let metas: Vec<VideoMeta> = panel
            .kept
            .videos
            .iter()
            .map(|v| {
                records
                    .get(v)
                    .map(VideoMeta::from_record)
                    .with_context(|| format!("no record for rated video {v}"))
            })
            .collect::<anyhow::Result<_>>()?;
        let parts = partition_sessions(&metas, &cfg.filter);
        let report = sensitivity_report(&panel.kept, &parts, cfg.min_set_size);
        write_rows(out, "sensitivity", &report.rows, format)?;
        let sets: Vec<SetRow> = report
            .set_sizes
            .iter()
            .map(|(k, &v)| SetRow { set: k, size: v })
            .collect();
        write_rows(out, "sets", &sets, format)?;
    }
    println!(
        "{} subjects kept ({} auxiliary, {} bt500 rejected), {} videos; outputs in {}",
        panel.kept.subjects.len(),
        panel.rejected_auxiliary.len(),
        panel.rejected_bt500.len(),
        panel.kept.videos.len(),
        out.display()
    );
    Ok(Outcome { failures: 0 })
}

#[derive(Deserialize)]
struct MethodScore {
    #[serde(alias = "video_id")]
    item_id: String,
    #[serde(alias = "model_id")]
    method: String,
    score: f64,
}

#[derive(Deserialize)]
struct ItemMos {
    #[serde(alias = "video_id")]
    item_id: String,
    mos: Option<f64>,
}

#[derive(Serialize)]
struct CorrelationRow<'a> {
    method: &'a str,
    plcc: Option<f64>,
    srcc: Option<f64>,
    krcc: Option<f64>,
    error: String,
}

pub fn stats(exp: &Experiment, format: Format) -> anyhow::Result<Outcome> {
    let cfg = &exp.config.stats;
    let scores_path = exp
        .existing(cfg.scores.as_ref(), "scores")?
        .context("[stats] scores is not set")?;
    let mut by_method: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for row in read_csv::<MethodScore>(&scores_path, "scores")? {
        if by_method
            .entry(row.method.clone())
            .or_default()
            .insert(row.item_id.clone(), row.score)
            .is_some()
        {
            bail!(
                "{}: item {} scored twice by {}",
                scores_path.display(),
                row.item_id,
                row.method
            );
        }
    }
    let mos: Option<BTreeMap<String, f64>> = match exp.existing(cfg.mos.as_ref(), "mos")? {
        Some(p) => Some(
            read_csv::<ItemMos>(&p, "mos")?
                .into_iter()
                .filter_map(|r| r.mos.map(|m| (r.item_id, m)))
                .collect(),
        ),
        None => None,
    };
    // Items every method scored (and that have a MOS, when given).
    let mut items: BTreeSet<&String> = by_method.values().flat_map(|m| m.keys()).collect();
    items.retain(|i| by_method.values().all(|m| m.contains_key(*i)));
    if let Some(mos) = &mos {
        items.retain(|i| mos.contains_key(*i));
    }
    if items.is_empty() {
        bail!("no item is scored by every method");
    }
    let methods: Vec<(String, Vec<f64>)> = by_method
        .iter()
        .map(|(name, s)| (name.clone(), items.iter().map(|i| s[*i]).collect()))
        .collect();
    let mos_vec: Option<Vec<f64>> = mos.as_ref().map(|m| items.iter().map(|i| m[*i]).collect());

    let mut failures = 0;
    if let Some(mos_vec) = &mos_vec {
        let rows: Vec<CorrelationRow> = methods
            .iter()
            .map(|(name, s)| match correlation_report(s, mos_vec) {
                Ok(r) => CorrelationRow {
                    method: name,
                    plcc: Some(r.plcc),
                    srcc: Some(r.srcc),
                    krcc: Some(r.krcc),
                    error: String::new(),
                },
                Err(e) => {
                    failures += 1;
                    eprintln!("correlation for {name} failed: {e}");
                    CorrelationRow {
                        method: name,
                        plcc: None,
                        srcc: None,
                        krcc: None,
                        error: e.to_string(),
                    }
                }
            })
            .collect();
        write_rows(&exp.out, "correlation", &rows, format)?;
    }

    let kind = cfg.test.unwrap_or(if mos_vec.is_some() {
        TestKind::FTest
    } else {
        TestKind::Wilcoxon
    });
    let test = match (kind, &mos_vec) {
        (TestKind::Wilcoxon, _) => SignificanceTest::Wilcoxon,
        (TestKind::FTest, Some(m)) => SignificanceTest::FTest { mos: m.clone() },
        (TestKind::FTest, None) => bail!("the F-test needs [stats] mos"),
    };
    let matrix = build_significance_matrix(&methods, &test, cfg.alpha).context("significance matrix")?;
    let path = exp.out.join(format!("significance.{}", format.ext()));
    match format {
        Format::Csv => write_atomic(&path, matrix.to_csv().as_bytes())?,
        Format::Json => write_atomic(&path, &json_bytes(&matrix)?)?,
    }
    write_atomic(&exp.out.join("significance.md"), matrix.to_markdown().as_bytes())?;
    println!(
        "{} methods over {} items; significance matrix at {}",
        methods.len(),
        items.len(),
        path.display()
    );
    Ok(Outcome { failures })
}
