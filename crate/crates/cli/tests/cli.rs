use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sqoe::qoe::{evaluate, ModelId, QoeParams};
use sqoe::simulator::{SessionRecord, Stall};
use sqoe::subjective::{process_panel, Anchor, RatingRow, RatingsMatrix, ScreeningConfig};

fn sqoe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqoe"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.deserialize().map(|row| row.unwrap()).collect()
}

/// Every file under `dir`, relative path → bytes.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

const ONE_CELL: &str = r#"
[[manifests]]
synthetic = { segments = 10 }
[[traces]]
name = "flat"
synthetic = { mean_kbps = 2000.0, duration_s = 60.0 }
[[policies]]
id = "rb"
"#;

#[test]
fn single_cell_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.toml"), ONE_CELL).unwrap();
    ok(&sqoe(
        dir.path(),
        &["--config", "exp.toml", "--out", "a", "--seed", "3", "simulate"],
    ));
    ok(&sqoe(
        dir.path(),
        &["--config", "exp.toml", "--out", "b", "--seed", "3", "simulate"],
    ));
    ok(&sqoe(
        dir.path(),
        &["--config", "exp.toml", "--out", "c", "--seed", "4", "simulate"],
    ));
    let a = snapshot(&dir.path().join("a"));
    assert_eq!(a, snapshot(&dir.path().join("b")));
    assert_ne!(a, snapshot(&dir.path().join("c")));
    assert_eq!(fs::read_dir(dir.path().join("a/logs")).unwrap().count(), 1);
    let rows = csv_rows(&dir.path().join("a/summary.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["status"], "ok");
    // Rerunning into the same directory overwrites in place.
    ok(&sqoe(
        dir.path(),
        &["--config", "exp.toml", "--out", "a", "--seed", "3", "simulate"],
    ));
    assert_eq!(a, snapshot(&dir.path().join("a")));
}

#[test]
fn full_grid_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = String::from("trace_grid_duration_s = 55.0\n");
    for _ in 0..5 {
        cfg.push_str("[[manifests]]\nsynthetic = { segments = 8 }\n");
    }
    cfg.push_str(
        r#"
[[policies]]
id = "rb"
[[policies]]
id = "bb"
[[policies]]
id = "rdos"
[[policies]]
id = "mpc_exact"
[[policies]]
id = "fastmpc"
binning = { tput_bins = 12, buffer_bins = 12 }
"#,
    );
    fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    ok(&sqoe(
        dir.path(),
        &["--config", "exp.toml", "--out", "o", "--jobs", "4", "simulate"],
    ));
    let rows = csv_rows(&dir.path().join("o/summary.csv"));
    assert_eq!(rows.len(), 225);
    assert!(rows.iter().all(|r| r["status"] == "ok"));
    let records: BTreeMap<String, SessionRecord> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/records.json")).unwrap()).unwrap();
    assert_eq!(records.len(), 225);
}

#[test]
fn bad_trace_fails_only_its_cells() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "1000\nnot-a-number\n").unwrap();
    fs::write(dir.path().join("good.txt"), "1500\n2500\n800\n3000\n").unwrap();
    let cfg = r#"
[[manifests]]
synthetic = { segments = 6 }
[[traces]]
path = "bad.txt"
format = "granular_1s"
[[traces]]
path = "good.txt"
format = "granular_1s"
[[policies]]
id = "rb"
[[policies]]
id = "bb"
"#;
    fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    let out = sqoe(dir.path(), &["--config", "exp.toml", "--out", "o", "simulate"]);
    assert_eq!(out.status.code(), Some(1));
    let rows = csv_rows(&dir.path().join("o/summary.csv"));
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let expected = if r["trace"] == "bad" { "error" } else { "ok" };
        assert_eq!(r["status"], expected, "{r:?}");
    }
    assert!(rows.iter().any(|r| r["error"].contains("bad.txt")));
}

#[test]
fn missing_files_are_named() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("exp.toml"),
        "[subjective]\nratings = \"nowhere/ratings.csv\"\n",
    )
    .unwrap();
    let out = sqoe(dir.path(), &["--config", "exp.toml", "subjective"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nowhere/ratings.csv"), "{err}");

    let out = sqoe(dir.path(), &["--config", "absent.toml", "simulate"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));
}

#[test]
fn mpc_table_default_and_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let out = sqoe(dir.path(), &["--out", "t", "mpc-table"]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("130000 entries (100 x 100 x 13)"), "{text}");
    assert!(text.contains("reload matches"));
    assert!(dir.path().join("t/mpc_table.bin").is_file());

    fs::write(dir.path().join("bad.toml"), "[binning]\ntput_bins = 0\n").unwrap();
    let out = sqoe(dir.path(), &["--config", "bad.toml", "--out", "t2", "mpc-table"]);
    assert_eq!(out.status.code(), Some(2));
}

fn sample_record(stall: f64) -> SessionRecord {
    let stalls = if stall > 0.0 {
        vec![Stall {
            position_s: 8.0,
            duration_s: stall,
        }]
    } else {
        vec![]
    };
    SessionRecord::new(
        4.0,
        vec![70.0, 55.0, 80.0, 85.0],
        vec![2000.0, 1200.0, 3000.0, 3500.0],
        stalls,
        1.0,
    )
    .unwrap()
    .with_min_bitrate(235.0)
}

#[test]
fn qoe_scores_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let records: BTreeMap<String, SessionRecord> = [
        ("clean".to_string(), sample_record(0.0)),
        ("stalled".to_string(), sample_record(2.5)),
    ]
    .into();
    fs::write(
        dir.path().join("records.json"),
        serde_json::to_string(&records).unwrap(),
    )
    .unwrap();
    ok(&sqoe(dir.path(), &["--out", "o", "qoe", "--records", "records.json"]));
    let rows = csv_rows(&dir.path().join("o/scores.csv"));
    assert_eq!(rows.len(), 2 * 9);
    let params = QoeParams::default();
    for r in rows {
        let model: ModelId = r["model_id"].parse().unwrap();
        let expected = evaluate(model, &records[&r["video_id"]], &params).unwrap().value;
        assert_eq!(r["score"].parse::<f64>().unwrap(), expected, "{r:?}");
    }
}

#[test]
fn external_model_stub() {
    let dir = tempfile::tempdir().unwrap();
    let records: BTreeMap<String, SessionRecord> = [
        ("a".to_string(), sample_record(0.0)),
        ("b".to_string(), sample_record(1.0)),
    ]
    .into();
    fs::write(
        dir.path().join("records.json"),
        serde_json::to_string(&records).unwrap(),
    )
    .unwrap();
    let cfg = r#"
records = "records.json"
models = ["videoatlas"]
[qoe.videoatlas]
command = ["sh", "-c", "cat > /dev/null; echo 3.5"]
"#;
    fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    ok(&sqoe(dir.path(), &["--config", "exp.toml", "--out", "o", "qoe"]));
    let rows = csv_rows(&dir.path().join("o/scores.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows
        .iter()
        .all(|r| r["score"] == "3.5" && r["model_id"] == "videoatlas"));
}

fn ratings_fixture() -> (Vec<RatingRow>, Vec<Anchor>) {
    let mut rows = Vec::new();
    for s in 0..12 {
        for v in 0..10 {
            let truth = 20.0 + 6.0 * v as f64;
            let score = if s == 0 {
                100.0 - truth
            } else {
                truth + ((s * 5 + v * 3) % 7) as f64 - 3.0
            };
            rows.push(RatingRow {
                subject_id: format!("s{s:02}"),
                video_id: format!("v{v}"),
                session_id: format!("x{}", v % 2),
                day: format!("d{}", v % 2),
                device: if s % 2 == 0 { "tv" } else { "phone" }.into(),
                score,
            });
        }
    }
    let anchors = ["v0", "v8", "v1", "v9"]
        .iter()
        .map(|v| Anchor {
            video_id: v.to_string(),
            mos: 20.0 + 6.0 * v[1..].parse::<f64>().unwrap(),
        })
        .collect();
    (rows, anchors)
}

#[test]
fn subjective_mos_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (rows, anchors) = ratings_fixture();
    let mut w = csv::Writer::from_path(dir.path().join("ratings.csv")).unwrap();
    rows.iter().for_each(|r| w.serialize(r).unwrap());
    w.flush().unwrap();
    let mut w = csv::Writer::from_path(dir.path().join("anchors.csv")).unwrap();
    anchors.iter().for_each(|a| w.serialize(a).unwrap());
    w.flush().unwrap();
    fs::write(dir.path().join("acc.csv"), "subject_id,accuracy\ns03,0.85\ns04,0.9\n").unwrap();
    let cfg = r#"
[subjective]
ratings = "ratings.csv"
anchors = "anchors.csv"
accuracy = "acc.csv"
"#;
    fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    ok(&sqoe(dir.path(), &["--config", "exp.toml", "--out", "o", "subjective"]));

    let mut m = RatingsMatrix::from_rows(&rows).unwrap();
    m.keystroke_accuracy[3] = Some(0.85);
    m.keystroke_accuracy[4] = Some(0.9);
    let lib = process_panel(&m, &anchors, &ScreeningConfig::default()).unwrap();
    let got = csv_rows(&dir.path().join("o/mos.csv"));
    assert_eq!(got.len(), lib.mos.len());
    for (row, (vid, mos)) in got.iter().zip(lib.kept.videos.iter().zip(&lib.mos)) {
        assert_eq!(&row["video_id"], vid);
        assert_eq!(row["mos"].parse::<f64>().unwrap(), mos.unwrap());
    }
    let rejected = csv_rows(&dir.path().join("o/rejected.csv"));
    let names: Vec<(&str, &str)> = rejected
        .iter()
        .map(|r| (r["subject_id"].as_str(), r["stage"].as_str()))
        .collect();
    assert!(names.contains(&("s03", "auxiliary")));
    assert!(!names.iter().any(|n| n.0 == "s04"));
    let cdf = csv_rows(&dir.path().join("o/personal_mean_cdf.csv"));
    assert_eq!(cdf.len(), lib.kept.subjects.len());
}

#[test]
fn stats_two_methods() {
    let dir = tempfile::tempdir().unwrap();
    let mut scores = String::from("item_id,method,score\n");
    let mut mos = String::from("item_id,mos\n");
    for i in 0..20 {
        let x = i as f64;
        scores.push_str(&format!("i{i},good,{}\n", 2.0 * x + (i % 3) as f64 * 0.1));
        scores.push_str(&format!("i{i},noisy,{}\n", x + ((i * 7) % 5) as f64 * 4.0));
        mos.push_str(&format!("i{i},{}\n", 10.0 + 4.0 * x));
    }
    fs::write(dir.path().join("scores.csv"), scores).unwrap();
    fs::write(dir.path().join("mos.csv"), mos).unwrap();
    fs::write(
        dir.path().join("exp.toml"),
        "[stats]\nscores = \"scores.csv\"\nmos = \"mos.csv\"\n",
    )
    .unwrap();
    ok(&sqoe(dir.path(), &["--config", "exp.toml", "--out", "o", "stats"]));
    let text = fs::read_to_string(dir.path().join("o/significance.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "method,good,noisy");
    assert!(lines[1].starts_with("good,-,"));
    assert!(lines[2].starts_with("noisy,") && lines[2].ends_with(",-"));
    let corr = csv_rows(&dir.path().join("o/correlation.csv"));
    assert_eq!(corr.len(), 2);
    assert!(dir.path().join("o/significance.md").is_file());
}

#[test]
fn traces_ingest_window_filter() {
    let dir = tempfile::tempdir().unwrap();
    let values: String = (0..20).map(|i| format!("{}\n", 1000 + 100 * i)).collect();
    fs::write(dir.path().join("fast.log"), values).unwrap();
    fs::write(dir.path().join("slow.log"), "100\n120\n90\n").unwrap();
    ok(&sqoe(
        dir.path(),
        &[
            "--out",
            "ing",
            "traces",
            "ingest",
            "--trace-format",
            "granular_5s",
            "fast.log",
            "slow.log",
        ],
    ));
    let index = csv_rows(&dir.path().join("ing/index.csv"));
    assert_eq!(index.len(), 2);
    assert_eq!(index[0]["duration_s"], "100.0");

    ok(&sqoe(
        dir.path(),
        &["--out", "win", "traces", "window", "--window", "40", "ing/fast.csv"],
    ));
    assert_eq!(csv_rows(&dir.path().join("win/index.csv")).len(), 2);
    assert!(dir.path().join("win/fast_0000.csv").is_file());

    ok(&sqoe(
        dir.path(),
        &["--out", "flt", "traces", "filter", "ing/fast.csv", "ing/slow.csv"],
    ));
    let index = csv_rows(&dir.path().join("flt/index.csv"));
    let status: Vec<&str> = index.iter().map(|r| r["status"].as_str()).collect();
    assert_eq!(status, ["ok", "dropped"]);
    assert!(!dir.path().join("flt/slow.csv").exists());
}
