//! `traces ingest | window | filter`.

use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use sqoe::nettrace::{filter_traces, parse_trace, window_traces, Trace, TraceFormat};

use crate::config::Experiment;
use crate::output::{file_safe, json_bytes, read_text, write_atomic, write_rows, Format};
use crate::{Outcome, TraceAction, TraceInput};

#[derive(Serialize)]
struct IndexRow {
    source: String,
    trace: String,
    status: &'static str,
    duration_s: Option<f64>,
    mean_kbps: Option<f64>,
    error: String,
}

fn load(path: &Path, format: TraceFormat) -> Result<Trace, String> {
    read_text(path, "trace")
        .map_err(|e| format!("{e:#}"))
        .and_then(|t| parse_trace(&t, format).map_err(|e| e.to_string()))
}

fn save(exp: &Experiment, name: &str, trace: &Trace, format: Format) -> anyhow::Result<()> {
    let bytes = match format {
        Format::Csv => trace.to_pairs_text().into_bytes(),
        Format::Json => json_bytes(trace)?,
    };
    write_atomic(&exp.out.join(format!("{}.{}", file_safe(name), format.ext())), &bytes)
}

pub fn run(exp: &Experiment, action: TraceAction, format: Format) -> anyhow::Result<Outcome> {
    let input: &TraceInput = match &action {
        TraceAction::Ingest(i) => i,
        TraceAction::Window { input, .. } | TraceAction::Filter { input, .. } => input,
    };
    let trace_format: TraceFormat = input.trace_format.parse().context("--trace-format")?;
    let mut index = Vec::new();
    for path in &input.files {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let row = |trace: &str, status, t: Option<&Trace>, error: String| IndexRow {
            source: path.display().to_string(),
            trace: trace.to_string(),
            status,
            duration_s: t.map(Trace::duration_s),
            mean_kbps: t.map(Trace::mean_kbps),
            error,
        };
        let trace = match load(path, trace_format) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                index.push(row(&stem, "error", None, e));
                continue;
            }
        };
        match &action {
            TraceAction::Ingest(_) => {
                save(exp, &stem, &trace, format)?;
                index.push(row(&stem, "ok", Some(&trace), String::new()));
            }
            TraceAction::Window { window, stride, .. } => {
                match window_traces(&trace, *window, stride.unwrap_or(*window)) {
                    Ok(windows) => {
                        for (k, w) in windows.iter().enumerate() {
                            let name = format!("{stem}_{k:04}");
                            save(exp, &name, w, format)?;
                            index.push(row(&name, "ok", Some(w), String::new()));
                        }
                    }
                    Err(e) => index.push(row(&stem, "error", None, e.to_string())),
                }
            }
            TraceAction::Filter { min_avg, .. } => {
                if filter_traces(vec![trace.clone()], *min_avg).is_empty() {
                    index.push(row(&stem, "dropped", Some(&trace), String::new()));
                } else {
                    save(exp, &stem, &trace, format)?;
                    index.push(row(&stem, "ok", Some(&trace), String::new()));
                }
            }
        }
    }
    let failures = index.iter().filter(|r| r.status == "error").count();
    let kept = index.iter().filter(|r| r.status == "ok").count();
    let path = write_rows(&exp.out, "index", &index, Format::Csv)?;
    println!("{kept} traces written, {failures} failed; index at {}", path.display());
    Ok(Outcome { failures })
}
