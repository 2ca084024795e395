//! `simulate` and `mpc-table`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;

use sqoe::abr::{build_mpc_table, AbrPolicy, LookupTable, PolicyConfig};
use sqoe::media::{average_bitrate, ladder_default, Manifest, DEFAULT_SEGMENT_DURATION_S};
use sqoe::nettrace::Trace;
use sqoe::simulator::{run_session, to_record, SessionLog, SessionRecord};

use crate::config::Experiment;
use crate::output::{file_safe, json_bytes, write_atomic, write_rows, Format};
use crate::Outcome;

#[derive(Debug, Serialize)]
struct SummaryRow {
    cell_id: String,
    manifest: String,
    trace: String,
    policy: String,
    status: &'static str,
    avg_bitrate_kbps: Option<f64>,
    total_stall_s: Option<f64>,
    switch_magnitude_kbps: Option<f64>,
    startup_delay_s: Option<f64>,
    error: String,
}

type Shared = Arc<dyn AbrPolicy>;

/// One policy instance per distinct (ladder, segment length, policy), so a
/// FastMPC table is built once for every manifest sharing a ladder.
fn instantiate_all(
    exp: &Experiment,
    manifests: &[(String, Result<Manifest, String>)],
    policies: &[(String, PolicyConfig)],
) -> Vec<Vec<Result<Shared, String>>> {
    let key = |m: &Manifest, p: &PolicyConfig| {
        format!(
            "{}|{}|{}",
            serde_json::to_string(m.ladder()).expect("ladder serializes"),
            m.segment_duration_s(),
            serde_json::to_string(p).expect("policy serializes")
        )
    };
    let mut unique: BTreeMap<String, (&Manifest, &PolicyConfig)> = BTreeMap::new();
    for (_, m) in manifests {
        if let Ok(m) = m {
            for (_, p) in policies {
                unique.entry(key(m, p)).or_insert((m, p));
            }
        }
    }
    let player = &exp.config.player;
    let built: HashMap<String, Result<Shared, String>> = unique
        .into_par_iter()
        .map(|(k, (m, p))| {
            let policy = p
                .instantiate(m, player.channel.rtt_s, player.max_buffer_s)
                .map(Shared::from)
                .map_err(|e| e.to_string());
            (k, policy)
        })
        .collect();
    manifests
        .iter()
        .map(|(_, m)| {
            policies
                .iter()
                .map(|(_, p)| match m {
                    Ok(m) => built[&key(m, p)].clone(),
                    Err(e) => Err(format!("manifest: {e}")),
                })
                .collect()
        })
        .collect()
}

fn run_cell(
    exp: &Experiment,
    manifest: &Result<Manifest, String>,
    trace: &Result<Trace, String>,
    policy: &Result<Shared, String>,
) -> Result<(SessionLog, SessionRecord, f64), String> {
    let manifest = manifest.as_ref().map_err(|e| format!("manifest: {e}"))?;
    let trace = trace.as_ref().map_err(|e| format!("trace: {e}"))?;
    let policy = policy.as_ref().map_err(|e| format!("policy: {e}"))?;
    let player = &exp.config.player;
    let log = run_session(manifest, trace, policy.as_ref(), player).map_err(|e| e.to_string())?;
    let record = to_record(&log, manifest, player);
    let avg = average_bitrate(manifest, &log.choices).map_err(|e| e.to_string())?;
    Ok((log, record, avg))
}

pub fn run(exp: &Experiment, format: Format) -> anyhow::Result<Outcome> {
    let manifests = exp.manifests();
    let traces = exp.traces();
    let policies = exp.policies();
    if traces.is_empty() {
        bail!("no traces configured: add [[traces]] entries or trace_grid_duration_s");
    }
    let instances = instantiate_all(exp, &manifests, &policies);

    let (nt, np) = (traces.len(), policies.len());
    let cells: Vec<(usize, usize, usize)> = (0..manifests.len())
        .flat_map(|m| (0..nt).flat_map(move |t| (0..np).map(move |p| (m, t, p))))
        .collect();
    let logs_dir = exp.out.join("logs");
    let records_dir = exp.out.join("records");

    let results: Vec<(SummaryRow, Option<SessionRecord>)> = cells
        .into_par_iter()
        .map(|(m, t, p)| -> anyhow::Result<_> {
            let (mname, tname, pname) = (&manifests[m].0, &traces[t].0, &policies[p].0);
            let cell_id = format!("{mname}__{tname}__{pname}");
            let mut row = SummaryRow {
                cell_id: cell_id.clone(),
                manifest: mname.clone(),
                trace: tname.clone(),
                policy: pname.clone(),
                status: "ok",
                avg_bitrate_kbps: None,
                total_stall_s: None,
                switch_magnitude_kbps: None,
                startup_delay_s: None,
                error: String::new(),
            };
            match run_cell(exp, &manifests[m].1, &traces[t].1, &instances[m][p]) {
                Ok((log, record, avg)) => {
                    let manifest = manifests[m].1.as_ref().expect("cell ran");
                    row.avg_bitrate_kbps = Some(avg);
                    row.total_stall_s = Some(log.total_stall_s());
                    row.switch_magnitude_kbps = Some(log.switch_magnitude_kbps(manifest));
                    row.startup_delay_s = Some(log.startup_delay_s);
                    let stem = file_safe(&cell_id);
                    let log_bytes = match format {
                        Format::Csv => log.to_csv().into_bytes(),
                        Format::Json => json_bytes(&log)?,
                    };
                    write_atomic(&logs_dir.join(format!("{stem}.{}", format.ext())), &log_bytes)?;
                    write_atomic(&records_dir.join(format!("{stem}.json")), &json_bytes(&record)?)?;
                    Ok((row, Some(record)))
                }
                Err(e) => {
                    row.status = "error";
                    row.error = e;
                    Ok((row, None))
                }
            }
        })
        .collect::<anyhow::Result<_>>()?;

    let mut records = BTreeMap::new();
    let mut rows = Vec::with_capacity(results.len());
    for (row, record) in results {
        if let Some(r) = record {
            records.insert(row.cell_id.clone(), r);
        }
        if row.status != "ok" {
            eprintln!("cell {} failed: {}", row.cell_id, row.error);
        }
        rows.push(row);
    }
    let failures = rows.iter().filter(|r| r.status != "ok").count();
    write_atomic(&exp.out.join("records.json"), &json_bytes(&records)?)?;
    let summary = write_rows(&exp.out, "summary", &rows, format)?;
    println!(
        "{} cells, {} failed; summary at {}",
        rows.len(),
        failures,
        summary.display()
    );
    Ok(Outcome { failures })
}

pub fn mpc_table(exp: &Experiment) -> anyhow::Result<Outcome> {
    let (ladder, dur) = match exp.manifests().into_iter().next() {
        Some((_, Ok(m))) if !exp.config.manifests.is_empty() => (m.ladder().to_vec(), m.segment_duration_s()),
        Some((name, Err(e))) if !exp.config.manifests.is_empty() => bail!("manifest {name}: {e}"),
        _ => (ladder_default(), DEFAULT_SEGMENT_DURATION_S),
    };
    let start = Instant::now();
    let table = build_mpc_table(
        &ladder,
        dur,
        exp.config.player.channel.rtt_s,
        &exp.config.mpc,
        &exp.config.binning,
    )
    .context("building lookup table")?;
    let built_in = start.elapsed().as_secs_f64();
    let path = exp.out.join("mpc_table.bin");
    write_atomic(&path, &table.to_bytes())?;
    let bytes = std::fs::read(&path).with_context(|| format!("reading back {}", path.display()))?;
    let reloaded = LookupTable::from_bytes(&bytes).context("reloading lookup table")?;
    if reloaded != table {
        bail!("reloaded table differs from the built one");
    }
    println!(
        "{} entries ({} x {} x {}) built in {built_in:.1}s; written to {}; reload matches",
        table.len(),
        table.tput_bins(),
        table.buffer_bins(),
        table.rep_count(),
        path.display()
    );
    Ok(Outcome { failures: 0 })
}
