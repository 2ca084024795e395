//! `sqoe`: batch experiments over traces, manifests, ABR policies, QoE
//! models, subjective ratings and statistics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

mod analysis;
mod config;
mod output;
mod simulate;
mod traces;

use config::Experiment;
use output::Format;

#[derive(Parser, Debug)]
#[command(name = "sqoe", version, about = "Trace-driven ABR simulation and QoE evaluation")]
struct Cli {
    /// Experiment config (TOML). Relative paths inside it resolve against
    /// its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every manifest × trace × policy cell.
    Simulate,
    /// Build, save and verify the FastMPC lookup table.
    MpcTable,
    /// Score session records with the configured QoE models.
    Qoe {
        /// Records JSON (id → record); defaults to the config entry, then
        /// `<out>/records.json`.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Screen ratings, compute MOS, per-viewer sensitivities and CDFs.
    Subjective,
    /// Correlations and significance matrices over per-item scores.
    Stats,
    /// Bandwidth trace preparation.
    Traces {
        #[command(subcommand)]
        action: TraceAction,
    },
}

#[derive(Args, Debug)]
pub struct TraceInput {
    /// Trace files.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Layout of the input files: granular_5s, granular_1s or pairs.
    #[arg(long, default_value = "pairs")]
    pub trace_format: String,
}

#[derive(Subcommand, Debug)]
pub enum TraceAction {
    /// Parse raw traces and rewrite them as `time_s,bandwidth_kbps` rows.
    Ingest(TraceInput),
    /// Cut traces into fixed windows.
    Window {
        #[command(flatten)]
        input: TraceInput,
        #[arg(long, default_value_t = sqoe::nettrace::DEFAULT_WINDOW_S)]
        window: f64,
        /// Defaults to the window length.
        #[arg(long)]
        stride: Option<f64>,
    },
    /// Keep traces whose mean bandwidth exceeds a floor.
    Filter {
        #[command(flatten)]
        input: TraceInput,
        #[arg(long, default_value_t = sqoe::nettrace::DEFAULT_MIN_AVG_KBPS)]
        min_avg: f64,
    },
}

/// Per-command result: how many cells or rows failed.
pub struct Outcome {
    pub failures: usize,
}

fn dispatch(cli: Cli) -> anyhow::Result<Outcome> {
    let exp = Experiment::load(cli.config.as_deref(), cli.seed, cli.out.clone())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .context("starting worker pool")?;
    pool.install(|| match cli.command {
        Command::Simulate => simulate::run(&exp, cli.format),
        Command::MpcTable => simulate::mpc_table(&exp),
        Command::Qoe { records } => analysis::qoe(&exp, records, cli.format),
        Command::Subjective => analysis::subjective(&exp, cli.format),
        Command::Stats => analysis::stats(&exp, cli.format),
        Command::Traces { action } => traces::run(&exp, action, cli.format),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(o) if o.failures == 0 => ExitCode::SUCCESS,
        Ok(o) => {
            eprintln!("{} cell(s) failed", o.failures);
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
