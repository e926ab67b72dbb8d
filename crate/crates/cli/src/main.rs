//! `qa-ensemble`: run, simulate, plan and evaluate SLA-aware QA ensembles.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::Format;

#[derive(Debug, Parser)]
#[command(name = "qa-ensemble", version, about)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format; overrides `[output] format`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads; overrides `threads`. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Answer every dataset query and write traces plus a metrics report.
    Run,
    /// Monte Carlo and exact-enumeration estimates for the configured ensemble.
    Simulate,
    /// Print the ensemble the planner picks for an intent and SLA.
    Plan {
        #[arg(long, default_value = "directly_answerable")]
        intent: String,
        /// Comma-separated objectives replacing `[sla] objectives`,
        /// e.g. `hallucination_rate<=0.23,precision>=0.6`.
        #[arg(long)]
        sla: Option<String>,
    },
    /// Recompute metrics from an existing trace file.
    Eval {
        /// Defaults to `<out>/traces.jsonl`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Write a synthetic dataset and document store from the agents' profiles.
    Synth {
        #[arg(long, default_value_t = 200)]
        queries: usize,
        #[arg(long, default_value_t = 1.0)]
        p_global_context: f64,
        #[arg(long, default_value_t = 2)]
        distractors: usize,
        #[arg(long)]
        dataset_out: PathBuf,
        #[arg(long)]
        store_out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
