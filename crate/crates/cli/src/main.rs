//! `ansc`: batch pipeline and service launcher.

mod commands;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "ansc",
    version,
    about = "Capacity-health scoring for Clos datacenter fabrics"
)]
pub struct Cli {
    /// Seed for generators; overrides seeds in a scenario spec.
    #[arg(long, global = true, env = "ANSC_SEED")]
    pub seed: Option<u64>,

    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Output format; `json` also makes errors machine-readable on stderr.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Print the effective configuration to stderr before running.
    #[arg(long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a synthetic fleet topology.
    GenFleet(GenFleetArgs),
    /// Generate a synthetic incident history ending at the fleet's creation time.
    GenHistory(GenHistoryArgs),
    /// Score every layer, datacenter and region of a fleet.
    Score(ScoreArgs),
    /// Calibrate color thresholds from a scorecard file.
    Calibrate(CalibrateArgs),
    /// Run a multi-tick scenario and write its artifacts to a directory.
    Simulate(SimulateArgs),
    /// Check daily color assignments against the color budget; exits 1 when non-compliant.
    Audit(AuditArgs),
    /// Render datacenter scores as a region heatmap (csv by default).
    Heatmap(HeatmapArgs),
    /// Evaluate remediation or removal actions against frozen thresholds.
    Whatif(WhatifArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenFleetArgs {
    /// Number of datacenters.
    #[arg(long, default_value_t = 400)]
    pub dcs: usize,
    /// Number of regions.
    #[arg(long, default_value_t = 60)]
    pub regions: usize,
    /// Layers per datacenter (tor, agg, spine, then extra agg layers).
    #[arg(long, default_value_t = 3)]
    pub layers_per_dc: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct GenHistoryArgs {
    /// Fleet file.
    #[arg(long)]
    pub fleet: PathBuf,
    /// Days of history before the fleet's `created_at`.
    #[arg(long, default_value_t = 730)]
    pub days: u32,
    /// Lower bound of per-element failure rates, per year.
    #[arg(long, default_value_t = 0.1)]
    pub rate_min: f64,
    /// Upper bound of per-element failure rates, per year.
    #[arg(long, default_value_t = 1.0)]
    pub rate_max: f64,
    /// Mean outage duration in days.
    #[arg(long, default_value_t = 3.0)]
    pub mean_repair_days: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    /// Fleet file.
    #[arg(long)]
    pub fleet: PathBuf,
    /// Incident history (ndjson).
    #[arg(long)]
    pub incidents: PathBuf,
    /// Budget file; defaults apply when absent.
    #[arg(long)]
    pub budget: Option<PathBuf>,
    /// Scoring instant (RFC 3339); defaults to the fleet's `created_at`.
    #[arg(long)]
    pub at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationArg {
    Datacenter,
    Region,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    /// Scorecard file.
    #[arg(long)]
    pub scores: PathBuf,
    /// Budget file; defaults apply when absent.
    #[arg(long)]
    pub budget: Option<PathBuf>,
    /// Which scorecards form the population.
    #[arg(long, value_enum, default_value_t = PopulationArg::Datacenter)]
    pub population: PopulationArg,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Scenario spec: `{"fleet": {...}, "history_seed": n, "scenario": {...}}`; every field optional.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Directory for fleet.json, incidents.ndjson, scores.json, thresholds.json,
    /// region_thresholds.json, assignments.ndjson, audit.json, final_fleet.json and history/.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditArgs {
    /// Daily color assignments (ndjson).
    #[arg(long)]
    pub assignments: PathBuf,
    /// Budget file; defaults apply when absent.
    #[arg(long)]
    pub budget: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct HeatmapArgs {
    /// Scorecard file.
    #[arg(long)]
    pub scores: PathBuf,
    /// Fleet file, for region membership.
    #[arg(long)]
    pub fleet: PathBuf,
    /// Restrict to one region.
    #[arg(long)]
    pub region: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct WhatifArgs {
    /// Fleet file.
    #[arg(long)]
    pub fleet: PathBuf,
    /// Datacenter thresholds (layers and datacenters are colored with these).
    #[arg(long)]
    pub thresholds: PathBuf,
    /// Region thresholds; calibrated from the current fleet when absent.
    #[arg(long)]
    pub region_thresholds: Option<PathBuf>,
    /// Action list (json array).
    #[arg(long)]
    pub actions: PathBuf,
    /// Incident history for hazards; every element gets the floor rate when absent.
    #[arg(long)]
    pub incidents: Option<PathBuf>,
    /// Budget file; defaults apply when absent.
    #[arg(long)]
    pub budget: Option<PathBuf>,
    /// Evaluation instant (RFC 3339); defaults to the fleet's `created_at`.
    #[arg(long)]
    pub at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    File,
    Demo,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// `file` serves a static snapshot; `demo` runs the simulator and accepts ticks.
    #[arg(long, value_enum, default_value_t = Mode::Demo)]
    pub mode: Mode,
    /// Listen address.
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Origin allowed by CORS, e.g. http://localhost:5173.
    #[arg(long)]
    pub cors_origin: Option<String>,
    /// File mode: fleet file.
    #[arg(long, required_if_eq("mode", "file"))]
    pub fleet: Option<PathBuf>,
    /// File mode: incident history.
    #[arg(long)]
    pub incidents: Option<PathBuf>,
    /// Budget file; defaults apply when absent.
    #[arg(long)]
    pub budget: Option<PathBuf>,
    /// File mode: score history directory, e.g. the `history/` written by `simulate`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// File mode: scoring instant; defaults to the fleet's `created_at`.
    #[arg(long)]
    pub at: Option<DateTime<Utc>>,
    /// Demo mode: scenario spec as for `simulate`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

/// Failure of a subcommand and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flag combination; exit 2.
    Usage(String),
    /// Input or validation failure; exit 1.
    Core(ansc_core::Error),
    /// Compliance check failed; exit 1 after the report was written.
    NonCompliant,
    Other(anyhow::Error),
}

impl From<ansc_core::Error> for Failure {
    fn from(e: ansc_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

fn report(failure: &Failure, json: bool) -> ExitCode {
    let (kind, message, code) = match failure {
        Failure::Usage(m) => ("usage", m.clone(), 2),
        Failure::Core(e) => (e.kind(), e.to_string(), 1),
        Failure::NonCompliant => ("non_compliant", "color budget exceeded".to_string(), 1),
        Failure::Other(e) => ("error", format!("{e:#}"), 1),
    };
    if json {
        let line = ErrorLine { error: kind, message };
        eprintln!("{}", serde_json::to_string(&line).expect("plain data serializes"));
    } else {
        eprintln!("error: {message}");
    }
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.verbose {
        eprintln!("{}", serde_json::to_string_pretty(&cli).expect("plain data serializes"));
    }
    let json_errors = cli.format == Some(Format::Json);
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(&f, json_errors),
    }
}
