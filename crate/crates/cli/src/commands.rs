use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ansc_core::assess::{assess_fleet, ColorMode};
use ansc_core::calibration::{audit, calibrate, BudgetConfig, Population};
use ansc_core::fabric::FabricTopology;
use ansc_core::hazard::{estimate_hazards, HazardTable, IncidentIndex, IncidentRecord};
use ansc_core::persistence::{
    load_assignments, load_budget, load_fleet, load_incidents, load_scorecards, load_thresholds, read_json,
    save_assignments, save_fleet, save_incidents, save_scorecards, save_thresholds, to_json_pretty, to_ndjson,
    write_json, HistoryStore,
};
use ansc_core::scoring::{score_datacenter, score_region, PersistenceBook, Scope};
use ansc_core::simulator::{
    export_heatmap, generate_fleet, generate_history, run_scenario_with, FleetGenSpec, Heatmap, ScenarioConfig, Span,
};
use ansc_core::whatif::{evaluate, parse_actions, WhatIfContext};
use anyhow::Context;
use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::{
    AuditArgs, CalibrateArgs, Cli, Command, Failure, Format, GenFleetArgs, GenHistoryArgs, HeatmapArgs, Mode,
    PopulationArg, ScoreArgs, ServeArgs, SimulateArgs, WhatifArgs,
};

type Outcome = Result<(), Failure>;

/// Scenario file for `simulate` and demo-mode `serve`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub fleet: FleetGenSpec,
    /// Seed of the synthetic incident history; the fleet seed when absent.
    pub history_seed: Option<u64>,
    pub scenario: ScenarioConfig,
}

pub fn run(cli: &Cli) -> Outcome {
    if cli.format == Some(Format::Csv) && !matches!(cli.command, Command::Heatmap(_)) {
        return Err(Failure::Usage("--format csv is only available for heatmap".into()));
    }
    match &cli.command {
        Command::GenFleet(a) => gen_fleet(cli, a),
        Command::GenHistory(a) => gen_history(cli, a),
        Command::Score(a) => score(cli, a),
        Command::Calibrate(a) => calibrate_cmd(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Audit(a) => audit_cmd(cli, a),
        Command::Heatmap(a) => heatmap(cli, a),
        Command::Whatif(a) => whatif(cli, a),
        Command::Serve(a) => serve(cli, a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).context("writing stdout")?;
        }
    }
    Ok(())
}

fn budget(path: Option<&Path>) -> Result<BudgetConfig, Failure> {
    Ok(match path {
        Some(p) => load_budget(p)?,
        None => BudgetConfig::default(),
    })
}

fn hazards_at(
    fleet: &FabricTopology,
    incidents: &[IncidentRecord],
    budget: &BudgetConfig,
    at: DateTime<Utc>,
) -> Result<HazardTable, Failure> {
    let index = IncidentIndex::new(incidents);
    Ok(estimate_hazards(
        fleet,
        &index,
        at,
        budget.history_window_days,
        budget.horizon_years,
        &budget.weights,
    )?)
}

fn gen_fleet(cli: &Cli, a: &GenFleetArgs) -> Outcome {
    let fleet = generate_fleet(&FleetGenSpec {
        seed: cli.seed.unwrap_or_default(),
        n_regions: a.regions,
        n_datacenters: a.dcs,
        layers_per_dc: a.layers_per_dc,
        ..Default::default()
    })?;
    emit(cli.out.as_deref(), &to_json_pretty(&fleet))
}

fn gen_history(cli: &Cli, a: &GenHistoryArgs) -> Outcome {
    let fleet = load_fleet(&a.fleet)?;
    if a.days == 0 {
        return Err(Failure::Usage("--days must be >= 1".into()));
    }
    let config = ScenarioConfig {
        start: fleet.created_at - Duration::days(a.days as i64),
        duration_days: a.days,
        pre_roll_days: 0,
        base_fail_rate_per_year: Span::new(a.rate_min, a.rate_max),
        mean_repair_days: a.mean_repair_days,
        ..Default::default()
    };
    config.check()?;
    let history = generate_history(&fleet, &config, cli.seed.unwrap_or_default());
    emit(cli.out.as_deref(), &to_ndjson(&history))
}

fn score(cli: &Cli, a: &ScoreArgs) -> Outcome {
    let fleet = load_fleet(&a.fleet)?;
    let incidents = load_incidents(&a.incidents)?;
    let budget = budget(a.budget.as_deref())?;
    let at = a.at.unwrap_or(fleet.created_at);
    let hazards = hazards_at(&fleet, &incidents, &budget, at)?;
    let assessment = assess_fleet(
        &fleet,
        &hazards,
        &PersistenceBook::default(),
        &budget,
        at,
        &ColorMode::Calibrate,
    )?;
    emit(cli.out.as_deref(), &to_json_pretty(&assessment.all_cards()))
}

fn calibrate_cmd(cli: &Cli, a: &CalibrateArgs) -> Outcome {
    let cards = load_scorecards(&a.scores)?;
    let budget = budget(a.budget.as_deref())?;
    let (scope, population) = match a.population {
        PopulationArg::Datacenter => (Scope::Datacenter, Population::Datacenter),
        PopulationArg::Region => (Scope::Region, Population::Region),
    };
    let members: Vec<_> = cards.iter().filter(|c| c.scope == scope).collect();
    let Some(at) = members.iter().map(|c| c.at).max() else {
        return Err(
            ansc_core::Error::Precondition(format!("{} has no {population:?} scorecards", a.scores.display())).into(),
        );
    };
    let scores: Vec<(String, f64)> = members.iter().map(|c| (c.scope_id.clone(), c.persisted)).collect();
    let cal = calibrate(&scores, &budget, population, at)?;
    emit(cli.out.as_deref(), &to_json_pretty(&cal.thresholds))
}

fn load_spec(cli: &Cli, path: Option<&Path>) -> Result<SimulationSpec, Failure> {
    let mut spec: SimulationSpec = match path {
        Some(p) => read_json(p)?,
        None => SimulationSpec::default(),
    };
    if let Some(seed) = cli.seed {
        spec.fleet.seed = seed;
        spec.history_seed = Some(seed);
    }
    Ok(spec)
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Outcome {
    let spec = load_spec(cli, a.spec.as_deref())?;
    let fleet = generate_fleet(&spec.fleet)?;
    let history = generate_history(&fleet, &spec.scenario, spec.history_seed.unwrap_or(spec.fleet.seed));
    // datacenter and region series; layer series are not persisted
    let dir = &a.out_dir;
    let history_dir = dir.join("history");
    if history_dir.exists() {
        std::fs::remove_dir_all(&history_dir).with_context(|| format!("clearing {}", history_dir.display()))?;
    }
    let mut store = HistoryStore::open(&history_dir)?;
    let run = run_scenario_with(&fleet, &history, &spec.scenario, |tick| {
        let a = &tick.assessment;
        let mut cards = a.dc_cards();
        cards.extend(a.regions.iter().cloned());
        store.append_scores(&cards)
    })?;

    save_fleet(&fleet, &dir.join("fleet.json"))?;
    save_incidents(&history, &dir.join("incidents.ndjson"))?;
    let assessment = &run.last.assessment;
    save_scorecards(&assessment.all_cards(), &dir.join("scores.json"))?;
    save_thresholds(&assessment.dc_thresholds, &dir.join("thresholds.json"))?;
    save_thresholds(&assessment.region_thresholds, &dir.join("region_thresholds.json"))?;
    save_assignments(&run.assignments, &dir.join("assignments.ndjson"))?;
    save_fleet(&run.final_fleet, &dir.join("final_fleet.json"))?;
    let report = audit(&run.assignments, &spec.scenario.budget);
    write_json(&dir.join("audit.json"), &report)?;
    if cli.verbose {
        eprintln!(
            "{} ticks, {} applied events, audit compliant: {}",
            spec.scenario.tick_count(),
            run.applied_events.len(),
            report.compliant
        );
    }
    Ok(())
}

fn audit_cmd(cli: &Cli, a: &AuditArgs) -> Outcome {
    let assignments = load_assignments(&a.assignments)?;
    let budget = budget(a.budget.as_deref())?;
    let report = audit(&assignments, &budget);
    emit(cli.out.as_deref(), &to_json_pretty(&report))?;
    if cli.format != Some(Format::Json) {
        for c in &report.colors {
            eprintln!(
                "{:<6} {:>7.2}% of {} scope-days, limit {:.2}% ({})",
                c.color.as_str(),
                100.0 * c.fraction,
                report.total_scope_days,
                100.0 * c.limit,
                if c.compliant { "ok" } else { "EXCEEDED" }
            );
        }
    }
    if report.compliant {
        Ok(())
    } else {
        Err(Failure::NonCompliant)
    }
}

fn heatmap(cli: &Cli, a: &HeatmapArgs) -> Outcome {
    let fleet = load_fleet(&a.fleet)?;
    let cards = load_scorecards(&a.scores)?;
    let mut map = export_heatmap(&fleet, &cards)?;
    if let Some(region) = &a.region {
        if !fleet.regions.contains(region) {
            return Err(ansc_core::Error::NotFound(format!("region {region}")).into());
        }
        map = Heatmap {
            at: map.at,
            rows: map.rows.into_iter().filter(|r| &r.region == region).collect(),
        };
    }
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => map.to_csv()?,
        Format::Json => to_json_pretty(&map),
    };
    emit(cli.out.as_deref(), &text)
}

fn whatif(cli: &Cli, a: &WhatifArgs) -> Outcome {
    let fleet = load_fleet(&a.fleet)?;
    let budget = budget(a.budget.as_deref())?;
    let dc_thresholds = load_thresholds(&a.thresholds)?;
    let text = std::fs::read_to_string(&a.actions).map_err(|e| ansc_core::Error::Io {
        path: a.actions.clone(),
        source: e,
    })?;
    let actions = parse_actions(&text).map_err(|e| match e {
        ansc_core::Error::Validation(v) => ansc_core::Error::Parse {
            path: a.actions.display().to_string(),
            message: v
                .iter()
                .map(|x| format!("at {}: {}", x.path, x.message))
                .collect::<Vec<_>>()
                .join("; "),
        },
        other => other,
    })?;
    let at = a.at.unwrap_or(fleet.created_at);
    let incidents = match &a.incidents {
        Some(p) => load_incidents(p)?,
        None => Vec::new(),
    };
    let hazards = hazards_at(&fleet, &incidents, &budget, at)?;
    let book = PersistenceBook::default();
    let region_thresholds = match &a.region_thresholds {
        Some(p) => load_thresholds(p)?,
        None => {
            let mut regions = Vec::new();
            for region in &fleet.regions {
                let members = fleet
                    .datacenters
                    .iter()
                    .filter(|d| &d.region_id == region)
                    .map(|d| score_datacenter(d, &hazards, &book, &budget, at).map(|s| s.card))
                    .collect::<ansc_core::Result<Vec<_>>>()?;
                if !members.is_empty() {
                    let r = score_region(region, &members)?;
                    regions.push((r.scope_id, r.persisted));
                }
            }
            calibrate(&regions, &budget, Population::Region, at)?.thresholds
        }
    };
    let ctx = WhatIfContext {
        fleet: &fleet,
        hazards: &hazards,
        book: &book,
        budget: &budget,
        dc_thresholds: &dc_thresholds,
        region_thresholds: &region_thresholds,
        at,
    };
    let result = evaluate(&ctx, &actions)?;
    emit(cli.out.as_deref(), &to_json_pretty(&result))
}

fn serve(cli: &Cli, a: &ServeArgs) -> Outcome {
    use ansc_service::{App, ServiceState};

    let cors = a
        .cors_origin
        .as_deref()
        .map(|o| {
            o.parse()
                .map_err(|_| Failure::Usage(format!("invalid --cors-origin {o}")))
        })
        .transpose()?;
    let budget_file = a.budget.as_deref();
    let app = match a.mode {
        Mode::File => {
            let fleet_path = a
                .fleet
                .as_deref()
                .ok_or_else(|| Failure::Usage("--fleet is required in file mode".into()))?;
            let fleet = load_fleet(fleet_path)?;
            let incidents = match &a.incidents {
                Some(p) => load_incidents(p)?,
                None => Vec::new(),
            };
            let at = a.at.unwrap_or(fleet.created_at);
            let state = ServiceState::from_inputs(fleet, &incidents, budget(budget_file)?, at)?;
            let history = match &a.history {
                Some(dir) => HistoryStore::open(dir)?,
                None => HistoryStore::in_memory(),
            };
            App::file(state, history)
        }
        Mode::Demo => {
            let mut spec = load_spec(cli, a.spec.as_deref())?;
            if let Some(p) = budget_file {
                spec.scenario.budget = load_budget(p)?;
            }
            let fleet = generate_fleet(&spec.fleet)?;
            let history = generate_history(&fleet, &spec.scenario, spec.history_seed.unwrap_or(spec.fleet.seed));
            App::demo(&fleet, &history, &spec.scenario)?
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime
        .block_on(ansc_service::serve(Arc::new(app), a.listen, cors))
        .with_context(|| format!("serving on {}", a.listen))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ansc_core::persistence::parse_json;

    #[test]
    fn spec_defaults_and_unknown_fields() {
        let s: SimulationSpec = parse_json("{}", "spec").unwrap();
        assert_eq!(s, SimulationSpec::default());
        let s: SimulationSpec = parse_json(
            r#"{"fleet":{"n_datacenters":10,"n_regions":2},"history_seed":4}"#,
            "spec",
        )
        .unwrap();
        assert_eq!(s.fleet.n_datacenters, 10);
        assert_eq!(s.history_seed, Some(4));
        assert!(parse_json::<SimulationSpec>(r#"{"fleets":{}}"#, "spec").is_err());
    }
}
