//! Synthetic fleets, incident histories and a daily scoring timeline.
//!
//! Randomness comes from ChaCha8 generators seeded per purpose. Each purpose
//! reads its own stream of the generator so adding draws to one purpose does
//! not perturb the others:
//!
//! | stream | purpose |
//! |--------|---------|
//! | 1 | fleet layout (element counts, capacities, demand) |
//! | 2 | per-element failure rates |
//! | 3 | failure onsets and repair durations |
//! | 4 | maintenance calendar |

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::assess::{assess_fleet_memo, ColorMode, FleetAssessment};
use crate::calibration::{Assignment, BudgetConfig};
use crate::error::{Error, Result};
use crate::fabric::{
    available_capacity, default_epoch, CapacityElement, ClosLayer, Datacenter, ElementKind, ElementPos, ElementState,
    FabricTopology, Tier,
};
use crate::hazard::{estimate_hazards, HazardTable, IncidentIndex, IncidentRecord, MAINTENANCE_CAUSE};
use crate::scoring::{Color, LayerMemo, PersistenceBook, ScoreCard, ScoreSeries, SeriesPoint};

pub const FLEET_STREAM: u64 = 1;
pub const RATE_STREAM: u64 = 2;
pub const EVENT_STREAM: u64 = 3;
pub const MAINTENANCE_STREAM: u64 = 4;

const SECONDS_PER_DAY: f64 = 86_400.0;
const DAYS_PER_YEAR: f64 = 365.0;
const CAUSES: [&str; 4] = ["optic", "linecard", "power", "software"];

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn days(d: f64) -> Duration {
    Duration::seconds((d * SECONDS_PER_DAY).round() as i64)
}

/// Inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span<T> {
    pub min: T,
    pub max: T,
}

impl<T> Span<T> {
    pub const fn new(min: T, max: T) -> Self {
        Self { min, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetGenSpec {
    pub seed: u64,
    pub n_regions: usize,
    pub n_datacenters: usize,
    pub layers_per_dc: usize,
    pub elements_per_layer: Span<usize>,
    pub element_capacity: Span<u64>,
    pub demand_fraction: Span<f64>,
    pub created_at: DateTime<Utc>,
}

impl Default for FleetGenSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_regions: 60,
            n_datacenters: 400,
            layers_per_dc: 3,
            elements_per_layer: Span::new(8, 32),
            element_capacity: Span::new(40, 100),
            demand_fraction: Span::new(0.55, 0.85),
            created_at: default_epoch(),
        }
    }
}

impl FleetGenSpec {
    pub fn check(&self) -> Result<()> {
        if self.n_regions == 0 {
            return Err(Error::config("n_regions must be >= 1"));
        }
        if self.n_datacenters < self.n_regions {
            return Err(Error::config("n_datacenters must be >= n_regions"));
        }
        if self.layers_per_dc == 0 {
            return Err(Error::config("layers_per_dc must be >= 1"));
        }
        let e = self.elements_per_layer;
        if e.min == 0 || e.min > e.max {
            return Err(Error::config("elements_per_layer must be a non-empty range >= 1"));
        }
        let c = self.element_capacity;
        if c.min == 0 || c.min > c.max {
            return Err(Error::config("element_capacity must be a non-empty range >= 1"));
        }
        let d = self.demand_fraction;
        if !(d.min > 0.0 && d.min <= d.max && d.max.is_finite()) {
            return Err(Error::config("demand_fraction must be a non-empty positive range"));
        }
        Ok(())
    }
}

fn id_width(n: usize, min: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(min)
}

/// Deterministic synthetic fleet; datacenters are dealt round-robin to regions.
pub fn generate_fleet(spec: &FleetGenSpec) -> Result<FabricTopology> {
    spec.check()?;
    let mut rng = rng_for(spec.seed, FLEET_STREAM);
    let rw = id_width(spec.n_regions, 2);
    let dw = id_width(spec.n_datacenters, 3);
    let regions: Vec<String> = (0..spec.n_regions).map(|i| format!("r{i:0rw$}")).collect();

    let mut datacenters = Vec::with_capacity(spec.n_datacenters);
    for d in 0..spec.n_datacenters {
        let dc_id = format!("dc{d:0dw$}");
        let mut layers = Vec::with_capacity(spec.layers_per_dc);
        for l in 0..spec.layers_per_dc {
            let tier = Tier::ALL[l % Tier::ALL.len()];
            let layer_id = match l / Tier::ALL.len() {
                0 => tier.as_str().to_string(),
                k => format!("{}{}", tier.as_str(), k + 1),
            };
            let kind = if tier == Tier::Spine {
                ElementKind::Device
            } else {
                ElementKind::Link
            };
            let n = rng.random_range(spec.elements_per_layer.min..=spec.elements_per_layer.max);
            let ew = id_width(n, 2);
            let elements: Vec<CapacityElement> = (0..n)
                .map(|e| {
                    let cap = rng.random_range(spec.element_capacity.min..=spec.element_capacity.max);
                    CapacityElement::new(format!("{dc_id}/{layer_id}/e{e:0ew$}"), kind, cap)
                })
                .collect();
            let installed: u64 = elements.iter().map(|e| e.capacity).sum();
            let frac = rng.random_range(spec.demand_fraction.min..=spec.demand_fraction.max);
            layers.push(ClosLayer {
                id: layer_id,
                tier,
                demand_forecast: (frac * installed as f64).floor() as u64,
                elements,
            });
        }
        datacenters.push(Datacenter {
            id: dc_id,
            region_id: regions[d % spec.n_regions].clone(),
            layers,
        });
    }
    let fleet = FabricTopology {
        regions,
        datacenters,
        created_at: spec.created_at,
    };
    fleet.ensure_valid()?;
    Ok(fleet)
}

/// When thresholds are recalibrated during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cadence {
    #[default]
    PerTick,
    /// Calibrate on the first tick of each calendar year, then freeze.
    AnnualFreeze,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// First scored instant.
    pub start: DateTime<Utc>,
    pub duration_days: u32,
    pub tick_days: f64,
    /// Synthetic history generated before `start`.
    pub pre_roll_days: u32,
    pub base_fail_rate_per_year: Span<f64>,
    pub mean_repair_days: f64,
    pub maintenance_rate_per_year: f64,
    pub maintenance_days: f64,
    pub maintenance_seed: u64,
    pub cadence: Cadence,
    pub budget: BudgetConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            start: default_epoch(),
            duration_days: 365,
            tick_days: 1.0,
            pre_roll_days: 730,
            base_fail_rate_per_year: Span::new(0.1, 1.0),
            mean_repair_days: 3.0,
            maintenance_rate_per_year: 0.5,
            maintenance_days: 1.0,
            maintenance_seed: 0,
            cadence: Cadence::PerTick,
            budget: BudgetConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn check(&self) -> Result<()> {
        if self.duration_days == 0 {
            return Err(Error::config("duration_days must be > 0"));
        }
        if !(self.tick_days > 0.0) || !self.tick_days.is_finite() {
            return Err(Error::config("tick_days must be > 0"));
        }
        let r = self.base_fail_rate_per_year;
        if !(r.min >= 0.0 && r.min <= r.max && r.max.is_finite()) {
            return Err(Error::config("base_fail_rate_per_year must be a non-empty range >= 0"));
        }
        if !(self.mean_repair_days > 0.0) {
            return Err(Error::config("mean_repair_days must be > 0"));
        }
        if !(self.maintenance_rate_per_year >= 0.0) || !(self.maintenance_days > 0.0) {
            return Err(Error::config("maintenance rate must be >= 0 and duration > 0"));
        }
        self.budget.check()
    }

    pub fn history_start(&self) -> DateTime<Utc> {
        self.start - Duration::days(self.pre_roll_days as i64)
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::days(self.duration_days as i64)
    }

    pub fn tick_count(&self) -> usize {
        (self.duration_days as f64 / self.tick_days).ceil() as usize
    }
}

/// Alternating outage windows per element over `[from, to)`: onsets form a
/// Poisson process, durations are exponential and clipped at the next onset.
fn outage_windows(
    rng: &mut ChaCha8Rng,
    rate_per_year: f64,
    mean_days: f64,
    from: DateTime<Utc>,
    to: DateTime<Utc>,
) -> Vec<(DateTime<Utc>, DateTime<Utc>)> {
    if rate_per_year <= 0.0 {
        return Vec::new();
    }
    let span_days = (to - from).num_seconds() as f64 / SECONDS_PER_DAY;
    let gap = Exp::new(rate_per_year / DAYS_PER_YEAR).expect("positive rate");
    let len = Exp::new(1.0 / mean_days).expect("positive mean");
    let mut onsets = Vec::new();
    let mut t = gap.sample(rng);
    while t < span_days {
        onsets.push(t);
        t += gap.sample(rng);
    }
    let mut out = Vec::with_capacity(onsets.len());
    for (i, &s) in onsets.iter().enumerate() {
        let mut e = s + len.sample(rng);
        if let Some(&next) = onsets.get(i + 1) {
            e = e.min(next);
        }
        let start = from + days(s);
        let end = (from + days(e)).max(start);
        out.push((start, end));
    }
    out
}

fn sort_records(records: &mut [IncidentRecord]) {
    records.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.element_id.cmp(&b.element_id)));
}

/// Synthetic outage history over `[history_start, end)` of the scenario.
pub fn generate_history(fleet: &FabricTopology, config: &ScenarioConfig, seed: u64) -> Vec<IncidentRecord> {
    let mut rates = rng_for(seed, RATE_STREAM);
    let mut events = rng_for(seed, EVENT_STREAM);
    let (lo, hi) = (config.base_fail_rate_per_year.min, config.base_fail_rate_per_year.max);
    let mut out = Vec::new();
    for el in fleet.elements() {
        let rate = if hi > lo { rates.random_range(lo..=hi) } else { lo };
        for (start, end) in outage_windows(
            &mut events,
            rate,
            config.mean_repair_days,
            config.history_start(),
            config.end(),
        ) {
            let cause = CAUSES[events.random_range(0..CAUSES.len())];
            out.push(IncidentRecord {
                element_id: el.id.clone(),
                start,
                end,
                cause: cause.to_string(),
            });
        }
    }
    sort_records(&mut out);
    out
}

/// Planned maintenance windows (cause `maintenance`) for the scenario.
pub fn generate_maintenance(fleet: &FabricTopology, config: &ScenarioConfig) -> Vec<IncidentRecord> {
    let mut rng = rng_for(config.maintenance_seed, MAINTENANCE_STREAM);
    let mut out = Vec::new();
    for el in fleet.elements() {
        for (start, end) in outage_windows(
            &mut rng,
            config.maintenance_rate_per_year,
            config.maintenance_days,
            config.history_start(),
            config.end(),
        ) {
            out.push(IncidentRecord {
                element_id: el.id.clone(),
                start,
                end,
                cause: MAINTENANCE_CAUSE.to_string(),
            });
        }
    }
    sort_records(&mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEventKind {
    // order matters: at equal timestamps, releases are applied before new outages
    Repair,
    MaintenanceEnd,
    Fail,
    MaintenanceStart,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    pub at: DateTime<Utc>,
    pub kind: SimEventKind,
    pub element_id: String,
}

fn events_from(records: &[IncidentRecord]) -> Vec<SimEvent> {
    let mut out = Vec::with_capacity(records.len() * 2);
    for r in records {
        let (open, close) = if r.is_maintenance() {
            (SimEventKind::MaintenanceStart, SimEventKind::MaintenanceEnd)
        } else {
            (SimEventKind::Fail, SimEventKind::Repair)
        };
        out.push(SimEvent {
            at: r.start,
            kind: open,
            element_id: r.element_id.clone(),
        });
        out.push(SimEvent {
            at: r.end,
            kind: close,
            element_id: r.element_id.clone(),
        });
    }
    out.sort_by(|a, b| {
        a.at.cmp(&b.at)
            .then(a.kind.cmp(&b.kind))
            .then_with(|| a.element_id.cmp(&b.element_id))
    });
    out
}

#[derive(Debug, Clone, Copy, Default)]
struct Flags {
    failed: bool,
    maintenance: bool,
}

impl Flags {
    fn state(self) -> ElementState {
        if self.failed {
            ElementState::Failed
        } else if self.maintenance {
            ElementState::Drained
        } else {
            ElementState::Up
        }
    }
}

/// Output of one simulated tick.
#[derive(Debug, Clone)]
pub struct Tick {
    pub index: usize,
    pub assessment: FleetAssessment,
    pub hazards: HazardTable,
}

/// Stepwise scenario driver; [`run_scenario`] loops it to completion.
pub struct Simulation {
    config: ScenarioConfig,
    fleet: FabricTopology,
    positions: std::collections::HashMap<String, ElementPos>,
    flags: Vec<Vec<Vec<Flags>>>,
    events: Vec<SimEvent>,
    cursor: usize,
    index: IncidentIndex,
    maintenance_windows: BTreeMap<(String, DateTime<Utc>), IncidentRecord>,
    applied: Vec<SimEvent>,
    book: PersistenceBook,
    frozen: Option<(i32, ColorMode)>,
    memo: LayerMemo,
    next_tick: usize,
}

impl Simulation {
    pub fn new(fleet: &FabricTopology, history: &[IncidentRecord], config: &ScenarioConfig) -> Result<Self> {
        config.check()?;
        fleet.ensure_valid()?;
        for r in history {
            r.check()?;
        }
        let positions = fleet.element_index();
        if let Some(r) = history.iter().find(|r| !positions.contains_key(&r.element_id)) {
            return Err(Error::NotFound(format!("incident references element {}", r.element_id)));
        }
        let mut records = history.to_vec();
        records.extend(generate_maintenance(fleet, config));
        let events = events_from(&records);

        let failures: Vec<IncidentRecord> = history.iter().filter(|r| !r.is_maintenance()).cloned().collect();
        let maintenance_windows = records
            .iter()
            .filter(|r| r.is_maintenance())
            .map(|r| ((r.element_id.clone(), r.start), r.clone()))
            .collect();

        // every element starts up; pre-roll events are replayed on the first tick
        let mut fleet = fleet.clone();
        let mut flags = Vec::new();
        for dc in &mut fleet.datacenters {
            let mut dc_flags = Vec::new();
            for layer in &mut dc.layers {
                for e in &mut layer.elements {
                    e.state = ElementState::Up;
                }
                dc_flags.push(vec![Flags::default(); layer.elements.len()]);
            }
            flags.push(dc_flags);
        }

        Ok(Self {
            config: config.clone(),
            fleet,
            positions,
            flags,
            events,
            cursor: 0,
            index: IncidentIndex::new(&failures),
            maintenance_windows,
            applied: Vec::new(),
            book: PersistenceBook::default(),
            frozen: None,
            memo: LayerMemo::default(),
            next_tick: 0,
        })
    }

    pub fn fleet(&self) -> &FabricTopology {
        &self.fleet
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn persistence(&self) -> &PersistenceBook {
        &self.book
    }

    /// Events actually applied so far (maintenance refused by the removal
    /// check never appears here).
    pub fn applied_events(&self) -> &[SimEvent] {
        &self.applied
    }

    pub fn is_finished(&self) -> bool {
        self.next_tick >= self.config.tick_count()
    }

    pub fn tick_time(&self, index: usize) -> DateTime<Utc> {
        self.config.start + days(index as f64 * self.config.tick_days)
    }

    fn apply(&mut self, ev: &SimEvent) {
        let pos = self.positions[&ev.element_id];
        let flags = &mut self.flags[pos.dc][pos.layer][pos.element];
        let applied = match ev.kind {
            SimEventKind::Fail => {
                flags.failed = true;
                true
            }
            SimEventKind::Repair => std::mem::replace(&mut flags.failed, false),
            SimEventKind::MaintenanceStart => {
                let layer = &self.fleet.datacenters[pos.dc].layers[pos.layer];
                let el = &layer.elements[pos.element];
                // same test as the removal check: draining must keep ES >= 0
                let ok = !flags.failed
                    && !flags.maintenance
                    && available_capacity(layer) - el.capacity >= layer.demand_forecast;
                if ok {
                    flags.maintenance = true;
                    if let Some(r) = self.maintenance_windows.get(&(ev.element_id.clone(), ev.at)) {
                        self.index.insert(r);
                    }
                }
                ok
            }
            SimEventKind::MaintenanceEnd => std::mem::replace(&mut flags.maintenance, false),
        };
        if applied {
            let state = flags.state();
            self.fleet.set_state_at(pos, state);
            self.applied.push(ev.clone());
        }
    }

    /// Advance one tick: apply due events, re-estimate hazards, score and color.
    pub fn step(&mut self) -> Result<Tick> {
        if self.is_finished() {
            return Err(Error::Precondition("scenario already finished".into()));
        }
        let index = self.next_tick;
        let at = self.tick_time(index);
        while self.cursor < self.events.len() && self.events[self.cursor].at <= at {
            let ev = self.events[self.cursor].clone();
            self.apply(&ev);
            self.cursor += 1;
        }

        let budget = &self.config.budget;
        let hazards = estimate_hazards(
            &self.fleet,
            &self.index,
            at,
            budget.history_window_days,
            budget.horizon_years,
            &budget.weights,
        )?;

        let mode = match self.config.cadence {
            Cadence::PerTick => ColorMode::Calibrate,
            Cadence::AnnualFreeze => match &self.frozen {
                Some((year, mode)) if *year == chrono::Datelike::year(&at) => mode.clone(),
                _ => ColorMode::Calibrate,
            },
        };
        let assessment = assess_fleet_memo(&self.fleet, &hazards, &self.book, budget, at, &mode, &self.memo)?;
        if self.config.cadence == Cadence::AnnualFreeze && mode == ColorMode::Calibrate {
            self.frozen = Some((
                chrono::Datelike::year(&at),
                ColorMode::Frozen {
                    datacenter: assessment.dc_thresholds.clone(),
                    region: assessment.region_thresholds.clone(),
                },
            ));
        }
        assessment.record_persistence(&mut self.book, self.config.tick_days);
        self.next_tick += 1;
        Ok(Tick {
            index,
            assessment,
            hazards,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub series: BTreeMap<String, ScoreSeries>,
    /// Daily datacenter colors, the input to the annual audit.
    pub assignments: Vec<Assignment>,
    pub final_fleet: FabricTopology,
    pub last: Tick,
    pub applied_events: Vec<SimEvent>,
}

pub fn run_scenario(
    fleet: &FabricTopology,
    history: &[IncidentRecord],
    config: &ScenarioConfig,
) -> Result<ScenarioRun> {
    run_scenario_with(fleet, history, config, |_| Ok(()))
}

/// [`run_scenario`], handing every tick to `on_tick` as it completes.
pub fn run_scenario_with(
    fleet: &FabricTopology,
    history: &[IncidentRecord],
    config: &ScenarioConfig,
    mut on_tick: impl FnMut(&Tick) -> Result<()>,
) -> Result<ScenarioRun> {
    let mut sim = Simulation::new(fleet, history, config)?;
    let mut series: BTreeMap<String, ScoreSeries> = BTreeMap::new();
    let mut assignments = Vec::new();
    let mut last = None;
    while !sim.is_finished() {
        let tick = sim.step()?;
        let a = &tick.assessment;
        for card in a.all_cards() {
            series
                .entry(card.scope_id.clone())
                .or_insert_with(|| ScoreSeries::new(card.scope_id.clone()))
                .push(SeriesPoint {
                    at: card.at,
                    persisted: card.persisted,
                    color: card.color,
                })?;
        }
        let date = a.at.date_naive();
        assignments.extend(a.datacenters.iter().map(|d| Assignment {
            scope_id: d.card.scope_id.clone(),
            date,
            color: d.card.color,
        }));
        on_tick(&tick)?;
        last = Some(tick);
    }
    Ok(ScenarioRun {
        series,
        assignments,
        final_fleet: sim.fleet().clone(),
        last: last.expect("tick_count >= 1"),
        applied_events: sim.applied_events().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub dc: String,
    pub persisted: f64,
    pub color: Color,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub region: String,
    pub cells: Vec<HeatmapCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub at: DateTime<Utc>,
    pub rows: Vec<HeatmapRow>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    region: &'a str,
    dc: &'a str,
    persisted: f64,
    color: &'a str,
}

#[derive(Deserialize)]
struct CsvRecord {
    region: String,
    dc: String,
    persisted: f64,
    color: Color,
}

impl Heatmap {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            for c in &row.cells {
                w.serialize(CsvRow {
                    region: &row.region,
                    dc: &c.dc,
                    persisted: c.persisted,
                    color: c.color.as_str(),
                })
                .map_err(|e| Error::Domain(e.to_string()))?;
            }
        }
        // header is written with the first record; keep it for empty maps too
        if self.rows.iter().all(|r| r.cells.is_empty()) {
            return Ok("region,dc,persisted,color\n".to_string());
        }
        let bytes = w.into_inner().map_err(|e| Error::Domain(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }

    /// Parse rows back from [`Heatmap::to_csv`] output. Region order and cell
    /// order are taken from the file.
    pub fn rows_from_csv(text: &str) -> Result<Vec<HeatmapRow>> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut rows: Vec<HeatmapRow> = Vec::new();
        for (i, rec) in rdr.deserialize::<CsvRecord>().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                path: format!("heatmap csv record {}", i + 1),
                message: e.to_string(),
            })?;
            let cell = HeatmapCell {
                dc: rec.dc,
                persisted: rec.persisted,
                color: rec.color,
            };
            match rows.last_mut() {
                Some(r) if r.region == rec.region => r.cells.push(cell),
                _ => rows.push(HeatmapRow {
                    region: rec.region,
                    cells: vec![cell],
                }),
            }
        }
        Ok(rows)
    }

    pub fn row(&self, region: &str) -> Option<&HeatmapRow> {
        self.rows.iter().find(|r| r.region == region)
    }
}

/// Regions (ascending) by member datacenters (worst first). Non-datacenter
/// cards are ignored.
pub fn export_heatmap(fleet: &FabricTopology, cards: &[ScoreCard]) -> Result<Heatmap> {
    let dc_cards: Vec<&ScoreCard> = cards
        .iter()
        .filter(|c| c.scope == crate::scoring::Scope::Datacenter)
        .collect();
    let Some(first) = dc_cards.first() else {
        return Err(Error::domain("no datacenter cards to render"));
    };
    let at = first.at;
    if let Some(c) = cards.iter().find(|c| c.at != at) {
        return Err(Error::domain(format!("cards span several ticks ({} and {})", at, c.at)));
    }
    let mut rows: BTreeMap<&str, Vec<HeatmapCell>> = BTreeMap::new();
    for c in dc_cards {
        let dc = fleet
            .datacenter(&c.scope_id)
            .ok_or_else(|| Error::NotFound(format!("datacenter {}", c.scope_id)))?;
        rows.entry(dc.region_id.as_str()).or_default().push(HeatmapCell {
            dc: c.scope_id.clone(),
            persisted: c.persisted,
            color: c.color,
        });
    }
    let rows = rows
        .into_iter()
        .map(|(region, mut cells)| {
            cells.sort_by(|a, b| b.persisted.total_cmp(&a.persisted).then_with(|| a.dc.cmp(&b.dc)));
            HeatmapRow {
                region: region.to_string(),
                cells,
            }
        })
        .collect();
    Ok(Heatmap { at, rows })
}
