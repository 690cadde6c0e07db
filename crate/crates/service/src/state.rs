use std::sync::{Arc, RwLock};

use ansc_core::assess::{assess_fleet, ColorMode, FleetAssessment};
use ansc_core::calibration::BudgetConfig;
use ansc_core::fabric::FabricTopology;
use ansc_core::hazard::{estimate_hazards, HazardTable, IncidentIndex, IncidentRecord};
use ansc_core::persistence::HistoryStore;
use ansc_core::scoring::{PersistenceBook, ScoreSeries, SeriesPoint};
use ansc_core::simulator::{ScenarioConfig, Simulation};
use ansc_core::whatif::WhatIfContext;
use ansc_core::Result;
use chrono::{DateTime, Utc};
use tokio::sync::{Mutex, OwnedMutexGuard};

/// Everything one tick produced. Never mutated once published.
#[derive(Debug, Clone)]
pub struct ServiceState {
    /// Tick index in demo mode.
    pub tick: Option<usize>,
    pub fleet: FabricTopology,
    pub hazards: HazardTable,
    /// Persistence state the tick was scored against.
    pub book: PersistenceBook,
    pub budget: BudgetConfig,
    pub assessment: FleetAssessment,
}

impl ServiceState {
    /// Static snapshot scored from files.
    pub fn from_inputs(
        fleet: FabricTopology,
        incidents: &[IncidentRecord],
        budget: BudgetConfig,
        at: DateTime<Utc>,
    ) -> Result<Self> {
        fleet.ensure_valid()?;
        budget.check()?;
        let index = IncidentIndex::new(incidents);
        let hazards = estimate_hazards(
            &fleet,
            &index,
            at,
            budget.history_window_days,
            budget.horizon_years,
            &budget.weights,
        )?;
        let book = PersistenceBook::default();
        let assessment = assess_fleet(&fleet, &hazards, &book, &budget, at, &ColorMode::Calibrate)?;
        Ok(Self {
            tick: None,
            fleet,
            hazards,
            book,
            budget,
            assessment,
        })
    }

    pub fn at(&self) -> DateTime<Utc> {
        self.assessment.at
    }

    pub fn whatif_context(&self) -> WhatIfContext<'_> {
        WhatIfContext {
            fleet: &self.fleet,
            hazards: &self.hazards,
            book: &self.book,
            budget: &self.budget,
            dc_thresholds: &self.assessment.dc_thresholds,
            region_thresholds: &self.assessment.region_thresholds,
            at: self.at(),
        }
    }
}

pub enum SimLock {
    FileMode,
    /// Another tick is running.
    Busy,
    Held(OwnedMutexGuard<Simulation>),
}

/// Shared service handle: the published snapshot, its history and, in demo
/// mode, the simulation that produces new ticks.
pub struct App {
    snapshot: RwLock<Arc<ServiceState>>,
    history: RwLock<HistoryStore>,
    sim: Option<Arc<Mutex<Simulation>>>,
}

impl App {
    /// File mode: a fixed snapshot plus whatever history the store holds.
    pub fn file(state: ServiceState, history: HistoryStore) -> Self {
        Self {
            snapshot: RwLock::new(Arc::new(state)),
            history: RwLock::new(history),
            sim: None,
        }
    }

    /// Demo mode: start a simulation and publish its first tick.
    pub fn demo(fleet: &FabricTopology, incidents: &[IncidentRecord], config: &ScenarioConfig) -> Result<Self> {
        let mut sim = Simulation::new(fleet, incidents, config)?;
        let mut history = HistoryStore::in_memory();
        let state = step(&mut sim)?;
        history.append_scores(&state.assessment.all_cards())?;
        Ok(Self {
            snapshot: RwLock::new(Arc::new(state)),
            history: RwLock::new(history),
            sim: Some(Arc::new(Mutex::new(sim))),
        })
    }

    pub fn is_demo(&self) -> bool {
        self.sim.is_some()
    }

    pub fn snapshot(&self) -> Arc<ServiceState> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Trailing `window` points of a scope, restricted to ticks no newer than `at`.
    pub fn series(&self, scope_id: &str, window: usize, at: DateTime<Utc>) -> ScoreSeries {
        let history = self.history.read().expect("history lock");
        let cards = history.cards(scope_id);
        let visible = cards.partition_point(|c| c.at <= at);
        let from = visible.saturating_sub(window);
        ScoreSeries {
            scope_id: scope_id.to_string(),
            points: cards[from..visible]
                .iter()
                .map(|c| SeriesPoint {
                    at: c.at,
                    persisted: c.persisted,
                    color: c.color,
                })
                .collect(),
        }
    }

    pub fn lock_sim(&self) -> SimLock {
        match &self.sim {
            None => SimLock::FileMode,
            Some(sim) => match sim.clone().try_lock_owned() {
                Ok(guard) => SimLock::Held(guard),
                Err(_) => SimLock::Busy,
            },
        }
    }

    /// Run one tick under an acquired simulation lock and publish it.
    pub fn advance(&self, mut sim: OwnedMutexGuard<Simulation>) -> Result<Arc<ServiceState>> {
        let state = Arc::new(step(&mut sim)?);
        // history gains the new tick first; readers filter by the snapshot they hold
        self.history
            .write()
            .expect("history lock")
            .append_scores(&state.assessment.all_cards())?;
        *self.snapshot.write().expect("snapshot lock") = state.clone();
        Ok(state)
    }
}

fn step(sim: &mut Simulation) -> Result<ServiceState> {
    let book = sim.persistence().clone();
    let tick = sim.step()?;
    Ok(ServiceState {
        tick: Some(tick.index),
        fleet: sim.fleet().clone(),
        hazards: tick.hazards,
        book,
        budget: sim.config().budget,
        assessment: tick.assessment,
    })
}
