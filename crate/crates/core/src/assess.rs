//! One scoring pass over a whole fleet: layer, datacenter and region cards,
//! calibrated and colored.

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, BudgetConfig, Population, Thresholds};
use crate::error::Result;
use crate::fabric::FabricTopology;
use crate::hazard::HazardTable;
use crate::scoring::{score_datacenter_in, score_region, DatacenterScore, LayerMemo, PersistenceBook, ScoreCard};

/// How colors are assigned after scoring.
#[derive(Debug, Clone, PartialEq)]
pub enum ColorMode {
    /// Recalibrate both populations from this pass's scores (rank based).
    Calibrate,
    /// Reuse previously calibrated thresholds (score based).
    Frozen { datacenter: Thresholds, region: Thresholds },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetAssessment {
    pub at: DateTime<Utc>,
    /// In fleet order.
    pub datacenters: Vec<DatacenterScore>,
    /// In `fleet.regions` order; regions without datacenters are omitted.
    pub regions: Vec<ScoreCard>,
    pub dc_thresholds: Thresholds,
    pub region_thresholds: Thresholds,
}

impl FleetAssessment {
    /// Every card: layers, then datacenters, then regions.
    pub fn all_cards(&self) -> Vec<ScoreCard> {
        let mut out: Vec<ScoreCard> = self.datacenters.iter().flat_map(|d| d.layers.iter().cloned()).collect();
        out.extend(self.datacenters.iter().map(|d| d.card.clone()));
        out.extend(self.regions.iter().cloned());
        out
    }

    pub fn dc_cards(&self) -> Vec<ScoreCard> {
        self.datacenters.iter().map(|d| d.card.clone()).collect()
    }

    pub fn datacenter(&self, dc_id: &str) -> Option<&DatacenterScore> {
        self.datacenters.iter().find(|d| d.card.scope_id == dc_id)
    }

    pub fn region(&self, region_id: &str) -> Option<&ScoreCard> {
        self.regions.iter().find(|r| r.scope_id == region_id)
    }

    /// Advance elevated-time bookkeeping for every layer by one tick.
    pub fn record_persistence(&self, book: &mut PersistenceBook, tick_days: f64) {
        for dc in &self.datacenters {
            for l in &dc.layers {
                book.record(&l.scope_id, self.at, l.color, tick_days);
            }
        }
    }
}

pub fn assess_fleet(
    fleet: &FabricTopology,
    hazards: &HazardTable,
    book: &PersistenceBook,
    budget: &BudgetConfig,
    at: DateTime<Utc>,
    mode: &ColorMode,
) -> Result<FleetAssessment> {
    assess_fleet_in(fleet, hazards, book, budget, at, mode, None)
}

/// [`assess_fleet`] reusing per-layer results from `memo` where inputs are unchanged.
pub fn assess_fleet_memo(
    fleet: &FabricTopology,
    hazards: &HazardTable,
    book: &PersistenceBook,
    budget: &BudgetConfig,
    at: DateTime<Utc>,
    mode: &ColorMode,
    memo: &LayerMemo,
) -> Result<FleetAssessment> {
    assess_fleet_in(fleet, hazards, book, budget, at, mode, Some(memo))
}

fn assess_fleet_in(
    fleet: &FabricTopology,
    hazards: &HazardTable,
    book: &PersistenceBook,
    budget: &BudgetConfig,
    at: DateTime<Utc>,
    mode: &ColorMode,
    memo: Option<&LayerMemo>,
) -> Result<FleetAssessment> {
    let mut datacenters = fleet
        .datacenters
        .par_iter()
        .map(|dc| score_datacenter_in(dc, hazards, book, budget, at, memo))
        .collect::<Result<Vec<_>>>()?;

    let mut regions = Vec::new();
    for region in &fleet.regions {
        let members: Vec<ScoreCard> = fleet
            .datacenters
            .iter()
            .zip(&datacenters)
            .filter(|(dc, _)| &dc.region_id == region)
            .map(|(_, s)| s.card.clone())
            .collect();
        if !members.is_empty() {
            regions.push(score_region(region, &members)?);
        }
    }

    let (dc_thresholds, region_thresholds) = match mode {
        ColorMode::Calibrate => {
            let dc_pop: Vec<(String, f64)> = datacenters
                .iter()
                .map(|d| (d.card.scope_id.clone(), d.card.persisted))
                .collect();
            let dc_cal = calibrate(&dc_pop, budget, Population::Datacenter, at)?;
            let colors = dc_cal.colors();
            for d in &mut datacenters {
                d.card.color = colors[&d.card.scope_id];
            }
            let region_pop: Vec<(String, f64)> = regions.iter().map(|r| (r.scope_id.clone(), r.persisted)).collect();
            let region_cal = calibrate(&region_pop, budget, Population::Region, at)?;
            let colors = region_cal.colors();
            for r in &mut regions {
                r.color = colors[&r.scope_id];
            }
            (dc_cal.thresholds, region_cal.thresholds)
        }
        ColorMode::Frozen { datacenter, region } => {
            for d in &mut datacenters {
                d.card.color = datacenter.color_of(d.card.persisted);
            }
            for r in &mut regions {
                r.color = region.color_of(r.persisted);
            }
            (datacenter.clone(), region.clone())
        }
    };

    for d in &mut datacenters {
        for l in &mut d.layers {
            l.color = dc_thresholds.color_of(l.persisted);
        }
    }

    Ok(FleetAssessment {
        at,
        datacenters,
        regions,
        dc_thresholds,
        region_thresholds,
    })
}
