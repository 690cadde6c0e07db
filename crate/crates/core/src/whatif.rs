//! Hypothetical remediation and removal actions against a frozen snapshot.
//!
//! What-ifs reuse the thresholds of the latest calibration and never advance
//! persistence state, so before and after cards are directly comparable.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::calibration::{BudgetConfig, Thresholds};
use crate::error::{Error, Result};
use crate::fabric::{
    available_capacity, layer_scope_id, CapacityElement, ElementKind, ElementState, FabricTopology, Violation,
};
use crate::hazard::{hazard_from_count, HazardTable};
use crate::scoring::{effective_safety_margin, score_datacenter, score_region, PersistenceBook, Scope, ScoreCard};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    RepairElement {
        element_id: String,
    },
    DrainElement {
        element_id: String,
    },
    UndrainElement {
        element_id: String,
    },
    /// Adds a fresh element of `amount` units to the layer `"<dc>/<layer>"`.
    AddCapacity {
        layer_id: String,
        amount: u64,
    },
    /// Repair plus a fresh incident history for the element.
    ReplaceElement {
        element_id: String,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementArgs {
    element_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CapacityArgs {
    layer_id: String,
    amount: u64,
}

fn invalid(path: String, message: impl Into<String>) -> Error {
    Error::Validation(vec![Violation {
        path,
        message: message.into(),
    }])
}

fn payload<T: serde::de::DeserializeOwned>(i: usize, obj: serde_json::Map<String, serde_json::Value>) -> Result<T> {
    serde_path_to_error::deserialize(serde_json::Value::Object(obj)).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            format!("[{i}]")
        } else {
            format!("[{i}].{inner}")
        };
        invalid(path, e.inner().to_string())
    })
}

/// Parse a JSON action list, reporting the path of the first bad field
/// (`[2].amount`). Serde's tagged-enum path cannot see inside a variant.
pub fn parse_actions(text: &str) -> Result<Vec<Action>> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let items: Vec<serde_json::Value> =
        serde_path_to_error::deserialize(de).map_err(|e| invalid(e.path().to_string(), e.inner().to_string()))?;
    let mut out = Vec::with_capacity(items.len());
    for (i, item) in items.into_iter().enumerate() {
        let serde_json::Value::Object(mut obj) = item else {
            return Err(invalid(format!("[{i}]"), "action must be an object"));
        };
        let kind = match obj.remove("kind") {
            Some(serde_json::Value::String(k)) => k,
            _ => return Err(invalid(format!("[{i}].kind"), "missing or non-string action kind")),
        };
        let action = match kind.as_str() {
            "add_capacity" => {
                let a: CapacityArgs = payload(i, obj)?;
                Action::AddCapacity {
                    layer_id: a.layer_id,
                    amount: a.amount,
                }
            }
            "repair_element" | "drain_element" | "undrain_element" | "replace_element" => {
                let element_id = payload::<ElementArgs>(i, obj)?.element_id;
                match kind.as_str() {
                    "repair_element" => Action::RepairElement { element_id },
                    "drain_element" => Action::DrainElement { element_id },
                    "undrain_element" => Action::UndrainElement { element_id },
                    _ => Action::ReplaceElement { element_id },
                }
            }
            other => return Err(invalid(format!("[{i}].kind"), format!("unknown action kind `{other}`"))),
        };
        out.push(action);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    pub before: Vec<ScoreCard>,
    pub after: Vec<ScoreCard>,
    /// Present when the action list drains something: every drained layer keeps ES >= 0.
    pub safe_to_remove: Option<bool>,
}

/// Everything a what-if needs from the current snapshot.
#[derive(Debug, Clone, Copy)]
pub struct WhatIfContext<'a> {
    pub fleet: &'a FabricTopology,
    pub hazards: &'a HazardTable,
    pub book: &'a PersistenceBook,
    pub budget: &'a BudgetConfig,
    pub dc_thresholds: &'a Thresholds,
    pub region_thresholds: &'a Thresholds,
    pub at: DateTime<Utc>,
}

/// Whether draining `element_id` keeps its layer at ES >= 0.
pub fn removal_check(fleet: &FabricTopology, element_id: &str) -> Result<bool> {
    let pos = fleet
        .locate(element_id)
        .ok_or_else(|| Error::NotFound(format!("element {element_id}")))?;
    let el = fleet.element(pos);
    if el.state != ElementState::Up {
        return Err(Error::Precondition(format!(
            "element {element_id} is {}, only up elements can be removed",
            el.state
        )));
    }
    let layer = &fleet.datacenters[pos.dc].layers[pos.layer];
    let after = available_capacity(layer) - el.capacity;
    Ok(effective_safety_margin(after, layer.demand_forecast) >= 0.0)
}

struct Applied {
    fleet: FabricTopology,
    hazards: HazardTable,
    layers: BTreeSet<String>,
    drained_layers: BTreeSet<String>,
}

fn apply_actions(ctx: &WhatIfContext<'_>, actions: &[Action]) -> Result<Applied> {
    let mut fleet = ctx.fleet.clone();
    let mut hazards = ctx.hazards.clone();
    let mut layers = BTreeSet::new();
    let mut drained_layers = BTreeSet::new();
    let fresh = |id: &str| hazard_from_count(id, 0, 1.0, ctx.budget.horizon_years, &ctx.budget.weights, false);

    for (i, action) in actions.iter().enumerate() {
        match action {
            Action::AddCapacity { layer_id, amount } => {
                if *amount == 0 {
                    return Err(Error::Validation(vec![Violation {
                        path: format!("[{i}].amount"),
                        message: "add_capacity amount must be > 0".into(),
                    }]));
                }
                let (dc_id, l_id) = layer_id
                    .split_once('/')
                    .ok_or_else(|| Error::NotFound(format!("layer {layer_id}")))?;
                let layer = fleet
                    .datacenters
                    .iter_mut()
                    .find(|d| d.id == dc_id)
                    .and_then(|d| d.layers.iter_mut().find(|l| l.id == l_id))
                    .ok_or_else(|| Error::NotFound(format!("layer {layer_id}")))?;
                let id = format!("{layer_id}/added-{i}");
                layer
                    .elements
                    .push(CapacityElement::new(id.clone(), ElementKind::Link, *amount));
                hazards.insert(fresh(&id)?);
                layers.insert(layer_id.clone());
            }
            Action::RepairElement { element_id }
            | Action::DrainElement { element_id }
            | Action::UndrainElement { element_id }
            | Action::ReplaceElement { element_id } => {
                let pos = fleet
                    .locate(element_id)
                    .ok_or_else(|| Error::NotFound(format!("element {element_id}")))?;
                let current = fleet.element(pos).state;
                let next = match action {
                    Action::RepairElement { .. } | Action::ReplaceElement { .. } => ElementState::Up,
                    Action::DrainElement { .. } => ElementState::Drained,
                    Action::UndrainElement { .. } if current == ElementState::Drained => ElementState::Up,
                    _ => current,
                };
                fleet.set_state_at(pos, next);
                if matches!(action, Action::ReplaceElement { .. }) {
                    hazards.insert(fresh(element_id)?);
                }
                let dc = &fleet.datacenters[pos.dc];
                let scope = layer_scope_id(&dc.id, &dc.layers[pos.layer].id);
                if matches!(action, Action::DrainElement { .. }) {
                    drained_layers.insert(scope.clone());
                }
                layers.insert(scope);
            }
        }
    }
    Ok(Applied {
        fleet,
        hazards,
        layers,
        drained_layers,
    })
}

/// Cards for the given layers, their datacenters and regions, colored with
/// frozen thresholds.
fn cards_for(
    ctx: &WhatIfContext<'_>,
    fleet: &FabricTopology,
    hazards: &HazardTable,
    layers: &BTreeSet<String>,
) -> Result<Vec<ScoreCard>> {
    let dc_ids: BTreeSet<&str> = layers.iter().filter_map(|l| l.split_once('/').map(|p| p.0)).collect();
    let regions: BTreeSet<&str> = dc_ids
        .iter()
        .filter_map(|d| fleet.datacenter(d).map(|dc| dc.region_id.as_str()))
        .collect();

    let mut layer_cards = Vec::new();
    let mut dc_cards = Vec::new();
    let mut region_cards = Vec::new();
    for region in regions {
        let mut members = Vec::new();
        for dc in fleet.datacenters.iter().filter(|d| d.region_id == region) {
            let mut s = score_datacenter(dc, hazards, ctx.book, ctx.budget, ctx.at)?;
            s.card.color = ctx.dc_thresholds.color_of(s.card.persisted);
            if dc_ids.contains(dc.id.as_str()) {
                for l in s.layers.iter_mut().filter(|l| layers.contains(&l.scope_id)) {
                    l.color = ctx.dc_thresholds.color_of(l.persisted);
                    layer_cards.push(l.clone());
                }
                dc_cards.push(s.card.clone());
            }
            members.push(s.card);
        }
        let mut r = score_region(region, &members)?;
        r.color = ctx.region_thresholds.color_of(r.persisted);
        region_cards.push(r);
    }
    layer_cards.extend(dc_cards);
    layer_cards.extend(region_cards);
    Ok(layer_cards)
}

/// Apply `actions` in order to a copy of the snapshot and report before/after
/// cards for every affected layer, datacenter and region.
pub fn evaluate(ctx: &WhatIfContext<'_>, actions: &[Action]) -> Result<WhatIfResult> {
    let applied = apply_actions(ctx, actions)?;
    let before = cards_for(ctx, ctx.fleet, ctx.hazards, &applied.layers)?;
    let after = cards_for(ctx, &applied.fleet, &applied.hazards, &applied.layers)?;
    let safe_to_remove = if applied.drained_layers.is_empty() {
        None
    } else {
        Some(
            after
                .iter()
                .filter(|c| c.scope == Scope::Layer)
                .all(|c| !applied.drained_layers.contains(&c.scope_id) || c.es >= 0.0),
        )
    };
    Ok(WhatIfResult {
        before,
        after,
        safe_to_remove,
    })
}
