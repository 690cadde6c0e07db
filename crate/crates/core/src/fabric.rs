//! Fleet model: regions, datacenters, Clos layers and their capacity elements.
//!
//! Capacities are integer units (1 unit = 1 Gbps). A layer's available
//! capacity counts only elements that are `up`; failed and drained elements
//! contribute nothing. All values are plain data and are never mutated in
//! place by public operations: [`FabricTopology::apply_state_change`] returns
//! a modified copy.

use std::collections::{HashMap, HashSet};
use std::fmt;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Device,
    Link,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementState {
    Up,
    Failed,
    /// Intentionally removed from service. Not an incident.
    Drained,
}

impl fmt::Display for ElementState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementState::Up => "up",
            ElementState::Failed => "failed",
            ElementState::Drained => "drained",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Tor,
    Agg,
    Spine,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Tor, Tier::Agg, Tier::Spine];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Tor => "tor",
            Tier::Agg => "agg",
            Tier::Spine => "spine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityElement {
    pub id: String,
    pub kind: ElementKind,
    pub capacity: u64,
    pub state: ElementState,
}

impl CapacityElement {
    pub fn new(id: impl Into<String>, kind: ElementKind, capacity: u64) -> Self {
        Self {
            id: id.into(),
            kind,
            capacity,
            state: ElementState::Up,
        }
    }

    pub fn with_state(mut self, state: ElementState) -> Self {
        self.state = state;
        self
    }

    pub fn is_up(&self) -> bool {
        self.state == ElementState::Up
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosLayer {
    pub id: String,
    pub tier: Tier,
    pub demand_forecast: u64,
    pub elements: Vec<CapacityElement>,
}

impl ClosLayer {
    pub fn installed_capacity(&self) -> u64 {
        self.elements.iter().map(|e| e.capacity).sum()
    }

    pub fn up_elements(&self) -> impl Iterator<Item = &CapacityElement> {
        self.elements.iter().filter(|e| e.is_up())
    }
}

/// Sum of capacity over elements that are currently up.
pub fn available_capacity(layer: &ClosLayer) -> u64 {
    layer.up_elements().map(|e| e.capacity).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Datacenter {
    pub id: String,
    pub region_id: String,
    pub layers: Vec<ClosLayer>,
}

/// Fleet-wide scope id of a layer, `"<dc>/<layer>"`.
pub fn layer_scope_id(dc_id: &str, layer_id: &str) -> String {
    format!("{dc_id}/{layer_id}")
}

impl Datacenter {
    pub fn layer(&self, layer_id: &str) -> Option<&ClosLayer> {
        self.layers.iter().find(|l| l.id == layer_id)
    }
}

/// Default creation timestamp for fleets that do not carry one.
pub fn default_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FabricTopology {
    pub regions: Vec<String>,
    pub datacenters: Vec<Datacenter>,
    #[serde(default = "default_epoch")]
    pub created_at: DateTime<Utc>,
}

/// Position of an element inside a topology: (datacenter, layer, element) indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementPos {
    pub dc: usize,
    pub layer: usize,
    pub element: usize,
}

/// A single broken invariant, with a path to the offending entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl FabricTopology {
    pub fn datacenter(&self, dc_id: &str) -> Option<&Datacenter> {
        self.datacenters.iter().find(|d| d.id == dc_id)
    }

    /// Resolve a layer by its fleet-wide scope id (`"<dc>/<layer>"`).
    pub fn layer_by_scope(&self, scope_id: &str) -> Option<(&Datacenter, &ClosLayer)> {
        let (dc_id, layer_id) = scope_id.split_once('/')?;
        let dc = self.datacenter(dc_id)?;
        dc.layer(layer_id).map(|l| (dc, l))
    }

    pub fn locate(&self, element_id: &str) -> Option<ElementPos> {
        for (d, dc) in self.datacenters.iter().enumerate() {
            for (l, layer) in dc.layers.iter().enumerate() {
                if let Some(e) = layer.elements.iter().position(|e| e.id == element_id) {
                    return Some(ElementPos {
                        dc: d,
                        layer: l,
                        element: e,
                    });
                }
            }
        }
        None
    }

    pub fn element(&self, pos: ElementPos) -> &CapacityElement {
        &self.datacenters[pos.dc].layers[pos.layer].elements[pos.element]
    }

    pub fn element_by_id(&self, element_id: &str) -> Option<&CapacityElement> {
        self.locate(element_id).map(|p| self.element(p))
    }

    /// Index of every element id to its position; built once for bulk updates.
    pub fn element_index(&self) -> HashMap<String, ElementPos> {
        let mut idx = HashMap::new();
        for (d, dc) in self.datacenters.iter().enumerate() {
            for (l, layer) in dc.layers.iter().enumerate() {
                for (e, el) in layer.elements.iter().enumerate() {
                    idx.insert(
                        el.id.clone(),
                        ElementPos {
                            dc: d,
                            layer: l,
                            element: e,
                        },
                    );
                }
            }
        }
        idx
    }

    pub fn elements(&self) -> impl Iterator<Item = &CapacityElement> {
        self.datacenters
            .iter()
            .flat_map(|d| d.layers.iter())
            .flat_map(|l| l.elements.iter())
    }

    /// Copy of this topology with one element's state replaced.
    pub fn apply_state_change(&self, element_id: &str, new_state: ElementState) -> Result<Self> {
        let pos = self
            .locate(element_id)
            .ok_or_else(|| Error::NotFound(format!("element {element_id}")))?;
        let mut next = self.clone();
        next.set_state_at(pos, new_state);
        Ok(next)
    }

    pub(crate) fn set_state_at(&mut self, pos: ElementPos, state: ElementState) {
        self.datacenters[pos.dc].layers[pos.layer].elements[pos.element].state = state;
    }

    /// Check every structural invariant. Returns one record per breach.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.regions.is_empty() {
            out.push(Violation::new("regions", "fleet has no regions"));
        }
        let mut region_set = HashSet::new();
        for (i, r) in self.regions.iter().enumerate() {
            if r.is_empty() {
                out.push(Violation::new(format!("regions[{i}]"), "empty region id"));
            }
            if !region_set.insert(r.as_str()) {
                out.push(Violation::new(
                    format!("regions[{i}]"),
                    format!("duplicate region id {r}"),
                ));
            }
        }

        let mut dc_ids = HashSet::new();
        let mut element_ids = HashSet::new();
        for (d, dc) in self.datacenters.iter().enumerate() {
            let dc_path = format!("datacenters[{d}]");
            if dc.id.is_empty() {
                out.push(Violation::new(&dc_path, "empty datacenter id"));
            } else if dc.id.contains('/') {
                out.push(Violation::new(
                    &dc_path,
                    format!("datacenter id {} contains '/'", dc.id),
                ));
            }
            if !dc_ids.insert(dc.id.as_str()) {
                out.push(Violation::new(&dc_path, format!("duplicate datacenter id {}", dc.id)));
            }
            if !region_set.contains(dc.region_id.as_str()) {
                out.push(Violation::new(
                    format!("{dc_path}.region_id"),
                    format!("datacenter {} references unknown region {}", dc.id, dc.region_id),
                ));
            }
            if dc.layers.is_empty() {
                out.push(Violation::new(
                    format!("{dc_path}.layers"),
                    format!("datacenter {} has no layers", dc.id),
                ));
            }
            let mut layer_ids = HashSet::new();
            for (l, layer) in dc.layers.iter().enumerate() {
                let layer_path = format!("{dc_path}.layers[{l}]");
                if layer.id.is_empty() || layer.id.contains('/') {
                    out.push(Violation::new(&layer_path, format!("invalid layer id {:?}", layer.id)));
                }
                if !layer_ids.insert(layer.id.as_str()) {
                    out.push(Violation::new(
                        &layer_path,
                        format!("duplicate layer id {} in datacenter {}", layer.id, dc.id),
                    ));
                }
                if layer.elements.is_empty() {
                    out.push(Violation::new(
                        format!("{layer_path}.elements"),
                        format!("layer {} has no elements", layer_scope_id(&dc.id, &layer.id)),
                    ));
                }
                for (e, el) in layer.elements.iter().enumerate() {
                    let el_path = format!("{layer_path}.elements[{e}]");
                    if el.id.is_empty() {
                        out.push(Violation::new(&el_path, "empty element id"));
                    }
                    if !element_ids.insert(el.id.as_str()) {
                        out.push(Violation::new(&el_path, format!("duplicate element id {}", el.id)));
                    }
                }
            }
        }
        out
    }

    /// Validation as a `Result`, for loaders.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}
