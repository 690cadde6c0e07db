//! Safety margin, raw and persistence-adjusted scores, colors, and the
//! worst-case roll-up from layers to datacenters to regions.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};

use crate::calibration::BudgetConfig;
use crate::error::{Error, Result};
use crate::fabric::{available_capacity, layer_scope_id, ClosLayer, Datacenter};
use crate::hazard::{layer_violation_probability, Coupling, HazardTable};

const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Green,
    Amber,
    Orange,
    Red,
}

impl Color {
    pub fn as_str(self) -> &'static str {
        match self {
            Color::Green => "green",
            Color::Amber => "amber",
            Color::Orange => "orange",
            Color::Red => "red",
        }
    }

    pub fn is_elevated(self) -> bool {
        self >= Color::Amber
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Layer,
    Datacenter,
    Region,
}

/// Serialize ES with `null` standing in for the +infinity sentinel.
mod es_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreCard {
    pub scope: Scope,
    pub scope_id: String,
    #[serde(with = "es_serde")]
    pub es: f64,
    pub p_fail: f64,
    pub raw: f64,
    pub persisted: f64,
    pub color: Color,
    pub at: DateTime<Utc>,
}

impl ScoreCard {
    fn relabel(&self, scope: Scope, scope_id: &str) -> ScoreCard {
        ScoreCard {
            scope,
            scope_id: scope_id.to_string(),
            ..self.clone()
        }
    }
}

/// `(c_avail - c_req) / c_req`.
///
/// With no demand the margin is `+inf` when any capacity remains and `0`
/// otherwise. Integer inputs rule out negative capacities.
pub fn effective_safety_margin(c_avail: u64, c_req: u64) -> f64 {
    if c_req == 0 {
        return if c_avail > 0 { f64::INFINITY } else { 0.0 };
    }
    // both operands are exact below 2^53, so this is a single rounding
    (c_avail as f64 - c_req as f64) / c_req as f64
}

/// Raw score: 1 when capacity is already short, otherwise the violation probability.
pub fn raw_score(es: f64, p_viol: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_viol) {
        return Err(Error::domain(format!("violation probability {p_viol} outside [0,1]")));
    }
    Ok(if es < 0.0 { 1.0 } else { p_viol })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceState {
    pub scope_id: String,
    pub elevated_days_ytd: f64,
    pub year: i32,
}

/// Escalate `raw` once elevated time exceeds the yearly budget `t_pers`.
pub fn persistence_adjust(raw: f64, state: &PersistenceState, t_pers: f64, kappa: f64) -> Result<f64> {
    if !(t_pers > 0.0) {
        return Err(Error::config(format!("t_pers must be > 0, got {t_pers}")));
    }
    if !(0.0..=1.0).contains(&raw) {
        return Err(Error::domain(format!("raw score {raw} outside [0,1]")));
    }
    let budget_days = DAYS_PER_YEAR * t_pers;
    let overage = (state.elevated_days_ytd - budget_days).max(0.0) / budget_days;
    Ok((raw * (1.0 + kappa * overage)).min(1.0))
}

/// Per-scope elevated-time bookkeeping. Single writer per scope.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistenceBook {
    pub states: BTreeMap<String, PersistenceState>,
}

impl PersistenceBook {
    /// State for `scope_id` as of `at`; a new calendar year starts from zero.
    pub fn state(&self, scope_id: &str, at: DateTime<Utc>) -> PersistenceState {
        match self.states.get(scope_id) {
            Some(s) if s.year == at.year() => s.clone(),
            _ => PersistenceState {
                scope_id: scope_id.to_string(),
                elevated_days_ytd: 0.0,
                year: at.year(),
            },
        }
    }

    pub fn record(&mut self, scope_id: &str, at: DateTime<Utc>, color: Color, tick_days: f64) {
        let mut s = self.state(scope_id, at);
        if color.is_elevated() {
            s.elevated_days_ytd = (s.elevated_days_ytd + tick_days).min(366.0);
        }
        self.states.insert(scope_id.to_string(), s);
    }
}

/// Color step function; bounds are inclusive upward.
pub fn map_color(persisted: f64, thresholds: (f64, f64, f64)) -> Result<Color> {
    let (t_red, t_orange, t_amber) = thresholds;
    if !(0.0 <= t_amber && t_amber <= t_orange && t_orange <= t_red && t_red <= 1.0) {
        return Err(Error::config(format!(
            "thresholds must satisfy 0 <= amber <= orange <= red <= 1, got ({t_red}, {t_orange}, {t_amber})"
        )));
    }
    Ok(if persisted >= t_red {
        Color::Red
    } else if persisted >= t_orange {
        Color::Orange
    } else if persisted >= t_amber {
        Color::Amber
    } else {
        Color::Green
    })
}

#[derive(Debug, Clone, PartialEq)]
struct MemoEntry {
    elements: Vec<(u64, u64)>,
    beta: u64,
    coupling: Coupling,
    c_avail: u64,
    c_req: u64,
    p: f64,
}

/// Last violation-probability inputs and result per layer scope.
///
/// Day-to-day most layers see identical inputs, so a stepping simulation
/// skips the convolution for them. Results are bit-identical to recomputing.
#[derive(Debug, Default)]
pub struct LayerMemo {
    last: Mutex<HashMap<String, MemoEntry>>,
}

impl LayerMemo {
    fn violation(
        &self,
        scope_id: &str,
        elements: &[(u64, f64)],
        budget: &BudgetConfig,
        c_avail: u64,
        c_req: u64,
    ) -> Result<f64> {
        let key: Vec<(u64, u64)> = elements.iter().map(|&(c, p)| (c, p.to_bits())).collect();
        let matches = |e: &MemoEntry| {
            e.elements == key
                && e.beta == budget.beta.to_bits()
                && e.coupling == budget.coupling
                && e.c_avail == c_avail
                && e.c_req == c_req
        };
        if let Some(e) = self
            .last
            .lock()
            .expect("memo lock")
            .get(scope_id)
            .filter(|e| matches(e))
        {
            return Ok(e.p);
        }
        let p = layer_violation_probability(elements, budget.beta, budget.coupling, c_avail, c_req)?;
        let entry = MemoEntry {
            elements: key,
            beta: budget.beta.to_bits(),
            coupling: budget.coupling,
            c_avail,
            c_req,
            p,
        };
        self.last.lock().expect("memo lock").insert(scope_id.to_string(), entry);
        Ok(p)
    }
}

/// Score one layer. The card's color is left green; colors come from calibration.
pub fn score_layer(
    dc_id: &str,
    layer: &ClosLayer,
    hazards: &HazardTable,
    book: &PersistenceBook,
    budget: &BudgetConfig,
    at: DateTime<Utc>,
) -> Result<ScoreCard> {
    score_layer_in(dc_id, layer, hazards, book, budget, at, None)
}

fn score_layer_in(
    dc_id: &str,
    layer: &ClosLayer,
    hazards: &HazardTable,
    book: &PersistenceBook,
    budget: &BudgetConfig,
    at: DateTime<Utc>,
    memo: Option<&LayerMemo>,
) -> Result<ScoreCard> {
    let scope_id = layer_scope_id(dc_id, &layer.id);
    let c_avail = available_capacity(layer);
    let c_req = layer.demand_forecast;
    let es = effective_safety_margin(c_avail, c_req);
    let elements: Vec<(u64, f64)> = layer
        .up_elements()
        .map(|e| (e.capacity, hazards.p_fail(&e.id)))
        .collect();
    let p_fail = match memo {
        Some(m) => m.violation(&scope_id, &elements, budget, c_avail, c_req)?,
        None => layer_violation_probability(&elements, budget.beta, budget.coupling, c_avail, c_req)?,
    };
    let raw = raw_score(es, p_fail)?;
    let persisted = persistence_adjust(raw, &book.state(&scope_id, at), budget.t_pers, budget.kappa)?;
    Ok(ScoreCard {
        scope: Scope::Layer,
        scope_id,
        es,
        p_fail,
        raw,
        persisted,
        color: Color::Green,
        at,
    })
}

/// Worst-case roll-up of member cards into a parent scope.
///
/// `persisted`, `raw` and `p_fail` are maxima over members; `es` and `color`
/// come from the arg-max of `persisted`, ties going to the smaller scope id.
/// Returns the card and the arg-max member index.
pub fn aggregate(scope: Scope, scope_id: &str, members: &[ScoreCard]) -> Result<(ScoreCard, usize)> {
    let (best, _) = members
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            b.persisted
                .total_cmp(&a.persisted)
                .then_with(|| a.scope_id.cmp(&b.scope_id))
        })
        .ok_or_else(|| Error::domain(format!("{scope_id} has no members to aggregate")))?;
    let mut card = members[best].relabel(scope, scope_id);
    card.raw = members.iter().map(|m| m.raw).fold(0.0, f64::max);
    card.p_fail = members.iter().map(|m| m.p_fail).fold(0.0, f64::max);
    Ok((card, best))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatacenterScore {
    pub card: ScoreCard,
    pub layers: Vec<ScoreCard>,
    /// Index into `layers` of the layer that set the datacenter score.
    pub worst_layer: usize,
}

pub fn score_datacenter(
    dc: &Datacenter,
    hazards: &HazardTable,
    book: &PersistenceBook,
    budget: &BudgetConfig,
    at: DateTime<Utc>,
) -> Result<DatacenterScore> {
    score_datacenter_in(dc, hazards, book, budget, at, None)
}

pub(crate) fn score_datacenter_in(
    dc: &Datacenter,
    hazards: &HazardTable,
    book: &PersistenceBook,
    budget: &BudgetConfig,
    at: DateTime<Utc>,
    memo: Option<&LayerMemo>,
) -> Result<DatacenterScore> {
    let layers = dc
        .layers
        .iter()
        .map(|l| score_layer_in(&dc.id, l, hazards, book, budget, at, memo))
        .collect::<Result<Vec<_>>>()?;
    let (card, worst_layer) = aggregate(Scope::Datacenter, &dc.id, &layers)?;
    Ok(DatacenterScore {
        card,
        layers,
        worst_layer,
    })
}

pub fn score_region(region_id: &str, dcs: &[ScoreCard]) -> Result<ScoreCard> {
    aggregate(Scope::Region, region_id, dcs).map(|(c, _)| c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub at: DateTime<Utc>,
    pub persisted: f64,
    pub color: Color,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub scope_id: String,
    pub points: Vec<SeriesPoint>,
}

impl ScoreSeries {
    pub fn new(scope_id: impl Into<String>) -> Self {
        Self {
            scope_id: scope_id.into(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, point: SeriesPoint) -> Result<()> {
        if let Some(last) = self.points.last() {
            if point.at <= last.at {
                return Err(Error::OutOfOrder {
                    scope_id: self.scope_id.clone(),
                    message: format!("{} is not after {}", point.at, last.at),
                });
            }
        }
        self.points.push(point);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posture {
    /// Maximum persisted score in the window.
    pub ceiling: f64,
    /// Last minus first persisted score in the window; negative is improving.
    pub movement: f64,
}

pub fn posture_and_movement(series: &ScoreSeries, window: usize) -> Result<Posture> {
    if window < 2 {
        return Err(Error::domain("posture window must cover at least 2 points"));
    }
    if series.points.len() < window {
        return Err(Error::domain(format!(
            "series {} has {} points, window needs {window}",
            series.scope_id,
            series.points.len()
        )));
    }
    let tail = &series.points[series.points.len() - window..];
    let ceiling = tail.iter().map(|p| p.persisted).fold(f64::NEG_INFINITY, f64::max);
    let movement = tail[tail.len() - 1].persisted - tail[0].persisted;
    Ok(Posture { ceiling, movement })
}
