//! Fleet-wide color normalization under per-color assignment caps.
//!
//! Calibration is rank based: the population is sorted by score (descending,
//! ties by scope id ascending) and the red, orange and amber segments take the
//! next `ceil(cap * n)` positions each. A threshold is the score at the end of
//! its segment, never below `score_floor`. Caps are ceilings, so a healthy
//! fleet can end up with nothing flagged.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::{ConditionWeights, Coupling};
use crate::scoring::{map_color, Color};

/// Fleet budgets plus the scoring knobs that travel with them in `budget.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    pub red_frac: f64,
    pub orange_frac: f64,
    pub amber_frac: f64,
    /// Audit slack in absolute fraction units (0.05 = 5 percentage points).
    pub tolerance: f64,
    pub score_floor: f64,
    /// Fraction of the year a scope may stay elevated before escalation.
    pub t_pers: f64,
    pub horizon_years: f64,
    pub beta: f64,
    pub kappa: f64,
    pub coupling: Coupling,
    pub weights: ConditionWeights,
    pub history_window_days: u32,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            red_frac: 0.05,
            orange_frac: 0.12,
            amber_frac: 0.20,
            tolerance: 0.05,
            score_floor: 0.05,
            t_pers: 0.10,
            horizon_years: 0.25,
            beta: 0.15,
            kappa: 0.5,
            coupling: Coupling::default(),
            weights: ConditionWeights::default(),
            history_window_days: 730,
        }
    }
}

impl BudgetConfig {
    pub fn check(&self) -> Result<()> {
        let unit = |v: f64, name: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in [0,1], got {v}")))
            }
        };
        unit(self.red_frac, "red_frac")?;
        unit(self.orange_frac, "orange_frac")?;
        unit(self.amber_frac, "amber_frac")?;
        unit(self.tolerance, "tolerance")?;
        unit(self.score_floor, "score_floor")?;
        unit(self.beta, "beta")?;
        if !(self.t_pers > 0.0 && self.t_pers <= 1.0) {
            return Err(Error::config(format!("t_pers must lie in (0,1], got {}", self.t_pers)));
        }
        if !(self.horizon_years > 0.0) || !self.horizon_years.is_finite() {
            return Err(Error::config("horizon_years must be > 0"));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::config("kappa must be >= 0"));
        }
        if self.history_window_days == 0 {
            return Err(Error::config("history_window_days must be > 0"));
        }
        self.weights.check()
    }

    pub fn cap(&self, color: Color) -> f64 {
        match color {
            Color::Red => self.red_frac,
            Color::Orange => self.orange_frac,
            Color::Amber => self.amber_frac,
            Color::Green => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Datacenter,
    Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub t_red: f64,
    pub t_orange: f64,
    pub t_amber: f64,
    pub calibrated_at: DateTime<Utc>,
    pub population: Population,
}

impl Thresholds {
    pub fn cuts(&self) -> (f64, f64, f64) {
        (self.t_red, self.t_orange, self.t_amber)
    }

    /// Score-only color lookup, used where no rank context exists (what-ifs).
    pub fn color_of(&self, persisted: f64) -> Color {
        map_color(persisted, self.cuts()).unwrap_or(Color::Green)
    }
}

/// Number of slots a cap grants in a population of `n`: `ceil(cap * n)`.
///
/// The small epsilon keeps products like `0.05 * 400` from rounding up to an
/// extra slot through representation error.
pub fn slots(cap: f64, n: usize) -> usize {
    let raw = (cap * n as f64 - 1e-9).ceil();
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(n)
    }
}

/// Thresholds plus the rank-based color of every member of the population.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub thresholds: Thresholds,
    /// Members in rank order (worst first) with their assigned color.
    pub ranked: Vec<(String, f64, Color)>,
}

impl Calibration {
    pub fn colors(&self) -> BTreeMap<String, Color> {
        self.ranked.iter().map(|(id, _, c)| (id.clone(), *c)).collect()
    }

    pub fn count(&self, color: Color) -> usize {
        self.ranked.iter().filter(|r| r.2 == color).count()
    }
}

fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Choose color thresholds for one population so that no color exceeds its cap.
pub fn calibrate(
    scores: &[(String, f64)],
    budget: &BudgetConfig,
    population: Population,
    at: DateTime<Utc>,
) -> Result<Calibration> {
    if scores.is_empty() {
        return Err(Error::domain("cannot calibrate an empty population"));
    }
    if let Some((id, s)) = scores.iter().find(|(_, s)| !(0.0..=1.0).contains(s)) {
        return Err(Error::domain(format!("score {s} of {id} outside [0,1]")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(rank_order);
    let n = sorted.len();

    let mut prev = 1.0f64;
    let mut start = 0usize;
    let mut segments = [(0usize, 0.0f64); 3];
    for (slot, cap) in [budget.red_frac, budget.orange_frac, budget.amber_frac]
        .into_iter()
        .enumerate()
    {
        let end = (start + slots(cap, n)).min(n);
        let t = if end > start {
            sorted[end - 1].1.max(budget.score_floor).min(prev)
        } else {
            prev
        };
        segments[slot] = (end, t);
        prev = t;
        start = end;
    }
    let [(red_end, t_red), (orange_end, t_orange), (amber_end, t_amber)] = segments;

    let ranked = sorted
        .into_iter()
        .enumerate()
        .map(|(i, (id, s))| {
            let color = if i < red_end && s >= t_red {
                Color::Red
            } else if i < orange_end && s >= t_orange {
                Color::Orange
            } else if i < amber_end && s >= t_amber {
                Color::Amber
            } else {
                Color::Green
            };
            (id, s, color)
        })
        .collect();

    Ok(Calibration {
        thresholds: Thresholds {
            t_red,
            t_orange,
            t_amber,
            calibrated_at: at,
            population,
        },
        ranked,
    })
}

/// One scope's color on one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub scope_id: String,
    pub date: NaiveDate,
    pub color: Color,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorAudit {
    pub color: Color,
    pub scope_days: usize,
    pub fraction: f64,
    pub cap: f64,
    /// cap + tolerance
    pub limit: f64,
    pub compliant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub total_scope_days: usize,
    pub colors: Vec<ColorAudit>,
    pub compliant: bool,
}

impl AuditReport {
    pub fn get(&self, color: Color) -> Option<&ColorAudit> {
        self.colors.iter().find(|c| c.color == color)
    }
}

/// Fraction of scope-days per flagged color against cap plus tolerance.
pub fn audit(assignments: &[Assignment], budget: &BudgetConfig) -> AuditReport {
    let total = assignments.len();
    let colors: Vec<ColorAudit> = [Color::Red, Color::Orange, Color::Amber]
        .into_iter()
        .map(|color| {
            let days = assignments.iter().filter(|a| a.color == color).count();
            let fraction = if total == 0 { 0.0 } else { days as f64 / total as f64 };
            let cap = budget.cap(color);
            let limit = cap + budget.tolerance;
            ColorAudit {
                color,
                scope_days: days,
                fraction,
                cap,
                limit,
                compliant: fraction <= limit + 1e-12,
            }
        })
        .collect();
    let compliant = colors.iter().all(|c| c.compliant);
    AuditReport {
        total_scope_days: total,
        colors,
        compliant,
    }
}
