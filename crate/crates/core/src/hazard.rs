//! Per-element failure probabilities and layer-level capacity-loss distributions.
//!
//! Element hazards come from a rate estimate `k / exposure` (floored at
//! `min_rate_per_year`), optionally multiplied for recently maintained
//! elements, turned into a horizon probability through exponential survival.
//!
//! Layer aggregation mixes a dependent branch with an independent branch.
//! Two couplings are available:
//!
//! * [`Coupling::AllFail`]: with probability `q_cc = beta * min_i p_i` every
//!   element fails together; otherwise element `i` fails independently with
//!   `(p_i - q_cc) / (1 - q_cc)`.
//! * [`Coupling::Comonotone`]: with probability `beta` all elements share one
//!   stress draw `U ~ U(0,1)` and element `i` fails iff `U < p_i`; otherwise
//!   they fail independently with `p_i`.
//!
//! Both preserve every element's marginal failure probability exactly. Only
//! the comonotone coupling is stochastically monotone in each `p_i`, which is
//! why scoring defaults to it.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fabric::FabricTopology;

/// `cause` tag marking a planned maintenance window rather than an outage.
pub const MAINTENANCE_CAUSE: &str = "maintenance";

const DAYS_PER_YEAR: f64 = 365.0;
const PRUNE_BELOW: f64 = 1e-15;
const RENORMALIZE_DRIFT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidentRecord {
    pub element_id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub cause: String,
}

impl IncidentRecord {
    pub fn is_maintenance(&self) -> bool {
        self.cause == MAINTENANCE_CAUSE
    }

    pub fn check(&self) -> Result<()> {
        if self.element_id.is_empty() {
            return Err(Error::domain("incident with empty element_id"));
        }
        if self.end < self.start {
            return Err(Error::domain(format!(
                "incident for {} ends before it starts",
                self.element_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditionWeights {
    pub maintenance_multiplier: f64,
    pub maintenance_window_days: u32,
    pub min_rate_per_year: f64,
}

impl Default for ConditionWeights {
    fn default() -> Self {
        Self {
            maintenance_multiplier: 2.0,
            maintenance_window_days: 14,
            min_rate_per_year: 1e-4,
        }
    }
}

impl ConditionWeights {
    pub fn check(&self) -> Result<()> {
        if !(self.maintenance_multiplier >= 1.0) || !self.maintenance_multiplier.is_finite() {
            return Err(Error::config("maintenance_multiplier must be >= 1"));
        }
        if !(self.min_rate_per_year > 0.0) || !self.min_rate_per_year.is_finite() {
            return Err(Error::config("min_rate_per_year must be > 0"));
        }
        Ok(())
    }

    /// Horizon probability of an element with no incident history.
    pub fn floor_probability(&self, horizon_years: f64) -> f64 {
        -(-self.min_rate_per_year * horizon_years).exp_m1()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementHazard {
    pub element_id: String,
    pub rate_per_year: f64,
    pub p_fail_horizon: f64,
}

/// Estimate one element's failure probability over `horizon_years`.
///
/// Maintenance records in `history` are not counted as incidents.
pub fn estimate_failure_prob(
    history: &[IncidentRecord],
    element_id: &str,
    exposure_years: f64,
    horizon_years: f64,
    weights: &ConditionWeights,
    recently_maintained: bool,
) -> Result<ElementHazard> {
    let k = history
        .iter()
        .filter(|r| r.element_id == element_id && !r.is_maintenance())
        .count();
    hazard_from_count(
        element_id,
        k,
        exposure_years,
        horizon_years,
        weights,
        recently_maintained,
    )
}

pub fn hazard_from_count(
    element_id: &str,
    incidents: usize,
    exposure_years: f64,
    horizon_years: f64,
    weights: &ConditionWeights,
    recently_maintained: bool,
) -> Result<ElementHazard> {
    if !(exposure_years > 0.0) || !exposure_years.is_finite() {
        return Err(Error::domain(format!(
            "exposure_years must be > 0, got {exposure_years}"
        )));
    }
    if !(horizon_years > 0.0) || !horizon_years.is_finite() {
        return Err(Error::domain(format!("horizon_years must be > 0, got {horizon_years}")));
    }
    let rate = (incidents as f64 / exposure_years).max(weights.min_rate_per_year);
    let weight = if recently_maintained {
        weights.maintenance_multiplier
    } else {
        1.0
    };
    // -expm1 keeps precision for the tiny floor probabilities
    let p = -(-rate * weight * horizon_years).exp_m1();
    Ok(ElementHazard {
        element_id: element_id.to_string(),
        rate_per_year: rate,
        p_fail_horizon: p,
    })
}

/// Failure probabilities for every element of a fleet at one instant.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HazardTable {
    pub elements: BTreeMap<String, ElementHazard>,
    /// Probability used for elements absent from the table.
    pub default_p: f64,
}

impl HazardTable {
    pub fn p_fail(&self, element_id: &str) -> f64 {
        self.elements
            .get(element_id)
            .map(|h| h.p_fail_horizon)
            .unwrap_or(self.default_p)
    }

    pub fn insert(&mut self, hazard: ElementHazard) {
        self.elements.insert(hazard.element_id.clone(), hazard);
    }
}

/// Incident history indexed by element for repeated windowed queries.
#[derive(Debug, Clone, Default)]
pub struct IncidentIndex {
    failures: HashMap<String, Vec<DateTime<Utc>>>,
    maintenance: HashMap<String, Vec<DateTime<Utc>>>,
}

impl IncidentIndex {
    pub fn new(history: &[IncidentRecord]) -> Self {
        let mut idx = Self::default();
        for r in history {
            idx.push(r);
        }
        idx.sort();
        idx
    }

    fn push(&mut self, r: &IncidentRecord) {
        let bucket = if r.is_maintenance() {
            &mut self.maintenance
        } else {
            &mut self.failures
        };
        bucket.entry(r.element_id.clone()).or_default().push(r.start);
    }

    fn sort(&mut self) {
        for v in self.failures.values_mut().chain(self.maintenance.values_mut()) {
            v.sort();
        }
    }

    /// Add one record, keeping its element's list sorted.
    pub fn insert(&mut self, r: &IncidentRecord) {
        let bucket = if r.is_maintenance() {
            &mut self.maintenance
        } else {
            &mut self.failures
        };
        let list = bucket.entry(r.element_id.clone()).or_default();
        let at = list.partition_point(|t| *t <= r.start);
        list.insert(at, r.start);
    }

    /// Starts falling in the half-open window `(from, to]`.
    fn count_in(list: Option<&Vec<DateTime<Utc>>>, from: DateTime<Utc>, to: DateTime<Utc>) -> usize {
        let Some(v) = list else { return 0 };
        let lo = v.partition_point(|t| *t <= from);
        let hi = v.partition_point(|t| *t <= to);
        hi.saturating_sub(lo)
    }

    pub fn failures_in(&self, element_id: &str, from: DateTime<Utc>, to: DateTime<Utc>) -> usize {
        Self::count_in(self.failures.get(element_id), from, to)
    }

    pub fn maintained_in(&self, element_id: &str, from: DateTime<Utc>, to: DateTime<Utc>) -> bool {
        Self::count_in(self.maintenance.get(element_id), from, to) > 0
    }
}

/// Trailing-window hazard estimate for every element of `fleet` at `at`.
pub fn estimate_hazards(
    fleet: &FabricTopology,
    index: &IncidentIndex,
    at: DateTime<Utc>,
    window_days: u32,
    horizon_years: f64,
    weights: &ConditionWeights,
) -> Result<HazardTable> {
    if window_days == 0 {
        return Err(Error::config("history window must be at least one day"));
    }
    let from = at - Duration::days(window_days as i64);
    let maint_from = at - Duration::days(weights.maintenance_window_days as i64);
    let exposure = window_days as f64 / DAYS_PER_YEAR;
    let mut table = HazardTable {
        elements: BTreeMap::new(),
        default_p: weights.floor_probability(horizon_years),
    };
    for el in fleet.elements() {
        let k = index.failures_in(&el.id, from, at);
        let maintained = weights.maintenance_window_days > 0 && index.maintained_in(&el.id, maint_from, at);
        table.insert(hazard_from_count(
            &el.id,
            k,
            exposure,
            horizon_years,
            weights,
            maintained,
        )?);
    }
    Ok(table)
}

/// How dependence between elements of one layer is modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// All-fail branch with probability `beta * min p`.
    AllFail,
    /// `beta`-mixture of a shared-stress (comonotone) draw and independence.
    #[default]
    Comonotone,
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must lie in [0,1], got {p}")))
    }
}

/// Split marginals into a common-cause probability and conditional
/// independent probabilities such that `q + (1 - q) * p_ind[i] == p[i]`.
pub fn split_common_cause(p: &[f64], beta: f64) -> Result<(f64, Vec<f64>)> {
    if p.is_empty() {
        return Err(Error::domain("empty probability list"));
    }
    check_probability(beta, "beta")?;
    for &pi in p {
        check_probability(pi, "p_fail")?;
    }
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    let q = beta * min;
    if q >= 1.0 {
        return Ok((1.0, vec![0.0; p.len()]));
    }
    let p_ind = p.iter().map(|&pi| ((pi - q) / (1.0 - q)).clamp(0.0, 1.0)).collect();
    Ok((q, p_ind))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDistribution {
    pub support: Vec<u64>,
    pub probs: Vec<f64>,
}

impl LossDistribution {
    pub fn point(loss: u64) -> Self {
        Self {
            support: vec![loss],
            probs: vec![1.0],
        }
    }

    /// Build from a dense vector indexed by loss, pruning negligible entries.
    fn from_dense(dense: &[f64]) -> Self {
        let mut support = Vec::new();
        let mut probs = Vec::new();
        for (loss, &p) in dense.iter().enumerate() {
            if p >= PRUNE_BELOW {
                support.push(loss as u64);
                probs.push(p);
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_DRIFT && total > 0.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        Self { support, probs }
    }

    pub fn prob_of(&self, loss: u64) -> f64 {
        match self.support.binary_search(&loss) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// P(loss > threshold).
    pub fn tail_above(&self, threshold: u64) -> f64 {
        let start = self.support.partition_point(|&s| s <= threshold);
        // f64's `Sum` starts from -0.0, which would leak into scores as "-0.0"
        self.probs[start..].iter().fold(0.0, |acc, p| acc + p)
    }

    pub fn check(&self) -> Result<()> {
        if self.support.len() != self.probs.len() {
            return Err(Error::domain("support and probs differ in length"));
        }
        if self.support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("support must be strictly ascending"));
        }
        if self.probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::domain("negative probability"));
        }
        if (self.total_mass() - 1.0).abs() > RENORMALIZE_DRIFT {
            return Err(Error::domain(format!("mass {} != 1", self.total_mass())));
        }
        Ok(())
    }
}

fn check_elements(elements: &[(u64, f64)], beta: f64) -> Result<()> {
    if elements.is_empty() {
        return Err(Error::domain("layer has no elements to aggregate"));
    }
    check_probability(beta, "beta")?;
    for &(_, p) in elements {
        check_probability(p, "p_fail")?;
    }
    Ok(())
}

/// Convolve independent Bernoulli capacity losses into `dense`, folding any
/// loss beyond `dense.len() - 1` into the last bucket.
fn convolve_independent(elements: impl Iterator<Item = (u64, f64)>, dense: &mut [f64]) {
    let last = dense.len() - 1;
    let mut reach = 0usize;
    for (cap, p) in elements {
        if p == 0.0 || cap == 0 {
            continue;
        }
        let cap = cap as usize;
        let new_reach = (reach + cap).min(last);
        for s in (0..=reach).rev() {
            let mass = dense[s];
            // the overflow bucket keeps its mass whichever way the element goes
            if mass == 0.0 || s == last {
                continue;
            }
            dense[s] = mass * (1.0 - p);
            dense[(s + cap).min(last)] += mass * p;
        }
        reach = new_reach;
    }
}

/// Outcomes of the comonotone branch: `(loss, probability)` with elements
/// failing in order of decreasing probability.
fn comonotone_outcomes(elements: &[(u64, f64)]) -> Vec<(u64, f64)> {
    let mut sorted: Vec<(u64, f64)> = elements.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out = Vec::with_capacity(sorted.len() + 1);
    let mut upper = 1.0;
    let mut loss = 0u64;
    for &(cap, p) in &sorted {
        out.push((loss, upper - p));
        upper = p;
        loss += cap;
    }
    out.push((loss, upper));
    out
}

/// Loss distribution under the all-fail common-cause model.
pub fn layer_loss_distribution(elements: &[(u64, f64)], beta: f64) -> Result<LossDistribution> {
    layer_loss_distribution_with(elements, beta, Coupling::AllFail)
}

/// Exact capacity-loss distribution of a layer, `O(N * C_total)`.
pub fn layer_loss_distribution_with(
    elements: &[(u64, f64)],
    beta: f64,
    coupling: Coupling,
) -> Result<LossDistribution> {
    check_elements(elements, beta)?;
    let total: u64 = elements.iter().map(|e| e.0).sum();
    let mut dense = vec![0.0; total as usize + 1];
    dense[0] = 1.0;
    match coupling {
        Coupling::AllFail => {
            let probs: Vec<f64> = elements.iter().map(|e| e.1).collect();
            let (q, p_ind) = split_common_cause(&probs, beta)?;
            convolve_independent(elements.iter().map(|e| e.0).zip(p_ind), &mut dense);
            dense.iter_mut().for_each(|m| *m *= 1.0 - q);
            dense[total as usize] += q;
        }
        Coupling::Comonotone => {
            convolve_independent(elements.iter().copied(), &mut dense);
            dense.iter_mut().for_each(|m| *m *= 1.0 - beta);
            for (loss, p) in comonotone_outcomes(elements) {
                dense[loss as usize] += beta * p;
            }
        }
    }
    Ok(LossDistribution::from_dense(&dense))
}

/// P(loss > c_avail - c_req); 1 when capacity is already below demand.
pub fn violation_probability(loss: &LossDistribution, c_avail: u64, c_req: u64) -> f64 {
    if c_avail < c_req {
        return 1.0;
    }
    loss.tail_above(c_avail - c_req).clamp(0.0, 1.0)
}

/// Violation probability without materializing the full distribution: the
/// convolution is truncated one unit past the headroom.
pub fn layer_violation_probability(
    elements: &[(u64, f64)],
    beta: f64,
    coupling: Coupling,
    c_avail: u64,
    c_req: u64,
) -> Result<f64> {
    if c_avail < c_req {
        return Ok(1.0);
    }
    if elements.is_empty() {
        // nothing left that can fail
        return Ok(0.0);
    }
    check_elements(elements, beta)?;
    let headroom = c_avail - c_req;
    let total: u64 = elements.iter().map(|e| e.0).sum();
    if total <= headroom {
        return Ok(0.0);
    }
    let mut dense = vec![0.0; headroom as usize + 2];
    dense[0] = 1.0;
    let over = headroom as usize + 1;
    let p = match coupling {
        Coupling::AllFail => {
            let probs: Vec<f64> = elements.iter().map(|e| e.1).collect();
            let (q, p_ind) = split_common_cause(&probs, beta)?;
            convolve_independent(elements.iter().map(|e| e.0).zip(p_ind), &mut dense);
            (1.0 - q) * dense[over] + q
        }
        Coupling::Comonotone => {
            convolve_independent(elements.iter().copied(), &mut dense);
            let shared: f64 = comonotone_outcomes(elements)
                .into_iter()
                .filter(|(loss, _)| *loss > headroom)
                .map(|(_, p)| p)
                .fold(0.0, |acc, p| acc + p);
            (1.0 - beta) * dense[over] + beta * shared
        }
    };
    Ok(p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn weights() -> ConditionWeights {
        ConditionWeights::default()
    }

    fn incident(id: &str, day: u32) -> IncidentRecord {
        let start = Utc.with_ymd_and_hms(2024, 1, day, 0, 0, 0).unwrap();
        IncidentRecord {
            element_id: id.into(),
            start,
            end: start + Duration::hours(6),
            cause: "optic".into(),
        }
    }

    #[test]
    fn zero_incidents_hit_the_floor() {
        let h = estimate_failure_prob(&[], "e", 5.0, 0.25, &weights(), false).unwrap();
        assert_eq!(h.rate_per_year, 1e-4);
        // 1 - exp(-2.5e-5)
        assert!(close(h.p_fail_horizon, 2.499_968_750_260e-5, 1e-15));
    }

    #[test]
    fn two_incidents_over_four_years() {
        let hist = vec![incident("e", 1), incident("e", 5), incident("other", 2)];
        let h = estimate_failure_prob(&hist, "e", 4.0, 0.25, &weights(), false).unwrap();
        assert_eq!(h.rate_per_year, 0.5);
        assert!(close(h.p_fail_horizon, 1.0 - (-0.125f64).exp(), 1e-15));
        assert!(close(h.p_fail_horizon, 0.11750, 5e-6));

        let m = estimate_failure_prob(&hist, "e", 4.0, 0.25, &weights(), true).unwrap();
        assert!(close(m.p_fail_horizon, 0.22120, 5e-6));
        assert!(m.p_fail_horizon > h.p_fail_horizon);
    }

    #[test]
    fn maintenance_records_are_not_incidents() {
        let mut r = incident("e", 3);
        r.cause = MAINTENANCE_CAUSE.into();
        let h = estimate_failure_prob(&[r], "e", 1.0, 0.25, &weights(), false).unwrap();
        assert_eq!(h.rate_per_year, 1e-4);
    }

    #[test]
    fn non_positive_exposure_or_horizon() {
        assert!(matches!(
            estimate_failure_prob(&[], "e", 0.0, 0.25, &weights(), false),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            estimate_failure_prob(&[], "e", 1.0, -1.0, &weights(), false),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn estimate_is_strictly_increasing_in_count_horizon_and_multiplier() {
        let w = weights();
        let p = |k, h, mult: f64, m| {
            let w = ConditionWeights {
                maintenance_multiplier: mult,
                ..w
            };
            hazard_from_count("e", k, 2.0, h, &w, m).unwrap().p_fail_horizon
        };
        assert!(p(1, 0.25, 2.0, false) < p(2, 0.25, 2.0, false));
        assert!(p(1, 0.25, 2.0, false) < p(1, 0.5, 2.0, false));
        assert!(p(1, 0.25, 2.0, true) < p(1, 0.25, 3.0, true));
    }

    #[test]
    fn split_endpoints_and_worked_case() {
        let (q, ind) = split_common_cause(&[0.1, 0.2], 0.0).unwrap();
        assert_eq!(q, 0.0);
        assert_eq!(ind, vec![0.1, 0.2]);

        let (q, ind) = split_common_cause(&[0.1, 0.2], 0.5).unwrap();
        assert!(close(q, 0.05, 1e-15));
        assert!(close(ind[0], 1.0 / 19.0, 1e-15));
        assert!(close(ind[1], 3.0 / 19.0, 1e-15));
        assert!(close(q + (1.0 - q) * ind[0], 0.1, 1e-15));

        let (q, ind) = split_common_cause(&[0.3, 0.3], 1.0).unwrap();
        assert!(close(q, 0.3, 1e-15));
        assert!(ind.iter().all(|p| close(*p, 0.0, 1e-15)));

        let (q, ind) = split_common_cause(&[1.0, 1.0], 1.0).unwrap();
        assert_eq!((q, ind), (1.0, vec![0.0, 0.0]));
    }

    #[test]
    fn split_rejects_out_of_range() {
        assert!(split_common_cause(&[1.2], 0.1).is_err());
        assert!(split_common_cause(&[0.2], -0.1).is_err());
        assert!(split_common_cause(&[f64::NAN], 0.1).is_err());
        assert!(split_common_cause(&[], 0.1).is_err());
    }

    #[test]
    fn two_element_independent_distribution() {
        for coupling in [Coupling::AllFail, Coupling::Comonotone] {
            let d = layer_loss_distribution_with(&[(10, 0.1), (10, 0.2)], 0.0, coupling).unwrap();
            assert_eq!(d.support, vec![0, 10, 20]);
            assert!(close(d.probs[0], 0.72, 1e-15));
            assert!(close(d.probs[1], 0.26, 1e-15));
            assert!(close(d.probs[2], 0.02, 1e-15));
        }
    }

    #[test]
    fn single_element_collapses() {
        for beta in [0.0, 0.15, 0.5, 1.0] {
            for coupling in [Coupling::AllFail, Coupling::Comonotone] {
                let d = layer_loss_distribution_with(&[(10, 0.3)], beta, coupling).unwrap();
                assert_eq!(d.support, vec![0, 10]);
                assert!(close(d.probs[0], 0.7, 1e-15), "{coupling:?} {beta} {d:?}");
                assert!(close(d.probs[1], 0.3, 1e-15));
            }
        }
    }

    #[test]
    fn equal_marginals_full_beta_is_common_mode_for_both() {
        for coupling in [Coupling::AllFail, Coupling::Comonotone] {
            let d = layer_loss_distribution_with(&[(5, 0.3), (7, 0.3)], 1.0, coupling).unwrap();
            assert_eq!(d.support, vec![0, 12]);
            assert!(close(d.probs[1], 0.3, 1e-15));
        }
    }

    #[test]
    fn empty_layer_is_a_domain_error() {
        assert!(layer_loss_distribution(&[], 0.1).is_err());
    }

    #[test]
    fn violation_probability_examples() {
        let d = LossDistribution {
            support: vec![0, 10],
            probs: vec![0.8, 0.2],
        };
        assert_eq!(violation_probability(&d, 10, 5), 0.2);
        assert_eq!(violation_probability(&d, 10, 12), 1.0);
        // an empty tail is +0, not -0
        assert!(violation_probability(&d, 40, 5).is_sign_positive());

        let d = layer_loss_distribution(&[(10, 0.1), (10, 0.2)], 0.0).unwrap();
        assert!(close(violation_probability(&d, 20, 15), 0.28, 1e-15));
    }

    #[test]
    fn truncated_tail_matches_full_distribution() {
        let elems = [(10, 0.1), (25, 0.05), (7, 0.3), (40, 0.02), (13, 0.2)];
        let total: u64 = elems.iter().map(|e| e.0).sum();
        for coupling in [Coupling::AllFail, Coupling::Comonotone] {
            for beta in [0.0, 0.15, 0.5, 1.0] {
                let d = layer_loss_distribution_with(&elems, beta, coupling).unwrap();
                for c_req in 0..=total + 3 {
                    let full = violation_probability(&d, total, c_req);
                    let fast = layer_violation_probability(&elems, beta, coupling, total, c_req).unwrap();
                    assert!(
                        close(full, fast, 1e-12),
                        "{coupling:?} beta={beta} c_req={c_req}: {full} vs {fast}"
                    );
                }
            }
        }
    }

    #[test]
    fn all_fail_coupling_is_not_monotone_in_the_minimum_probability() {
        // Three unit elements, headroom 0: any failure violates. Under the
        // all-fail model P(any) = 1 - prod(1-p_i) / (1-q)^2 with q = min p,
        // which falls when the minimum element gets worse.
        let base = [(1, 0.2), (1, 0.3), (1, 0.3)];
        let worse = [(1, 0.25), (1, 0.3), (1, 0.3)];
        let p0 = layer_violation_probability(&base, 1.0, Coupling::AllFail, 3, 3).unwrap();
        let p1 = layer_violation_probability(&worse, 1.0, Coupling::AllFail, 3, 3).unwrap();
        assert!(p1 < p0, "{p1} !< {p0}");

        let c0 = layer_violation_probability(&base, 1.0, Coupling::Comonotone, 3, 3).unwrap();
        let c1 = layer_violation_probability(&worse, 1.0, Coupling::Comonotone, 3, 3).unwrap();
        assert!(c1 >= c0);
    }

    #[test]
    fn index_counts_half_open_windows() {
        let hist = vec![incident("e", 1), incident("e", 10), incident("e", 20)];
        let idx = IncidentIndex::new(&hist);
        let t = |d| Utc.with_ymd_and_hms(2024, 1, d, 0, 0, 0).unwrap();
        assert_eq!(idx.failures_in("e", t(1), t(20)), 2);
        assert_eq!(idx.failures_in("e", t(1) - Duration::seconds(1), t(19)), 2);
        assert_eq!(idx.failures_in("missing", t(1), t(20)), 0);
    }
}
