//! Layer loss distributions against exhaustive enumeration of failure sets.

use ansc_core::hazard::{
    layer_loss_distribution, layer_loss_distribution_with, layer_violation_probability, split_common_cause,
    violation_probability, Coupling,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Probability of exactly the failure set `mask` under the all-fail model.
fn all_fail_outcome(elements: &[(u64, f64)], beta: f64, mask: u32) -> f64 {
    let n = elements.len();
    let min = elements.iter().map(|e| e.1).fold(1.0, f64::min);
    let q = beta * min;
    let mut indep = 1.0;
    for (i, &(_, p)) in elements.iter().enumerate() {
        let pi = if q >= 1.0 { 0.0 } else { (p - q) / (1.0 - q) };
        indep *= if mask & (1 << i) != 0 { pi } else { 1.0 - pi };
    }
    let all = mask == (1u32 << n) - 1;
    (1.0 - q) * indep + if all { q } else { 0.0 }
}

/// Probability of exactly `mask` under the comonotone/independent mixture:
/// the shared draw produces set S iff min_{i in S} p_i > U >= max_{j not in S} p_j.
fn comonotone_outcome(elements: &[(u64, f64)], beta: f64, mask: u32) -> f64 {
    let mut indep = 1.0;
    let mut lo_in: f64 = 1.0;
    let mut hi_out: f64 = 0.0;
    for (i, &(_, p)) in elements.iter().enumerate() {
        if mask & (1 << i) != 0 {
            indep *= p;
            lo_in = lo_in.min(p);
        } else {
            indep *= 1.0 - p;
            hi_out = hi_out.max(p);
        }
    }
    (1.0 - beta) * indep + beta * (lo_in - hi_out).max(0.0)
}

fn enumerate(elements: &[(u64, f64)], beta: f64, coupling: Coupling) -> BTreeMap<u64, f64> {
    let mut out = BTreeMap::new();
    for mask in 0u32..(1 << elements.len()) {
        let loss: u64 = elements
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, e)| e.0)
            .sum();
        let p = match coupling {
            Coupling::AllFail => all_fail_outcome(elements, beta, mask),
            Coupling::Comonotone => comonotone_outcome(elements, beta, mask),
        };
        *out.entry(loss).or_insert(0.0) += p;
    }
    out
}

fn random_layer(rng: &mut ChaCha8Rng, max_n: usize) -> Vec<(u64, f64)> {
    let n = rng.random_range(1..=max_n);
    (0..n)
        .map(|_| (rng.random_range(1..=60u64), rng.random_range(0.0..0.6)))
        .collect()
}

fn assert_matches(elements: &[(u64, f64)], beta: f64, coupling: Coupling) {
    let dp = layer_loss_distribution_with(elements, beta, coupling).unwrap();
    dp.check().unwrap();
    let oracle = enumerate(elements, beta, coupling);
    for (&loss, &p) in &oracle {
        let got = dp.prob_of(loss);
        assert!(
            (got - p).abs() <= 1e-12,
            "{coupling:?} beta={beta} loss={loss}: {got} vs {p}"
        );
    }
    for &s in &dp.support {
        assert!(oracle.contains_key(&s), "spurious support point {s}");
    }
}

#[test]
fn ten_heterogeneous_elements_beta_015() {
    let elements = [
        (10, 0.05),
        (25, 0.12),
        (40, 0.01),
        (7, 0.3),
        (13, 0.2),
        (55, 0.08),
        (32, 0.15),
        (18, 0.02),
        (9, 0.4),
        (21, 0.11),
    ];
    for coupling in [Coupling::AllFail, Coupling::Comonotone] {
        assert_matches(&elements, 0.15, coupling);
    }
}

#[test]
fn random_layers_up_to_15_elements() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA115);
    for _ in 0..60 {
        let layer = random_layer(&mut rng, 15);
        for beta in [0.0, 0.15, 0.5, 1.0] {
            for coupling in [Coupling::AllFail, Coupling::Comonotone] {
                assert_matches(&layer, beta, coupling);
            }
        }
    }
}

#[test]
fn violation_tail_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..40 {
        let layer = random_layer(&mut rng, 12);
        let total: u64 = layer.iter().map(|e| e.0).sum();
        let beta = [0.0, 0.15, 0.5, 1.0][rng.random_range(0..4)];
        let oracle = enumerate(&layer, beta, Coupling::AllFail);
        let c_avail = total;
        let c_req = rng.random_range(0..=total + 5);
        let expected: f64 = if c_avail < c_req {
            1.0
        } else {
            oracle
                .iter()
                .filter(|(l, _)| **l > c_avail - c_req)
                .map(|(_, p)| p)
                .sum()
        };
        let dp = layer_loss_distribution(&layer, beta).unwrap();
        assert!((violation_probability(&dp, c_avail, c_req) - expected).abs() <= 1e-12);
    }
}

#[test]
fn beta_zero_uniform_capacity_is_poisson_binomial() {
    let p = [0.1, 0.25, 0.05, 0.4, 0.3, 0.15, 0.2];
    let unit = 40;
    let elements: Vec<(u64, f64)> = p.iter().map(|&x| (unit, x)).collect();
    let d = layer_loss_distribution_with(&elements, 0.0, Coupling::Comonotone).unwrap();
    // pmf of the failure count by enumeration of subsets
    let mut pmf = vec![0.0; p.len() + 1];
    for mask in 0u32..(1 << p.len()) {
        let mut prob = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            prob *= if mask & (1 << i) != 0 { pi } else { 1.0 - pi };
        }
        pmf[mask.count_ones() as usize] += prob;
    }
    for (k, &expected) in pmf.iter().enumerate() {
        assert!((d.prob_of(k as u64 * unit) - expected).abs() < 1e-14);
    }
    assert!(d.support.iter().all(|s| s % unit == 0));
}

#[test]
fn marginals_survive_the_mixture_by_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 200_000;
    for _ in 0..5 {
        let p: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..0.5)).collect();
        let beta: f64 = rng.random_range(0.0..=1.0);
        let (q, p_ind) = split_common_cause(&p, beta).unwrap();
        let mut fails = vec![0usize; p.len()];
        for _ in 0..draws {
            let common = rng.random::<f64>() < q;
            for (i, &pi) in p_ind.iter().enumerate() {
                if common || rng.random::<f64>() < pi {
                    fails[i] += 1;
                }
            }
        }
        for (i, &pi) in p.iter().enumerate() {
            let est = fails[i] as f64 / draws as f64;
            let sd = (pi * (1.0 - pi) / draws as f64).sqrt();
            assert!((est - pi).abs() < 5.0 * sd, "element {i}: {est} vs {pi}");
        }
    }
}

proptest! {
    #[test]
    fn split_identity_is_exact(
        p in prop::collection::vec(0.0f64..=1.0, 1..20),
        beta in 0.0f64..=1.0,
    ) {
        let (q, p_ind) = split_common_cause(&p, beta).unwrap();
        for (pi, ind) in p.iter().zip(&p_ind) {
            prop_assert!((q + (1.0 - q) * ind - pi).abs() <= 1e-12);
        }
    }

    #[test]
    fn comonotone_violation_is_monotone(
        layer in prop::collection::vec((1u64..50, 0.0f64..0.7), 1..14),
        beta in 0.0f64..=1.0,
        demand_frac in 0.0f64..1.2,
        bump_idx in any::<prop::sample::Index>(),
        bump in 0.0f64..0.3,
    ) {
        let total: u64 = layer.iter().map(|e| e.0).sum();
        let c_req = (demand_frac * total as f64) as u64;
        let base = layer_violation_probability(&layer, beta, Coupling::Comonotone, total, c_req).unwrap();

        let mut worse = layer.clone();
        let i = bump_idx.index(worse.len());
        worse[i].1 = (worse[i].1 + bump).min(1.0);
        let raised = layer_violation_probability(&worse, beta, Coupling::Comonotone, total, c_req).unwrap();
        prop_assert!(raised >= base - 1e-12);

        let more_demand = layer_violation_probability(&layer, beta, Coupling::Comonotone, total, c_req + 1).unwrap();
        prop_assert!(more_demand >= base - 1e-12);

        let more_avail = layer_violation_probability(&layer, beta, Coupling::Comonotone, total + 1, c_req).unwrap();
        prop_assert!(more_avail <= base + 1e-12);
    }
}
