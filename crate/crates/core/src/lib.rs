//! Probabilistic capacity-health scoring for Clos datacenter fabrics.
//!
//! The pipeline runs bottom-up:
//!
//! 1. [`hazard`] turns incident history into per-element failure probabilities
//!    and aggregates a layer into a capacity-loss distribution.
//! 2. [`scoring`] combines the safety margin and the probability of a
//!    shortfall into a score, escalates persistent risk, and rolls layers up
//!    to datacenters and regions.
//! 3. [`calibration`] maps scores to red/orange/amber/green under fleet-wide
//!    caps on how many sites each color may hold.
//!
//! [`simulator`] drives the pipeline over a synthetic fleet, [`whatif`]
//! evaluates remediation actions against a snapshot, and [`persistence`]
//! owns the file formats.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assess;
pub mod calibration;
pub mod error;
pub mod fabric;
pub mod hazard;
pub mod persistence;
pub mod scoring;
pub mod simulator;
pub mod whatif;

pub use error::{Error, Result};
