//! Pooled reflecting-surface service: varactor element model, geometric
//! channel simulator, model-free surface optimizer, the control plane that
//! leases the surface to subscribers, a simulated RAN that closes the loop,
//! and the experiment harness.

// validators write `!(x >= 0.0)` so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod control;
pub mod em;
pub mod harness;
pub mod optimizer;
pub mod par;
pub mod ran;
pub mod rng;

use serde::{Deserialize, Serialize};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// 1-based UE identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UeId(pub u32);

impl std::fmt::Display for UeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
