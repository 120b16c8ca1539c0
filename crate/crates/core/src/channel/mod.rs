//! Cell geometry, multipath synthesis, the cascaded surface channel and
//! per-UE throughput.
//!
//! The simulator is the only place that ever holds sub-channel matrices.
//! Everything downstream of [`network_metrics`] sees a [`MetricsSample`].

pub mod capacity;
pub mod matrix;
pub mod paths;
pub mod scenario;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::em::{reflection_vector, EmError, ReflectionCoefficient, RisPanel};
use crate::UeId;

pub use capacity::{sinr_proxy_db, ue_throughput};
pub use matrix::{effective_channel, link_matrix, LinkMatrix};
pub use paths::{sample_paths, LinkClass, LinkId, PathSet};
pub use scenario::{build_scenario, Band, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid scenario field `{field}`: {reason}")]
    InvalidScenario { field: String, reason: String },
    #[error("unknown link {0:?}")]
    UnknownLink(LinkId),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("link matrices evaluated at different frequencies")]
    FrequencyMismatch,
    #[error("reflection coefficient {0} exceeds unit magnitude")]
    NonPassiveReflection(usize),
    #[error("non-finite channel entries")]
    NonFinite,
    #[error("parameter `{name}` must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("panel has {got} elements, scenario surface has {expected}")]
    PanelMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Element(#[from] EmError),
}

/// Performance of one UE in one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeMetrics {
    pub ue_id: UeId,
    pub throughput_bps: f64,
    pub sinr_db: f64,
    pub band_center_hz: f64,
}

/// Feedback observed by the network for every UE at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSample {
    /// Epoch (or iteration) index at which the sample was taken.
    pub epoch: u64,
    pub ues: Vec<UeMetrics>,
}

impl MetricsSample {
    pub fn throughput(&self, ue: UeId) -> Option<f64> {
        self.ues
            .iter()
            .find(|m| m.ue_id == ue)
            .map(|m| m.throughput_bps)
    }

    /// Element-wise mean of several samples over the same UE set; the epoch
    /// of the first sample is kept.
    pub fn average(samples: &[MetricsSample]) -> Option<MetricsSample> {
        let first = samples.first()?;
        let n = samples.len() as f64;
        let ues = first
            .ues
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let (mut t, mut s) = (0.0, 0.0);
                for sample in samples {
                    t += sample.ues[i].throughput_bps;
                    s += sample.ues[i].sinr_db;
                }
                UeMetrics {
                    ue_id: m.ue_id,
                    throughput_bps: t / n,
                    sinr_db: s / n,
                    band_center_hz: m.band_center_hz,
                }
            })
            .collect();
        Some(MetricsSample {
            epoch: first.epoch,
            ues,
        })
    }
}

/// Sub-channels of every UE in one epoch, each evaluated at that UE's band
/// center. Independent of the surface state, so one instance serves any
/// number of configurations measured in the same epoch.
#[derive(Debug, Clone)]
pub struct EpochChannels {
    pub epoch: u64,
    pub per_ue: Vec<UeChannels>,
}

#[derive(Debug, Clone)]
pub struct UeChannels {
    pub band: Band,
    pub direct: LinkMatrix,
    pub bs_ris: LinkMatrix,
    pub ris_ue: LinkMatrix,
}

impl EpochChannels {
    pub fn compute(scenario: &Scenario, epoch: u64) -> Result<Self, ChannelError> {
        let realized = scenario.effective_epoch(epoch);
        let bs_ris_paths = sample_paths(scenario, LinkId::BsRis, realized)?;
        let per_ue = (0..scenario.ue_count())
            .map(|u| {
                let band = scenario.frequency_plan[u];
                let w = band.omega();
                let direct_paths = sample_paths(scenario, LinkId::BsUe(u), realized)?;
                let ris_ue_paths = sample_paths(scenario, LinkId::RisUe(u), realized)?;
                Ok(UeChannels {
                    band,
                    direct: link_matrix(scenario, &direct_paths, LinkId::BsUe(u), w)?,
                    bs_ris: link_matrix(scenario, &bs_ris_paths, LinkId::BsRis, w)?,
                    ris_ue: link_matrix(scenario, &ris_ue_paths, LinkId::RisUe(u), w)?,
                })
            })
            .collect::<Result<_, ChannelError>>()?;
        Ok(Self { epoch, per_ue })
    }

    /// Effective channel of UE index `u` for explicit reflection
    /// coefficients, or the direct link alone when `v` is `None`.
    pub fn ue_channel(
        &self,
        u: usize,
        v: Option<&[ReflectionCoefficient]>,
    ) -> Result<LinkMatrix, ChannelError> {
        let ch = &self.per_ue[u];
        match v {
            Some(v) => effective_channel(&ch.direct, &ch.bs_ris, &ch.ris_ue, v),
            None => Ok(ch.direct.clone()),
        }
    }

    /// Metrics for every UE with the surface in `panel`'s state, or without
    /// a surface when `panel` is `None`. All UEs see the same physical state.
    pub fn metrics(
        &self,
        scenario: &Scenario,
        panel: Option<&RisPanel>,
    ) -> Result<MetricsSample, ChannelError> {
        if let Some(p) = panel {
            if p.len() != scenario.ris_elements() {
                return Err(ChannelError::PanelMismatch {
                    got: p.len(),
                    expected: scenario.ris_elements(),
                });
            }
        }
        let budget = scenario.link_budget;
        let ues = self
            .per_ue
            .iter()
            .enumerate()
            .map(|(u, ch)| {
                let v = panel
                    .map(|p| reflection_vector(p, ch.band.omega()))
                    .transpose()?;
                let h = self.ue_channel(u, v.as_deref())?;
                Ok(UeMetrics {
                    ue_id: UeId(u as u32 + 1),
                    throughput_bps: ue_throughput(
                        &h,
                        budget.tx_power_w,
                        budget.noise_power_w,
                        ch.band.bandwidth_hz,
                    )?,
                    sinr_db: sinr_proxy_db(&h, budget.tx_power_w, budget.noise_power_w),
                    band_center_hz: ch.band.center_hz,
                })
            })
            .collect::<Result<_, ChannelError>>()?;
        Ok(MetricsSample {
            epoch: self.epoch,
            ues,
        })
    }
}

/// Per-UE metrics in `epoch` with the surface in `panel`'s state.
pub fn network_metrics(
    scenario: &Scenario,
    panel: Option<&RisPanel>,
    epoch: u64,
) -> Result<MetricsSample, ChannelError> {
    EpochChannels::compute(scenario, epoch)?.metrics(scenario, panel)
}
