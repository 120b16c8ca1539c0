//! Scenario configuration document.
//!
//! A TOML document with one section per concern. Every key has a default, so
//! an empty document describes the reference cell; unknown keys anywhere are
//! rejected. The full schema with defaults:
//!
//! ```toml
//! [geometry]
//! bs_position = [0.0, 0.0, 3.0]     # meters
//! ris_position = [0.5, 0.0, 3.0]
//! ue_count = 4                      # placed on a semicircular arc
//! ue_radius_m = 10.0                # arc radius around the origin
//! ue_height_m = 1.5
//! # ue_positions = [[x, y, z], ...] # explicit override of the arc
//!
//! [arrays]
//! bs_antennas = 16                  # ULA along y
//! ue_antennas = 4                   # ULA along x
//! ris_rows = 8                      # UPA in the x-z plane
//! ris_cols = 16
//! spacing_wavelengths = 0.5         # at the 2.4 GHz reference carrier
//!
//! [frequency]
//! first_center_hz = 2.4e9           # UE u sits at first + (u-1)*(bandwidth+guard)
//! bandwidth_hz = 20e6
//! guard_hz = 2e6
//!
//! [propagation]
//! los_paths = 1
//! nlos_paths = 4
//! los_exponent = 2.0
//! nlos_exponent = 3.0
//! nlos_power_offset_db = -10.0      # total NLoS power relative to the exponent law
//! blockage_bs_ue = 0.3
//! blockage_ris_ue = 0.3
//! blockage_bs_ris = 0.0
//! blockage_attenuation_db = 30.0
//! channel_mode = "redraw"           # or "frozen": every epoch sees epoch 0
//!
//! [link_budget]
//! tx_power_dbm = 30.0               # per UE band
//! noise_psd_dbm_hz = -174.0
//! noise_figure_db = 9.0
//!
//! [element]
//! l1_h = 2.5e-9
//! l2_h = 0.7e-9
//! z0_ohm = 377.0
//! resistance_ohm = 1.0
//! quantization_levels = 0           # 0 = continuous
//!
//! [optimizer]
//! # a = 1.0                         # absent: calibrated by pilot probes
//! c = 0.02                          # perturbation size, unconstrained units
//! stability_fraction = 0.1          # A = fraction * budget
//! alpha = 0.602
//! gamma = 0.101
//! first_step_fraction = 0.0125      # pilot target: first step vs. box width
//! pilot_pairs = 4
//! averaging_epochs = 1              # M feedback epochs per probe
//! feedback_timeout_ms = 1000
//! max_timeouts = 8
//!
//! [episode]
//! subscriptions = [1, 3]
//! budget = 500
//! regimes = ["none", "partitioned", "joint"]
//! qos_target_bps = 2.0e9
//! window = 10
//! eval_epochs = 100
//! archive_capacity = 4096
//! termination = "budget"            # or "degradation"
//! degradation_floor_bps = 0.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing scenario document: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioDocument {
    pub geometry: GeometryConfig,
    pub arrays: ArrayConfig,
    pub frequency: FrequencyConfig,
    pub propagation: PropagationConfig,
    pub link_budget: LinkBudgetConfig,
    pub element: ElementConfig,
    pub optimizer: OptimizerConfig,
    pub episode: EpisodeConfig,
}

impl ScenarioDocument {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario document is always serializable")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub bs_position: [f64; 3],
    pub ris_position: [f64; 3],
    pub ue_count: usize,
    pub ue_radius_m: f64,
    pub ue_height_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ue_positions: Option<Vec<[f64; 3]>>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            bs_position: [0.0, 0.0, 3.0],
            ris_position: [0.5, 0.0, 3.0],
            ue_count: 4,
            ue_radius_m: 10.0,
            ue_height_m: 1.5,
            ue_positions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub bs_antennas: usize,
    pub ue_antennas: usize,
    pub ris_rows: usize,
    pub ris_cols: usize,
    pub spacing_wavelengths: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            bs_antennas: 16,
            ue_antennas: 4,
            ris_rows: 8,
            ris_cols: 16,
            spacing_wavelengths: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyConfig {
    pub first_center_hz: f64,
    pub bandwidth_hz: f64,
    pub guard_hz: f64,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        Self {
            first_center_hz: 2.4e9,
            bandwidth_hz: 20e6,
            guard_hz: 2e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    /// Fresh fading and blockage per epoch.
    #[default]
    Redraw,
    /// Every epoch reuses the epoch-0 realization.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub los_paths: usize,
    pub nlos_paths: usize,
    pub los_exponent: f64,
    pub nlos_exponent: f64,
    pub nlos_power_offset_db: f64,
    pub blockage_bs_ue: f64,
    pub blockage_ris_ue: f64,
    pub blockage_bs_ris: f64,
    pub blockage_attenuation_db: f64,
    pub channel_mode: ChannelMode,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            los_paths: 1,
            nlos_paths: 4,
            los_exponent: 2.0,
            nlos_exponent: 3.0,
            nlos_power_offset_db: -10.0,
            blockage_bs_ue: 0.3,
            blockage_ris_ue: 0.3,
            blockage_bs_ris: 0.0,
            blockage_attenuation_db: 30.0,
            channel_mode: ChannelMode::Redraw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkBudgetConfig {
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for LinkBudgetConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: 30.0,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 9.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElementConfig {
    pub l1_h: f64,
    pub l2_h: f64,
    pub z0_ohm: f64,
    pub resistance_ohm: f64,
    pub quantization_levels: u32,
}

impl Default for ElementConfig {
    fn default() -> Self {
        Self {
            l1_h: 2.5e-9,
            l2_h: 0.7e-9,
            z0_ohm: 377.0,
            resistance_ohm: 1.0,
            quantization_levels: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    pub c: f64,
    pub stability_fraction: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub first_step_fraction: f64,
    pub pilot_pairs: u32,
    pub averaging_epochs: u32,
    pub feedback_timeout_ms: u64,
    pub max_timeouts: u32,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            a: None,
            c: 0.02,
            stability_fraction: 0.1,
            alpha: 0.602,
            gamma: 0.101,
            first_step_fraction: 0.0125,
            pilot_pairs: 4,
            averaging_epochs: 1,
            feedback_timeout_ms: 1000,
            max_timeouts: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// No surface deployed.
    None,
    /// One independently optimized block per subscriber.
    Partitioned,
    /// The whole surface optimized for the summed subscriber objective.
    Joint,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::None => "none",
            Regime::Partitioned => "partitioned",
            Regime::Joint => "joint",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "no_ris" => Ok(Regime::None),
            "partitioned" => Ok(Regime::Partitioned),
            "joint" => Ok(Regime::Joint),
            other => Err(format!("unknown regime `{other}`")),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    /// The task concludes when the iteration budget is spent.
    #[default]
    Budget,
    /// Additionally stop early once the windowed mean drops below a floor.
    Degradation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub subscriptions: Vec<u32>,
    pub budget: u64,
    pub regimes: Vec<Regime>,
    pub qos_target_bps: f64,
    pub window: usize,
    pub eval_epochs: u64,
    pub archive_capacity: usize,
    pub termination: Termination,
    pub degradation_floor_bps: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            subscriptions: vec![1, 3],
            budget: 500,
            regimes: vec![Regime::None, Regime::Partitioned, Regime::Joint],
            qos_target_bps: 2.0e9,
            window: 10,
            eval_epochs: 100,
            archive_capacity: 4096,
            termination: Termination::Budget,
            degradation_floor_bps: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(
            ScenarioDocument::parse("").unwrap(),
            ScenarioDocument::default()
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ScenarioDocument::parse("[geometry]\nue_cnt = 3\n").unwrap_err();
        assert!(err.to_string().contains("ue_cnt"), "{err}");
        assert!(ScenarioDocument::parse("[bogus]\n").is_err());
    }

    #[test]
    fn partial_sections_merge_with_defaults() {
        let doc = ScenarioDocument::parse(
            "[episode]\nbudget = 20\nregimes = [\"joint\"]\n[optimizer]\naveraging_epochs = 4\n",
        )
        .unwrap();
        assert_eq!(doc.episode.budget, 20);
        assert_eq!(doc.episode.regimes, vec![Regime::Joint]);
        assert_eq!(doc.episode.subscriptions, vec![1, 3]);
        assert_eq!(doc.optimizer.averaging_epochs, 4);
    }

    #[test]
    fn serialized_default_parses_back() {
        let doc = ScenarioDocument::default();
        assert_eq!(ScenarioDocument::parse(&doc.to_toml()).unwrap(), doc);
    }
}
