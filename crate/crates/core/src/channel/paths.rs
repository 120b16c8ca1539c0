use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::em::{AngularFrequency, REFERENCE_CARRIER_HZ};
use crate::rng::{self, Purpose};

use super::scenario::{angles_between, distance, Point, Scenario};
use super::ChannelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkClass {
    BsUe,
    BsRis,
    RisUe,
}

/// A concrete link. UE indices are 0-based positions in the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkId {
    BsUe(usize),
    BsRis,
    RisUe(usize),
}

impl LinkId {
    pub fn class(self) -> LinkClass {
        match self {
            LinkId::BsUe(_) => LinkClass::BsUe,
            LinkId::BsRis => LinkClass::BsRis,
            LinkId::RisUe(_) => LinkClass::RisUe,
        }
    }

    /// Stable key used for random stream derivation.
    pub fn key(self) -> u64 {
        match self {
            LinkId::BsRis => 1 << 32,
            LinkId::BsUe(u) => (2 << 32) | u as u64,
            LinkId::RisUe(u) => (3 << 32) | u as u64,
        }
    }

    fn check(self, scenario: &Scenario) -> Result<(), ChannelError> {
        match self {
            LinkId::BsUe(u) | LinkId::RisUe(u) if u >= scenario.ue_count() => {
                Err(ChannelError::UnknownLink(self))
            }
            _ => Ok(()),
        }
    }

    /// (transmitter, receiver) positions, downlink orientation.
    pub fn endpoints(self, scenario: &Scenario) -> Result<(Point, Point), ChannelError> {
        self.check(scenario)?;
        Ok(match self {
            LinkId::BsUe(u) => (scenario.bs_position, scenario.ue_positions[u]),
            LinkId::BsRis => (scenario.bs_position, scenario.ris_position),
            LinkId::RisUe(u) => (scenario.ris_position, scenario.ue_positions[u]),
        })
    }

    pub fn blockage_probability(self, scenario: &Scenario) -> f64 {
        match self.class() {
            LinkClass::BsUe => scenario.blockage.bs_ue,
            LinkClass::BsRis => scenario.blockage.bs_ris,
            LinkClass::RisUe => scenario.blockage.ris_ue,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: Complex64,
    pub departure: Direction,
    pub arrival: Direction,
    pub is_los: bool,
}

/// The multipath structure of one link in one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub link: LinkId,
    pub epoch: u64,
    pub paths: Vec<Path>,
    pub link_blocked: bool,
}

/// Free-space power gain at 1 m for the reference carrier.
fn reference_gain() -> f64 {
    let lambda = AngularFrequency::from_hz(REFERENCE_CARRIER_HZ).wavelength();
    (lambda / (4.0 * PI)).powi(2)
}

/// Draws the paths and blockage state of `link` in `epoch`.
pub fn sample_paths(
    scenario: &Scenario,
    link: LinkId,
    epoch: u64,
) -> Result<PathSet, ChannelError> {
    let (tx, rx) = link.endpoints(scenario)?;
    let d = distance(&tx, &rx).max(1e-3);
    let model = &scenario.path_loss;
    let counts = scenario.path_counts;
    let pl0 = reference_gain();

    let mut paths = Vec::with_capacity(counts.los + counts.nlos);
    if counts.los == 1 {
        let amplitude = (pl0 * d.powf(-model.los_exponent)).sqrt();
        let k = AngularFrequency::from_hz(REFERENCE_CARRIER_HZ).wavenumber();
        let (dep_az, dep_el) = angles_between(&tx, &rx);
        let (arr_az, arr_el) = angles_between(&rx, &tx);
        paths.push(Path {
            gain: Complex64::from_polar(amplitude, -k * d),
            departure: Direction {
                azimuth: dep_az,
                elevation: dep_el,
            },
            arrival: Direction {
                azimuth: arr_az,
                elevation: arr_el,
            },
            is_los: true,
        });
    }

    if counts.nlos > 0 {
        let total =
            pl0 * d.powf(-model.nlos_exponent) * 10f64.powf(model.nlos_power_offset_db / 10.0);
        let per_path = total / counts.nlos as f64;
        let mut rng = rng::stream(scenario.seed, Purpose::Paths, link.key(), epoch);
        for _ in 0..counts.nlos {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let scale = (per_path / 2.0).sqrt();
            let mut direction = || Direction {
                azimuth: rng.random_range(-PI..PI),
                elevation: rng.random_range(-PI / 4.0..PI / 4.0),
            };
            let departure = direction();
            let arrival = direction();
            paths.push(Path {
                gain: Complex64::new(re * scale, im * scale),
                departure,
                arrival,
                is_los: false,
            });
        }
    }

    let p = link.blockage_probability(scenario);
    let draw: f64 = rng::stream(scenario.seed, Purpose::Blockage, link.key(), epoch).random();
    Ok(PathSet {
        link,
        epoch,
        paths,
        link_blocked: draw < p,
    })
}
