use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::{ChannelMode, ScenarioDocument};
use crate::em::{AngularFrequency, CircuitConstants, RisPanel, REFERENCE_CARRIER_HZ};
use crate::UeId;

use super::ChannelError;

pub type Point = [f64; 3];

/// One UE's slice of spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

impl Band {
    pub fn omega(&self) -> AngularFrequency {
        AngularFrequency::from_hz(self.center_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockageProbabilities {
    pub bs_ue: f64,
    pub ris_ue: f64,
    pub bs_ris: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathCounts {
    pub los: usize,
    pub nlos: usize,
}

/// Log-distance law anchored at the free-space loss at 1 m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub los_exponent: f64,
    pub nlos_exponent: f64,
    pub nlos_power_offset_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub tx_power_w: f64,
    pub noise_power_w: f64,
}

/// Element parameters shared by the whole surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementModel {
    pub constants: CircuitConstants,
    pub resistance: f64,
    pub quantization_levels: u32,
}

/// Fully resolved cell description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub bs_position: Point,
    pub ris_position: Point,
    pub ue_positions: Vec<Point>,
    pub bs_antennas: usize,
    pub ue_antennas: usize,
    pub ris_rows: usize,
    pub ris_cols: usize,
    /// Inter-element spacing in meters (same for every array).
    pub element_spacing: f64,
    pub frequency_plan: Vec<Band>,
    pub blockage: BlockageProbabilities,
    pub blockage_attenuation_db: f64,
    pub path_counts: PathCounts,
    pub path_loss: PathLossModel,
    pub link_budget: LinkBudget,
    pub element: ElementModel,
    pub channel_mode: ChannelMode,
    pub seed: u64,
}

impl Scenario {
    pub fn ue_count(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn ris_elements(&self) -> usize {
        self.ris_rows * self.ris_cols
    }

    /// UE ids are 1-based and follow position order.
    pub fn ue_ids(&self) -> impl Iterator<Item = UeId> + '_ {
        (1..=self.ue_positions.len() as u32).map(UeId)
    }

    pub fn ue_index(&self, ue: UeId) -> Option<usize> {
        let i = (ue.0 as usize).checked_sub(1)?;
        (i < self.ue_positions.len()).then_some(i)
    }

    pub fn band(&self, ue: UeId) -> Option<Band> {
        self.ue_index(ue).map(|i| self.frequency_plan[i])
    }

    /// A panel matching the scenario's surface with every element at reset.
    pub fn reset_panel(&self) -> RisPanel {
        RisPanel::uniform(
            self.ris_rows,
            self.ris_cols,
            self.element.constants,
            self.element.resistance,
        )
    }

    /// Epoch whose realization is actually used under the channel mode.
    pub fn effective_epoch(&self, epoch: u64) -> u64 {
        match self.channel_mode {
            ChannelMode::Redraw => epoch,
            ChannelMode::Frozen => 0,
        }
    }
}

fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn invalid(field: &str, reason: impl Into<String>) -> ChannelError {
    ChannelError::InvalidScenario {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn check_finite_point(field: &str, p: &Point) -> Result<(), ChannelError> {
    if p.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(field, "coordinates must be finite"))
    }
}

fn check_probability(field: &str, p: f64) -> Result<(), ChannelError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(field, format!("{p} is not a probability")))
    }
}

/// Angles (degrees) of `n` UEs spread evenly over the open half-circle:
/// the midpoints of `n` equal arcs.
pub fn semicircle_angles_deg(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (i as f64 + 0.5) * 180.0 / n as f64)
        .collect()
}

/// Resolves a configuration document into a [`Scenario`].
pub fn build_scenario(doc: &ScenarioDocument, seed: u64) -> Result<Scenario, ChannelError> {
    let g = &doc.geometry;
    let a = &doc.arrays;
    let f = &doc.frequency;
    let p = &doc.propagation;
    let lb = &doc.link_budget;
    let e = &doc.element;

    check_finite_point("geometry.bs_position", &g.bs_position)?;
    check_finite_point("geometry.ris_position", &g.ris_position)?;

    let ue_positions = match &g.ue_positions {
        Some(explicit) => {
            if explicit.is_empty() {
                return Err(invalid("geometry.ue_positions", "at least one UE required"));
            }
            for (i, pos) in explicit.iter().enumerate() {
                check_finite_point(&format!("geometry.ue_positions[{i}]"), pos)?;
            }
            explicit.clone()
        }
        None => {
            if g.ue_count == 0 {
                return Err(invalid("geometry.ue_count", "at least one UE required"));
            }
            if !(g.ue_radius_m > 0.0 && g.ue_radius_m.is_finite()) {
                return Err(invalid("geometry.ue_radius_m", "radius must be positive"));
            }
            if !g.ue_height_m.is_finite() {
                return Err(invalid("geometry.ue_height_m", "height must be finite"));
            }
            semicircle_angles_deg(g.ue_count)
                .into_iter()
                .map(|deg| {
                    let t = deg.to_radians();
                    [
                        g.ue_radius_m * t.cos(),
                        g.ue_radius_m * t.sin(),
                        g.ue_height_m,
                    ]
                })
                .collect()
        }
    };

    for (field, n) in [
        ("arrays.bs_antennas", a.bs_antennas),
        ("arrays.ue_antennas", a.ue_antennas),
        ("arrays.ris_rows", a.ris_rows),
        ("arrays.ris_cols", a.ris_cols),
    ] {
        if n == 0 {
            return Err(invalid(field, "must be at least 1"));
        }
    }
    if !(a.spacing_wavelengths > 0.0 && a.spacing_wavelengths.is_finite()) {
        return Err(invalid("arrays.spacing_wavelengths", "must be positive"));
    }

    if !(f.first_center_hz > 0.0 && f.bandwidth_hz > 0.0 && f.guard_hz >= 0.0) {
        return Err(invalid(
            "frequency",
            "centers and bandwidth must be positive, guard non-negative",
        ));
    }
    let frequency_plan = (0..ue_positions.len())
        .map(|i| Band {
            center_hz: f.first_center_hz + i as f64 * (f.bandwidth_hz + f.guard_hz),
            bandwidth_hz: f.bandwidth_hz,
        })
        .collect();

    if p.los_paths > 1 {
        return Err(invalid("propagation.los_paths", "at most one LoS path"));
    }
    if p.los_paths + p.nlos_paths == 0 {
        return Err(invalid(
            "propagation.nlos_paths",
            "a link needs at least one path",
        ));
    }
    for (field, v) in [
        ("propagation.los_exponent", p.los_exponent),
        ("propagation.nlos_exponent", p.nlos_exponent),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(field, "must be positive"));
        }
    }
    check_probability("propagation.blockage_bs_ue", p.blockage_bs_ue)?;
    check_probability("propagation.blockage_ris_ue", p.blockage_ris_ue)?;
    check_probability("propagation.blockage_bs_ris", p.blockage_bs_ris)?;
    if !(p.blockage_attenuation_db >= 0.0) {
        return Err(invalid(
            "propagation.blockage_attenuation_db",
            "must be non-negative",
        ));
    }

    let constants = CircuitConstants {
        l1: e.l1_h,
        l2: e.l2_h,
        z0: e.z0_ohm,
    };
    constants
        .validate()
        .map_err(|err| invalid("element", err.to_string()))?;
    if !(e.resistance_ohm >= 0.0) {
        return Err(invalid("element.resistance_ohm", "must be non-negative"));
    }

    let noise_dbm = lb.noise_psd_dbm_hz + 10.0 * f.bandwidth_hz.log10() + lb.noise_figure_db;
    let reference_lambda = AngularFrequency::from_hz(REFERENCE_CARRIER_HZ).wavelength();

    Ok(Scenario {
        bs_position: g.bs_position,
        ris_position: g.ris_position,
        ue_positions,
        bs_antennas: a.bs_antennas,
        ue_antennas: a.ue_antennas,
        ris_rows: a.ris_rows,
        ris_cols: a.ris_cols,
        element_spacing: a.spacing_wavelengths * reference_lambda,
        frequency_plan,
        blockage: BlockageProbabilities {
            bs_ue: p.blockage_bs_ue,
            ris_ue: p.blockage_ris_ue,
            bs_ris: p.blockage_bs_ris,
        },
        blockage_attenuation_db: p.blockage_attenuation_db,
        path_counts: PathCounts {
            los: p.los_paths,
            nlos: p.nlos_paths,
        },
        path_loss: PathLossModel {
            los_exponent: p.los_exponent,
            nlos_exponent: p.nlos_exponent,
            nlos_power_offset_db: p.nlos_power_offset_db,
        },
        link_budget: LinkBudget {
            tx_power_w: dbm_to_watts(lb.tx_power_dbm),
            noise_power_w: dbm_to_watts(noise_dbm),
        },
        element: ElementModel {
            constants,
            resistance: e.resistance_ohm,
            quantization_levels: e.quantization_levels,
        },
        channel_mode: p.channel_mode,
        seed,
    })
}

/// Unit vector for an (azimuth, elevation) pair in radians.
pub fn unit_from_angles(azimuth: f64, elevation: f64) -> Point {
    [
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    ]
}

/// (azimuth, elevation) of the direction from `from` to `to`.
pub fn angles_between(from: &Point, to: &Point) -> (f64, f64) {
    let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let horizontal = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let azimuth = if horizontal == 0.0 {
        0.0
    } else {
        d[1].atan2(d[0])
    };
    (azimuth, d[2].atan2(horizontal).clamp(-PI / 2.0, PI / 2.0))
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> ScenarioDocument {
        ScenarioDocument::default()
    }

    #[test]
    fn default_cell_matches_reference_layout() {
        let s = build_scenario(&doc(), 1).unwrap();
        assert_eq!(s.bs_position, [0.0, 0.0, 3.0]);
        assert_eq!(s.ris_position, [0.5, 0.0, 3.0]);
        assert_eq!(
            (s.bs_antennas, s.ue_antennas, s.ris_elements()),
            (16, 4, 128)
        );
        assert_eq!(s.ue_count(), 4);
        assert_eq!((s.path_counts.los, s.path_counts.nlos), (1, 4));
        assert_eq!(
            (s.blockage.bs_ue, s.blockage.ris_ue, s.blockage.bs_ris),
            (0.3, 0.3, 0.0)
        );
        assert_eq!(s.blockage_attenuation_db, 30.0);
        for (pos, deg) in s.ue_positions.iter().zip([22.5f64, 67.5, 112.5, 157.5]) {
            let angle = pos[1].atan2(pos[0]).to_degrees();
            assert!((angle - deg).abs() < 1e-9, "{angle} vs {deg}");
            assert!(((pos[0].powi(2) + pos[1].powi(2)).sqrt() - 10.0).abs() < 1e-12);
            assert_eq!(pos[2], 1.5);
        }
    }

    #[test]
    fn bands_are_separated_by_bandwidth_plus_guard() {
        let s = build_scenario(&doc(), 1).unwrap();
        let centers: Vec<f64> = s.frequency_plan.iter().map(|b| b.center_hz).collect();
        assert_eq!(centers, vec![2.4e9, 2.422e9, 2.444e9, 2.466e9]);
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                assert!((centers[i] - centers[j]).abs() >= 22e6 - 1e-3);
            }
            assert_eq!(s.frequency_plan[i].bandwidth_hz, 20e6);
        }
    }

    #[test]
    fn two_ue_arc() {
        let mut d = doc();
        d.geometry.ue_count = 2;
        d.geometry.ue_radius_m = 10.0;
        let s = build_scenario(&d, 1).unwrap();
        // Midpoint rule with two arcs of 90 degrees each.
        let expected = [45.0f64, 135.0];
        for (pos, deg) in s.ue_positions.iter().zip(expected) {
            let t = deg.to_radians();
            assert!((pos[0] - 10.0 * t.cos()).abs() < 1e-12);
            assert!((pos[1] - 10.0 * t.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(
            build_scenario(&doc(), 7).unwrap(),
            build_scenario(&doc(), 7).unwrap()
        );
    }

    #[test]
    fn invalid_geometry_names_the_field() {
        let mut d = doc();
        d.geometry.ue_radius_m = -1.0;
        let err = build_scenario(&d, 1).unwrap_err();
        assert!(err.to_string().contains("geometry.ue_radius_m"), "{err}");

        let mut d = doc();
        d.arrays.bs_antennas = 0;
        let err = build_scenario(&d, 1).unwrap_err();
        assert!(err.to_string().contains("arrays.bs_antennas"), "{err}");

        let mut d = doc();
        d.propagation.blockage_ris_ue = 1.5;
        assert!(build_scenario(&d, 1)
            .unwrap_err()
            .to_string()
            .contains("blockage_ris_ue"));
    }

    #[test]
    fn noise_power_from_link_budget() {
        let s = build_scenario(&doc(), 1).unwrap();
        assert!((s.link_budget.tx_power_w - 1.0).abs() < 1e-12);
        let expected_dbm = -174.0 + 10.0 * 20e6f64.log10() + 9.0;
        let got_dbm = 10.0 * s.link_budget.noise_power_w.log10() + 30.0;
        assert!((got_dbm - expected_dbm).abs() < 1e-9);
    }
}
