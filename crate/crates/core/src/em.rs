//! Varactor-loaded reflecting element model.
//!
//! Each element is a parallel resonant circuit: the bottom-layer inductance
//! `L1` in parallel with the series branch `L2 + C + R`. The reflection
//! coefficient follows from the impedance mismatch against free space.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower end of the varactor capacitance range (farads).
pub const CAPACITANCE_MIN: f64 = 0.47e-12;
/// Upper end of the varactor capacitance range (farads).
pub const CAPACITANCE_MAX: f64 = 2.35e-12;
/// Mid-range capacitance used for initialization and lease reset.
pub const RESET_CAPACITANCE: f64 = 1.41e-12;
/// Default effective element resistance (ohms).
pub const DEFAULT_RESISTANCE: f64 = 1.0;
/// Reference carrier used when no band-specific frequency is given.
pub const REFERENCE_CARRIER_HZ: f64 = 2.4e9;

// Slack on the capacitance box so values produced by f64 round trips
// (pF <-> F, sigmoid squash) at the exact endpoints are still accepted.
const RANGE_SLACK: f64 = 1e-9 * CAPACITANCE_MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmError {
    #[error("capacitance must be positive, got {0} F")]
    NonPositiveCapacitance(f64),
    #[error("capacitance {0} F outside [{CAPACITANCE_MIN}, {CAPACITANCE_MAX}] F")]
    CapacitanceOutOfRange(f64),
    #[error("resistance must be non-negative, got {0} ohm")]
    NegativeResistance(f64),
    #[error("angular frequency must be positive, got {0} rad/s")]
    NonPositiveFrequency(f64),
    #[error("circuit constant `{field}` must be positive, got {value}")]
    InvalidConstant { field: &'static str, value: f64 },
    #[error("panel has no elements")]
    EmptyPanel,
    #[error("element {index}: {source}")]
    Element {
        index: usize,
        #[source]
        source: Box<EmError>,
    },
}

/// Fixed circuit constants shared by every element of a panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitConstants {
    /// Bottom-layer inductance (H).
    pub l1: f64,
    /// Top-layer inductance (H).
    pub l2: f64,
    /// Free-space impedance (ohms).
    pub z0: f64,
}

impl Default for CircuitConstants {
    fn default() -> Self {
        Self {
            l1: 2.5e-9,
            l2: 0.7e-9,
            z0: 377.0,
        }
    }
}

impl CircuitConstants {
    pub fn validate(&self) -> Result<(), EmError> {
        for (field, value) in [("l1", self.l1), ("l2", self.l2), ("z0", self.z0)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(EmError::InvalidConstant { field, value });
            }
        }
        Ok(())
    }
}

/// Tunable state of one element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementTuning {
    /// Effective varactor capacitance (F).
    pub capacitance: f64,
    /// Effective resistance (ohms).
    pub resistance: f64,
}

impl ElementTuning {
    /// Builds a tuning, checking the capacitance box and resistance sign.
    pub fn new(capacitance: f64, resistance: f64) -> Result<Self, EmError> {
        let tuning = Self {
            capacitance,
            resistance,
        };
        tuning.validate()?;
        Ok(tuning)
    }

    /// The reset default: mid-range capacitance with the given resistance.
    pub fn reset(resistance: f64) -> Self {
        Self {
            capacitance: RESET_CAPACITANCE,
            resistance,
        }
    }

    pub fn validate(&self) -> Result<(), EmError> {
        if !(self.capacitance.is_finite()
            && self.capacitance >= CAPACITANCE_MIN - RANGE_SLACK
            && self.capacitance <= CAPACITANCE_MAX + RANGE_SLACK)
        {
            return Err(EmError::CapacitanceOutOfRange(self.capacitance));
        }
        if !(self.resistance >= 0.0 && self.resistance.is_finite()) {
            return Err(EmError::NegativeResistance(self.resistance));
        }
        Ok(())
    }
}

/// Complex reflection coefficient of a single element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionCoefficient(pub Complex64);

impl ReflectionCoefficient {
    pub fn value(&self) -> Complex64 {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Angular frequency of the incident signal (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct AngularFrequency(pub f64);

impl AngularFrequency {
    pub fn from_hz(hz: f64) -> Self {
        Self(2.0 * PI * hz)
    }

    pub fn radians_per_second(&self) -> f64 {
        self.0
    }

    pub fn hz(&self) -> f64 {
        self.0 / (2.0 * PI)
    }

    /// Free-space wavelength in meters.
    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT * 2.0 * PI / self.0
    }

    /// Free-space wavenumber in rad/m.
    pub fn wavenumber(&self) -> f64 {
        self.0 / crate::SPEED_OF_LIGHT
    }
}

impl Default for AngularFrequency {
    fn default() -> Self {
        Self::from_hz(REFERENCE_CARRIER_HZ)
    }
}

/// Impedance of one element at `omega`.
pub fn element_impedance(
    tuning: &ElementTuning,
    constants: &CircuitConstants,
    omega: AngularFrequency,
) -> Result<Complex64, EmError> {
    if !(tuning.capacitance > 0.0) {
        return Err(EmError::NonPositiveCapacitance(tuning.capacitance));
    }
    if !(omega.0 > 0.0) {
        return Err(EmError::NonPositiveFrequency(omega.0));
    }
    let w = omega.0;
    let j = Complex64::i();
    let bottom = j * (w * constants.l1);
    let top = j * (w * constants.l2) + 1.0 / (j * (w * tuning.capacitance)) + tuning.resistance;
    Ok(bottom * top / (bottom + top))
}

/// Reflection coefficient `(Z - Z0) / (Z + Z0)` of one element at `omega`.
pub fn reflection_coefficient(
    tuning: &ElementTuning,
    constants: &CircuitConstants,
    omega: AngularFrequency,
) -> Result<ReflectionCoefficient, EmError> {
    let z = element_impedance(tuning, constants, omega)?;
    Ok(ReflectionCoefficient(
        (z - constants.z0) / (z + constants.z0),
    ))
}

/// Live state of a physical panel: geometry, circuit constants and the
/// current tuning of every element in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisPanel {
    pub rows: usize,
    pub cols: usize,
    pub constants: CircuitConstants,
    pub tunings: Vec<ElementTuning>,
}

impl RisPanel {
    /// A panel with every element at the reset tuning.
    pub fn uniform(rows: usize, cols: usize, constants: CircuitConstants, resistance: f64) -> Self {
        Self {
            rows,
            cols,
            constants,
            tunings: vec![ElementTuning::reset(resistance); rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.tunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tunings.is_empty()
    }
}

/// Per-element reflection coefficients of a panel at `omega`.
pub fn reflection_vector(
    panel: &RisPanel,
    omega: AngularFrequency,
) -> Result<Vec<ReflectionCoefficient>, EmError> {
    if panel.tunings.is_empty() {
        return Err(EmError::EmptyPanel);
    }
    panel
        .tunings
        .iter()
        .enumerate()
        .map(|(index, tuning)| {
            tuning
                .validate()
                .and_then(|_| reflection_coefficient(tuning, &panel.constants, omega))
                .map_err(|e| EmError::Element {
                    index,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Snaps the capacitance to the nearest point of a uniform `levels`-point
/// grid over the capacitance range. `levels == 0` (continuous) and
/// `levels == 1` leave the tuning untouched. Ties go to the lower point.
pub fn quantize_tuning(target: ElementTuning, levels: u32) -> ElementTuning {
    if levels < 2 {
        return target;
    }
    let steps = f64::from(levels - 1);
    let spacing = (CAPACITANCE_MAX - CAPACITANCE_MIN) / steps;
    let position = ((target.capacitance - CAPACITANCE_MIN) / spacing).clamp(0.0, steps);
    let lower = position.floor();
    let index = if position - lower > 0.5 {
        lower + 1.0
    } else {
        lower
    };
    let capacitance = if index >= steps {
        CAPACITANCE_MAX
    } else {
        CAPACITANCE_MIN + index * spacing
    };
    ElementTuning {
        capacitance,
        resistance: target.resistance,
    }
}
