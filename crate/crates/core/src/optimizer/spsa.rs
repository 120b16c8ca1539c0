//! Simultaneous-perturbation stochastic approximation over element tunings.
//!
//! Capacitances are optimized in an unconstrained space and squashed into
//! the varactor box by a logistic map, so every probe is feasible.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::em::{ElementTuning, CAPACITANCE_MAX, CAPACITANCE_MIN, RESET_CAPACITANCE};
use crate::rng::{self, Purpose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("non-finite objective (plus {plus}, minus {minus})")]
    NonFiniteObjective { plus: f64, minus: f64 },
    #[error("optimizer over zero elements")]
    Empty,
    #[error("gain schedule parameter `{name}` invalid: {value}")]
    InvalidSchedule { name: &'static str, value: f64 },
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps an unconstrained parameter into the capacitance box.
pub fn to_capacitance(x: f64) -> f64 {
    (CAPACITANCE_MIN + (CAPACITANCE_MAX - CAPACITANCE_MIN) * sigmoid(x))
        .clamp(CAPACITANCE_MIN, CAPACITANCE_MAX)
}

/// Inverse of [`to_capacitance`]; endpoints are pulled in slightly.
pub fn from_capacitance(c: f64) -> f64 {
    let width = CAPACITANCE_MAX - CAPACITANCE_MIN;
    let p = ((c - CAPACITANCE_MIN) / width).clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// `a_k = a / (A + k + 1)^alpha`, `c_k = c / (k + 1)^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    /// `None` until pilot calibration has run.
    pub a: Option<f64>,
    pub c: f64,
    pub stability: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl GainSchedule {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let check = |name, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(OptimizerError::InvalidSchedule { name, value })
            }
        };
        if let Some(a) = self.a {
            check("a", a, a >= 0.0)?;
        }
        check("c", self.c, self.c >= 0.0)?;
        check("stability", self.stability, self.stability >= 0.0)?;
        check("alpha", self.alpha, self.alpha > 0.0)?;
        check("gamma", self.gamma, self.gamma >= 0.0)
    }

    pub fn a_k(&self, k: u64) -> f64 {
        self.a.unwrap_or(0.0) / (self.stability + k as f64 + 1.0).powf(self.alpha)
    }

    pub fn c_k(&self, k: u64) -> f64 {
        self.c / (k as f64 + 1.0).powf(self.gamma)
    }

    /// Picks `a` so the first step moves each parameter by `step` on
    /// average, given objective differences observed at perturbation `c`.
    pub fn calibrated(mut self, pilot_differences: &[f64], step: f64) -> Self {
        let mean_gradient = if pilot_differences.is_empty() || self.c == 0.0 {
            0.0
        } else {
            pilot_differences.iter().map(|d| d.abs()).sum::<f64>()
                / pilot_differences.len() as f64
                / (2.0 * self.c)
        };
        let scale = (self.stability + 1.0).powf(self.alpha);
        let a = if mean_gradient > 0.0 && mean_gradient.is_finite() {
            step * scale / mean_gradient
        } else {
            step * scale
        };
        self.a = Some(a);
        self
    }
}

/// A plus/minus probe pair for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbePair {
    pub iteration: u64,
    pub delta: Vec<i8>,
    pub plus: Vec<ElementTuning>,
    pub minus: Vec<ElementTuning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub iteration: u64,
    /// Unconstrained parameters, one per leased element.
    pub parameters: Vec<f64>,
    pub best_tunings: Vec<ElementTuning>,
    /// Negative infinity until the first feedback.
    pub best_objective: f64,
    pub schedule: GainSchedule,
    pub rng_key: u64,
    pub resistance: f64,
}

// Stream subjects under `Purpose::Perturbation`.
const TRAINING: u64 = 0;
const PILOT: u64 = 1;

impl OptimizerState {
    /// All elements at the reset capacitance.
    pub fn new(
        elements: usize,
        schedule: GainSchedule,
        rng_key: u64,
        resistance: f64,
    ) -> Result<Self, OptimizerError> {
        if elements == 0 {
            return Err(OptimizerError::Empty);
        }
        schedule.validate()?;
        let start = vec![from_capacitance(RESET_CAPACITANCE); elements];
        let mut state = Self {
            iteration: 0,
            parameters: start,
            best_tunings: Vec::new(),
            best_objective: f64::NEG_INFINITY,
            schedule,
            rng_key,
            resistance,
        };
        state.best_tunings = state.current_tunings();
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameters.is_empty()
    }

    fn tunings_at(&self, params: impl Iterator<Item = f64>) -> Vec<ElementTuning> {
        params
            .map(|x| ElementTuning {
                capacitance: to_capacitance(x),
                resistance: self.resistance,
            })
            .collect()
    }

    pub fn current_tunings(&self) -> Vec<ElementTuning> {
        self.tunings_at(self.parameters.iter().copied())
    }

    fn delta(&self, subject: u64, counter: u64) -> Vec<i8> {
        let mut rng = rng::stream(self.rng_key, Purpose::Perturbation, subject, counter);
        (0..self.len())
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect()
    }

    fn pair(&self, iteration: u64, delta: Vec<i8>, ck: f64) -> ProbePair {
        let shifted = |sign: f64| {
            self.tunings_at(
                self.parameters
                    .iter()
                    .zip(&delta)
                    .map(|(x, d)| x + sign * ck * f64::from(*d)),
            )
        };
        ProbePair {
            iteration,
            plus: shifted(1.0),
            minus: shifted(-1.0),
            delta,
        }
    }

    pub fn propose_probe(&self) -> ProbePair {
        let k = self.iteration;
        self.pair(k, self.delta(TRAINING, k), self.schedule.c_k(k))
    }

    /// Probe `p` of the calibration pilot, at the initial perturbation size.
    pub fn pilot_probe(&self, p: u32) -> ProbePair {
        self.pair(0, self.delta(PILOT, u64::from(p)), self.schedule.c_k(0))
    }

    pub fn needs_calibration(&self) -> bool {
        self.schedule.a.is_none()
    }

    pub fn calibrate(&mut self, pilot_differences: &[f64], step: f64) {
        self.schedule = self.schedule.calibrated(pilot_differences, step);
    }

    /// One SPSA step from the objectives measured at this iteration's probes.
    pub fn apply_feedback(&self, plus: f64, minus: f64) -> Result<Self, OptimizerError> {
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(OptimizerError::NonFiniteObjective { plus, minus });
        }
        let probes = self.propose_probe();
        let k = self.iteration;
        let (ak, ck) = (self.schedule.a_k(k), self.schedule.c_k(k));
        let mut next = self.clone();
        if ck > 0.0 {
            let diff = (plus - minus) / (2.0 * ck);
            for (x, d) in next.parameters.iter_mut().zip(&probes.delta) {
                *x += ak * diff / f64::from(*d);
            }
        }
        let (best, tunings) = if plus >= minus {
            (plus, probes.plus)
        } else {
            (minus, probes.minus)
        };
        if best > next.best_objective {
            next.best_objective = best;
            next.best_tunings = tunings;
        }
        next.iteration += 1;
        Ok(next)
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    const PF: f64 = 1e-12;

    fn schedule(a: f64, c: f64) -> GainSchedule {
        GainSchedule {
            a: Some(a),
            c,
            stability: 0.0,
            alpha: 0.602,
            gamma: 0.101,
        }
    }

    #[test]
    fn mapping_round_trip_and_box() {
        assert!((to_capacitance(0.0) - 1.41 * PF).abs() < 1e-24);
        for x in [-50.0, -3.0, 0.2, 7.0, 50.0] {
            let c = to_capacitance(x);
            assert!((CAPACITANCE_MIN..=CAPACITANCE_MAX).contains(&c));
        }
        for c in [0.6 * PF, 1.0 * PF, 2.2 * PF] {
            assert!((to_capacitance(from_capacitance(c)) - c).abs() < 1e-21);
        }
    }

    #[test]
    fn zero_perturbation_probes_equal_current() {
        let s = OptimizerState::new(6, schedule(1.0, 0.0), 3, 1.0).unwrap();
        let p = s.propose_probe();
        assert_eq!(p.plus, s.current_tunings());
        assert_eq!(p.minus, s.current_tunings());
    }

    #[test]
    fn probes_are_deterministic() {
        let s = OptimizerState::new(16, schedule(1.0, 0.2), 99, 1.0).unwrap();
        assert_eq!(s.propose_probe(), s.propose_probe());
        let other = OptimizerState {
            rng_key: 100,
            ..s.clone()
        };
        assert_ne!(s.propose_probe().delta, other.propose_probe().delta);
    }

    #[test]
    fn scalar_probe_matches_hand_mapping() {
        let mut s = OptimizerState::new(1, schedule(1.0, 0.5), 7, 0.5).unwrap();
        s.parameters[0] = 0.3;
        s.iteration = 3;
        let p = s.propose_probe();
        let ck = 0.5 / 4f64.powf(0.101);
        let d = f64::from(p.delta[0]);
        let squash = |x: f64| 0.47 * PF + 1.88 * PF / (1.0 + (-x).exp());
        assert!((p.plus[0].capacitance - squash(0.3 + ck * d)).abs() < 1e-24);
        assert!((p.minus[0].capacitance - squash(0.3 - ck * d)).abs() < 1e-24);
        assert_eq!(p.plus[0].resistance, 0.5);
    }

    #[test]
    fn symmetric_feedback_keeps_parameters() {
        let s = OptimizerState::new(4, schedule(2.0, 0.3), 1, 1.0).unwrap();
        let next = s.apply_feedback(5.0, 5.0).unwrap();
        assert_eq!(next.parameters, s.parameters);
        assert_eq!(next.iteration, 1);
    }

    #[test]
    fn best_follows_winning_probe() {
        let s = OptimizerState::new(4, schedule(2.0, 0.3), 1, 1.0).unwrap();
        let probes = s.propose_probe();
        let next = s.apply_feedback(9.0, 4.0).unwrap();
        assert_eq!(next.best_objective, 9.0);
        assert_eq!(next.best_tunings, probes.plus);
        let after = next.apply_feedback(1.0, 2.0).unwrap();
        assert_eq!(after.best_objective, 9.0);
        assert_eq!(after.best_tunings, probes.plus);
    }

    #[test]
    fn rejects_non_finite() {
        let s = OptimizerState::new(2, schedule(1.0, 0.1), 1, 1.0).unwrap();
        assert!(s.apply_feedback(f64::NAN, 1.0).is_err());
        assert!(s.apply_feedback(1.0, f64::INFINITY).is_err());
        assert!(OptimizerState::new(0, schedule(1.0, 0.1), 1, 1.0).is_err());
    }

    #[test]
    fn gradient_step_by_hand() {
        let s = OptimizerState::new(3, schedule(0.5, 0.2), 5, 1.0).unwrap();
        let d = s.propose_probe().delta;
        let next = s.apply_feedback(3.0, 1.0).unwrap();
        let (ak, ck) = (0.5, 0.2);
        for i in 0..3 {
            let want = ak * (3.0 - 1.0) / (2.0 * ck * f64::from(d[i]));
            assert!((next.parameters[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_scales_first_step() {
        let base = GainSchedule {
            a: None,
            ..schedule(0.0, 0.1)
        };
        let s = base.calibrated(&[0.4, -0.4], 0.2);
        // Mean |g| = 0.4 / 0.2 = 2, so a_0 * |g| = 0.2.
        assert!((s.a_k(0) * 2.0 - 0.2).abs() < 1e-12);
        let flat = base.calibrated(&[0.0, 0.0], 0.2);
        assert!(flat.a.unwrap() > 0.0);
    }

    // Separable concave objective in capacitance space with optimum `target`.
    fn quadratic(tunings: &[ElementTuning], target: &[f64]) -> f64 {
        -tunings
            .iter()
            .zip(target)
            .map(|(t, c)| ((t.capacitance - c) / PF).powi(2))
            .sum::<f64>()
    }

    fn run(n: usize, target: &[f64], seed: u64, budget: u64) -> OptimizerState {
        let sched = GainSchedule {
            a: None,
            c: 0.15,
            stability: budget as f64 * 0.1,
            alpha: 0.602,
            gamma: 0.101,
        };
        let mut s = OptimizerState::new(n, sched, seed, 1.0).unwrap();
        let diffs: Vec<f64> = (0..4)
            .map(|p| {
                let pr = s.pilot_probe(p);
                quadratic(&pr.plus, target) - quadratic(&pr.minus, target)
            })
            .collect();
        s.calibrate(&diffs, 0.2);
        for _ in 0..budget {
            let pr = s.propose_probe();
            s = s
                .apply_feedback(quadratic(&pr.plus, target), quadratic(&pr.minus, target))
                .unwrap();
        }
        s
    }

    #[test]
    fn two_elements_reach_grid_optimum() {
        let target = [0.9 * PF, 1.95 * PF];
        let s = run(2, &target, 17, 200);
        // Exhaustive 64x64 grid over the box.
        let grid: Vec<f64> = (0..64)
            .map(|i| CAPACITANCE_MIN + (CAPACITANCE_MAX - CAPACITANCE_MIN) * i as f64 / 63.0)
            .collect();
        let mut grid_best = f64::NEG_INFINITY;
        for &c1 in &grid {
            for &c2 in &grid {
                let t = [
                    ElementTuning {
                        capacitance: c1,
                        resistance: 1.0,
                    },
                    ElementTuning {
                        capacitance: c2,
                        resistance: 1.0,
                    },
                ];
                grid_best = grid_best.max(quadratic(&t, &target));
            }
        }
        let reset = quadratic(&[ElementTuning::reset(1.0); 2], &target);
        let got = quadratic(&s.current_tunings(), &target);
        // Within 5% of the improvement available over the starting point.
        assert!(
            got >= grid_best - 0.05 * (grid_best - reset),
            "{got} vs {grid_best}"
        );
        assert!(s.best_objective.is_finite() && s.best_objective <= 0.0);
    }
}
