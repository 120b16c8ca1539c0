//! The propose / measure / apply loop.
//!
//! The loop sees the network only through [`FeedbackChannel`]: it hands over
//! tunings for its leases and gets a [`MetricsSample`] back. Several leases
//! optimized in lockstep share each measurement; each lease scores it with
//! its own beneficiaries.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::MetricsSample;
use crate::em::ElementTuning;
use crate::UeId;

use super::allocation::{AllocationLease, LeaseId, RisId};
use super::spsa::{OptimizerError, OptimizerState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("lease has no beneficiaries")]
    NoBeneficiaries,
    #[error("metrics carry no record for UE {0}")]
    MissingUe(UeId),
}

/// Unweighted sum of the beneficiaries' throughputs.
pub fn objective(
    metrics: &MetricsSample,
    beneficiaries: &BTreeSet<UeId>,
) -> Result<f64, ObjectiveError> {
    if beneficiaries.is_empty() {
        return Err(ObjectiveError::NoBeneficiaries);
    }
    beneficiaries
        .iter()
        .map(|&ue| metrics.throughput(ue).ok_or(ObjectiveError::MissingUe(ue)))
        .sum()
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeedbackError {
    #[error("feedback timed out")]
    Timeout,
    #[error("lease {0} revoked")]
    LeaseRevoked(LeaseId),
    #[error("transport: {0}")]
    Transport(String),
}

/// Tunings for the elements of one lease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaseUpdate {
    pub lease_id: LeaseId,
    pub ris_id: RisId,
    pub indices: Vec<usize>,
    pub tunings: Vec<ElementTuning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    PilotPlus(u32),
    PilotMinus(u32),
    Plus(u64),
    Minus(u64),
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::PilotPlus(p) => write!(f, "p{p}+"),
            Phase::PilotMinus(p) => write!(f, "p{p}-"),
            Phase::Plus(k) => write!(f, "{k}+"),
            Phase::Minus(k) => write!(f, "{k}-"),
        }
    }
}

/// Apply `updates`, then report metrics tagged with `tag`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRequest {
    pub tag: String,
    pub phase: Phase,
    pub updates: Vec<LeaseUpdate>,
}

pub trait FeedbackChannel {
    /// Applies the request's tunings and returns the matching feedback.
    /// Retrying after a timeout must be safe.
    fn measure(&mut self, request: &MeasurementRequest) -> Result<MetricsSample, FeedbackError>;

    /// Pushes final tunings.
    fn commit(&mut self, updates: &[LeaseUpdate]) -> Result<(), FeedbackError>;
}

/// One optimizer bound to one lease.
#[derive(Debug, Clone)]
pub struct LeaseOptimizer {
    pub lease: AllocationLease,
    pub state: OptimizerState,
}

impl LeaseOptimizer {
    fn update(&self, tunings: Vec<ElementTuning>) -> LeaseUpdate {
        LeaseUpdate {
            lease_id: self.lease.lease_id,
            ris_id: self.lease.ris_id.clone(),
            indices: self.lease.element_indices.clone(),
            tunings,
        }
    }

    /// Tunings worth keeping: the best probe seen, or the start point if
    /// nothing was measured.
    pub fn final_update(&self) -> LeaseUpdate {
        self.update(self.state.best_tunings.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: u64,
    pub objective_plus: f64,
    pub objective_minus: f64,
    pub best_objective: f64,
}

pub const TRAJECTORY_HEADER: &str = "iteration,objective_plus,objective_minus,best_objective";

pub fn trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.iteration, p.objective_plus, p.objective_minus, p.best_objective
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeSettings {
    pub budget: u64,
    pub tag_namespace: String,
    pub pilot_pairs: u32,
    /// Target size of the first step, in unconstrained units.
    pub first_step: f64,
    /// Consecutive timeouts tolerated on one measurement.
    pub max_timeouts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    /// One trajectory per task, in task order.
    pub trajectories: Vec<Vec<TrajectoryPoint>>,
    /// Updates committed at the end; empty when aborted.
    pub committed: Vec<LeaseUpdate>,
    pub timeouts: u32,
    pub aborted: Option<FeedbackError>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

enum Step<T> {
    Done(T),
    Abort(FeedbackError),
}

fn measure_scored(
    tasks: &[LeaseOptimizer],
    channel: &mut dyn FeedbackChannel,
    settings: &OptimizeSettings,
    phase: Phase,
    tunings: Vec<Vec<ElementTuning>>,
    timeouts: &mut u32,
) -> Result<Step<Vec<f64>>, OptimizeError> {
    let request = MeasurementRequest {
        tag: format!("{}/{}", settings.tag_namespace, phase),
        phase,
        updates: tasks
            .iter()
            .zip(tunings)
            .map(|(t, v)| t.update(v))
            .collect(),
    };
    let mut consecutive = 0;
    let sample = loop {
        match channel.measure(&request) {
            Ok(sample) => break sample,
            Err(FeedbackError::Timeout) if consecutive < settings.max_timeouts => {
                consecutive += 1;
                *timeouts += 1;
            }
            Err(e) => return Ok(Step::Abort(e)),
        }
    };
    let scores = tasks
        .iter()
        .map(|t| objective(&sample, &t.lease.beneficiary_ues))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Step::Done(scores))
}

/// Runs the loop for `settings.budget` iterations and commits each task's
/// best tunings. Uncalibrated tasks first run a pilot to size their step.
/// A feedback failure other than a retried timeout stops the loop and
/// returns what was gathered so far without committing.
pub fn optimize(
    tasks: &mut [LeaseOptimizer],
    channel: &mut dyn FeedbackChannel,
    settings: &OptimizeSettings,
) -> Result<OptimizeOutcome, OptimizeError> {
    let mut outcome = OptimizeOutcome {
        trajectories: vec![Vec::with_capacity(settings.budget as usize); tasks.len()],
        committed: Vec::new(),
        timeouts: 0,
        aborted: None,
    };
    macro_rules! measure {
        ($phase:expr, $tunings:expr) => {
            match measure_scored(
                tasks,
                channel,
                settings,
                $phase,
                $tunings,
                &mut outcome.timeouts,
            )? {
                Step::Done(v) => v,
                Step::Abort(e) => {
                    outcome.aborted = Some(e);
                    return Ok(outcome);
                }
            }
        };
    }

    if settings.budget > 0 && tasks.iter().any(|t| t.state.needs_calibration()) {
        let mut diffs = vec![Vec::new(); tasks.len()];
        for p in 0..settings.pilot_pairs {
            let probes: Vec<_> = tasks.iter().map(|t| t.state.pilot_probe(p)).collect();
            let plus = measure!(
                Phase::PilotPlus(p),
                probes.iter().map(|x| x.plus.clone()).collect()
            );
            let minus = measure!(
                Phase::PilotMinus(p),
                probes.into_iter().map(|x| x.minus).collect()
            );
            for (d, (a, b)) in diffs.iter_mut().zip(plus.iter().zip(&minus)) {
                d.push(a - b);
            }
        }
        for (task, d) in tasks.iter_mut().zip(&diffs) {
            if task.state.needs_calibration() {
                task.state.calibrate(d, settings.first_step);
            }
        }
    }

    for _ in 0..settings.budget {
        let probes: Vec<_> = tasks.iter().map(|t| t.state.propose_probe()).collect();
        let k = probes.first().map_or(0, |p| p.iteration);
        let plus = measure!(
            Phase::Plus(k),
            probes.iter().map(|x| x.plus.clone()).collect()
        );
        let minus = measure!(
            Phase::Minus(k),
            probes.into_iter().map(|x| x.minus).collect()
        );
        for (i, task) in tasks.iter_mut().enumerate() {
            let iteration = task.state.iteration;
            task.state = task.state.apply_feedback(plus[i], minus[i])?;
            outcome.trajectories[i].push(TrajectoryPoint {
                iteration,
                objective_plus: plus[i],
                objective_minus: minus[i],
                best_objective: task.state.best_objective,
            });
        }
    }

    let updates: Vec<LeaseUpdate> = tasks.iter().map(LeaseOptimizer::final_update).collect();
    if let Err(e) = channel.commit(&updates) {
        outcome.aborted = Some(e);
        return Ok(outcome);
    }
    outcome.committed = updates;
    Ok(outcome)
}
