//! One closed-loop episode: warm-up, service requests, optimization over
//! the leases, evaluation, termination.
//!
//! Epochs are laid out so that every regime of a seed sees the same channel
//! draws where it matters: warm-up `[0, W)`, then `P` pilot windows and
//! `budget` training windows of `M` epochs each, then the evaluation range.
//! The two probes of one iteration are measured on the same window.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use thiserror::Error;

use crate::channel::{ChannelError, EpochChannels, MetricsSample, Scenario};
use crate::config::{EpisodeConfig, OptimizerConfig, Regime, ScenarioDocument, Termination};
use crate::control::{
    AckStatus, ClosureReport, ControlError, ControlPlane, In1Message, RcfConfig, RisDescriptor,
    Session, SessionId, SessionOutcome, SessionRequest,
};
use crate::em::RisPanel;
use crate::optimizer::{
    optimize, AllocationLease, AllocationPolicy, FeedbackChannel, FeedbackError, GainSchedule,
    LeaseId, LeaseOptimizer, LeaseState, LeaseUpdate, MeasurementRequest, OptimizeError,
    OptimizeSettings, OptimizerState, Phase, RisId, TrajectoryPoint,
};
use crate::UeId;

use super::log::{EpisodeHeader, EpisodeLog, EventKind, SeriesPoint};
use super::{agents, detect_degradation, publish_feedback};

pub const RIS_ID: &str = "ris-1";

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpec {
    pub regime: Regime,
    pub seed: u64,
    pub episode: EpisodeConfig,
    pub optimizer: OptimizerConfig,
}

impl EpisodeSpec {
    pub fn from_document(doc: &ScenarioDocument, regime: Regime, seed: u64) -> Self {
        Self {
            regime,
            seed,
            episode: doc.episode.clone(),
            optimizer: doc.optimizer.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("invalid episode: {0}")]
    Invalid(String),
    #[error("control plane: {0}")]
    Control(#[from] ControlError),
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
    #[error("optimizer: {0}")]
    Optimize(#[from] OptimizeError),
    #[error("feedback loop aborted: {0}")]
    Aborted(FeedbackError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeLayout {
    pub warmup: u64,
    pub averaging: u64,
    pub pilot_pairs: u64,
    pub budget: u64,
    pub eval: u64,
}

impl EpisodeLayout {
    pub fn new(spec: &EpisodeSpec) -> Self {
        Self {
            warmup: spec.episode.window as u64,
            averaging: u64::from(spec.optimizer.averaging_epochs),
            pilot_pairs: u64::from(spec.optimizer.pilot_pairs),
            budget: spec.episode.budget,
            eval: spec.episode.eval_epochs,
        }
    }

    pub fn window_start(&self, phase: Phase) -> u64 {
        let slot = match phase {
            Phase::PilotPlus(p) | Phase::PilotMinus(p) => u64::from(p),
            Phase::Plus(k) | Phase::Minus(k) => self.pilot_pairs + k,
        };
        self.warmup + slot * self.averaging
    }

    /// The evaluation range does not depend on the regime.
    pub fn eval_start(&self) -> u64 {
        self.warmup + (self.pilot_pairs + self.budget) * self.averaging
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub ue_id: UeId,
    /// `None` when the request was declined.
    pub session: Option<Session>,
    pub closure: Option<ClosureReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub regime: Regime,
    pub seed: u64,
    pub log: EpisodeLog,
    /// Mean throughput over the evaluation range.
    pub eval_mean_bps: BTreeMap<UeId, f64>,
    pub sessions: Vec<SessionSummary>,
    pub trajectories: Vec<Vec<TrajectoryPoint>>,
    pub timeouts: u32,
}

impl EpisodeReport {
    /// Best objective the UE's session reached, if it had one.
    pub fn best_objective(&self, ue: UeId) -> Option<f64> {
        self.sessions
            .iter()
            .find(|s| s.ue_id == ue)
            .and_then(|s| s.closure.as_ref())
            .and_then(|c| c.best_objective)
    }
}

pub fn rcf_config(episode: &EpisodeConfig) -> RcfConfig {
    RcfConfig {
        subscribers: episode.subscriptions.iter().map(|&u| UeId(u)).collect(),
        window: episode.window,
        archive_capacity: episode.archive_capacity,
    }
}

pub fn descriptor(scenario: &Scenario) -> RisDescriptor {
    RisDescriptor {
        ris_id: RisId::from(RIS_ID),
        location: scenario.ris_position,
        orientation: [0.0, 1.0, 0.0],
        array_size: (scenario.ris_rows, scenario.ris_cols),
        phase_quantization_level: scenario.element.quantization_levels,
        owner_tag: String::new(),
        constants: scenario.element.constants,
        resistance_ohm: scenario.element.resistance,
    }
}

/// Every element free and at its reset tuning.
pub fn audit_surface(plane: &mut dyn ControlPlane, ris: &RisId) -> Result<(), String> {
    let state = plane.ris_state(ris).map_err(|e| e.to_string())?;
    let reset = state.descriptor.reset_tuning();
    if let Some(n) = state.owners.iter().position(Option::is_some) {
        return Err(format!("element {n} still leased"));
    }
    if let Some(n) = state.tunings.iter().position(|t| *t != reset) {
        return Err(format!("element {n} not at reset"));
    }
    Ok(())
}

/// The RAN side: measures the network with the surface as the registry
/// holds it, reports feedback and keeps the log.
struct Ran<'s> {
    scenario: &'s Scenario,
    ris: RisId,
    ues: Vec<UeId>,
    log: EpisodeLog,
    cached: Option<(u64, Vec<EpochChannels>)>,
}

fn transport(e: impl std::fmt::Display) -> FeedbackError {
    FeedbackError::Transport(e.to_string())
}

impl Ran<'_> {
    /// A surface with nothing leased is switched off.
    fn live_panel(&self, plane: &mut dyn ControlPlane) -> Result<Option<RisPanel>, ControlError> {
        match plane.ris_state(&self.ris) {
            Ok(state) if state.leased() > 0 => Ok(Some(state.panel())),
            Ok(_) | Err(ControlError::NotFound(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn channels(&mut self, start: u64, len: u64) -> Result<&[EpochChannels], ChannelError> {
        if self
            .cached
            .as_ref()
            .is_none_or(|(s, c)| *s != start || c.len() as u64 != len)
        {
            let chans = (start..start + len)
                .map(|e| EpochChannels::compute(self.scenario, e))
                .collect::<Result<Vec<_>, _>>()?;
            self.cached = Some((start, chans));
        }
        Ok(&self.cached.as_ref().expect("filled above").1)
    }

    /// Measures `len` epochs from `start` and reports their mean once.
    fn report(
        &mut self,
        plane: &mut dyn ControlPlane,
        start: u64,
        len: u64,
        tag: Option<&str>,
    ) -> Result<MetricsSample, EpisodeError> {
        let panel = self.live_panel(plane)?;
        let scenario = self.scenario;
        let samples = self
            .channels(start, len)?
            .iter()
            .map(|c| c.metrics(scenario, panel.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        for s in &samples {
            self.log.series.push(SeriesPoint {
                probe_tag: tag.map(str::to_string),
                sample: s.clone(),
            });
        }
        let mean = MetricsSample::average(&samples)
            .ok_or_else(|| EpisodeError::Invalid("empty window".into()))?;
        let msg =
            publish_feedback(start + len - 1, &mean, tag, &self.ues).map_err(ControlError::from)?;
        plane.publish_feedback(&msg)?;
        self.log.push(
            "ran",
            EventKind::Feedback,
            self.ues.clone(),
            None,
            &msg.encode(),
        );
        Ok(mean)
    }
}

struct Driver<'p, 's> {
    plane: &'p mut dyn ControlPlane,
    ran: Ran<'s>,
    layout: EpisodeLayout,
    seq: BTreeMap<LeaseId, u64>,
    lease_ues: BTreeMap<LeaseId, Vec<UeId>>,
    timeout: Duration,
}

impl Driver<'_, '_> {
    fn push(&mut self, update: &LeaseUpdate) -> Result<(), FeedbackError> {
        let seq = self.seq.entry(update.lease_id).or_insert(0);
        *seq += 1;
        let msg = In1Message::new(
            update.ris_id.clone(),
            *seq,
            update.indices.clone(),
            &update.tunings,
        );
        let ack = self.plane.push_coefficients(&msg).map_err(|e| match e {
            ControlError::Unauthorized(_) => FeedbackError::LeaseRevoked(update.lease_id),
            ControlError::Timeout(_) => FeedbackError::Timeout,
            other => transport(other),
        })?;
        if ack.status != AckStatus::Applied {
            return Err(transport(format!(
                "update {} acknowledged as {:?}",
                ack.seq, ack.status
            )));
        }
        let ues = self
            .lease_ues
            .get(&update.lease_id)
            .cloned()
            .unwrap_or_default();
        self.ran.log.push(
            "rcf",
            EventKind::CoefficientUpdate,
            ues,
            Some(update.lease_id),
            &msg.encode(),
        );
        Ok(())
    }
}

impl FeedbackChannel for Driver<'_, '_> {
    fn measure(&mut self, request: &MeasurementRequest) -> Result<MetricsSample, FeedbackError> {
        for u in &request.updates {
            self.push(u)?;
        }
        self.plane
            .expect_feedback(&request.tag)
            .map_err(transport)?;
        let start = self.layout.window_start(request.phase);
        self.ran
            .report(self.plane, start, self.layout.averaging, Some(&request.tag))
            .map_err(transport)?;
        match self.plane.await_feedback(&request.tag, self.timeout) {
            Ok(msg) => Ok(msg.to_metrics()),
            Err(ControlError::Timeout(_)) => Err(FeedbackError::Timeout),
            Err(e) => Err(transport(e)),
        }
    }

    fn commit(&mut self, updates: &[LeaseUpdate]) -> Result<(), FeedbackError> {
        updates.iter().try_for_each(|u| self.push(u))
    }
}

fn policy(regime: Regime) -> Option<AllocationPolicy> {
    match regime {
        Regime::None => None,
        Regime::Partitioned => Some(AllocationPolicy::Partitioned),
        Regime::Joint => Some(AllocationPolicy::Joint),
    }
}

fn validate(spec: &EpisodeSpec) -> Result<(), EpisodeError> {
    let bad = |m: &str| Err(EpisodeError::Invalid(m.to_string()));
    if spec.episode.window == 0 {
        return bad("window must be at least 1");
    }
    if spec.optimizer.averaging_epochs == 0 {
        return bad("averaging_epochs must be at least 1");
    }
    if !(spec.episode.qos_target_bps.is_finite() && spec.episode.qos_target_bps >= 0.0) {
        return bad("qos_target_bps must be a non-negative number");
    }
    Ok(())
}

/// Closes one session and logs the termination and any releases.
fn close(
    plane: &mut dyn ControlPlane,
    log: &mut EpisodeLog,
    lease_ues: &BTreeMap<LeaseId, Vec<UeId>>,
    summary: &mut SessionSummary,
) -> Result<(), ControlError> {
    let Some(session) = &summary.session else {
        return Ok(());
    };
    if summary.closure.is_some() {
        return Ok(());
    }
    let report = plane.terminate_session(session.session_id)?;
    let payload = serde_json::to_string(&report).expect("reports serialize");
    log.push(
        format!("ue:{}", summary.ue_id),
        EventKind::Terminate,
        vec![summary.ue_id],
        None,
        &payload,
    );
    for id in &report.released {
        let ues = lease_ues.get(id).cloned().unwrap_or_default();
        log.push("risp", EventKind::Release, ues, Some(*id), &id.to_string());
    }
    summary.closure = Some(report);
    Ok(())
}

fn close_all(
    plane: &mut dyn ControlPlane,
    log: &mut EpisodeLog,
    lease_ues: &BTreeMap<LeaseId, Vec<UeId>>,
    sessions: &mut [SessionSummary],
) -> Result<(), ControlError> {
    sessions
        .iter_mut()
        .try_for_each(|s| close(plane, log, lease_ues, s))
}

pub fn run_episode(
    plane: &mut dyn ControlPlane,
    scenario: &Scenario,
    spec: &EpisodeSpec,
) -> Result<EpisodeReport, EpisodeError> {
    validate(spec)?;
    let ep = &spec.episode;
    let agents =
        agents(scenario, &ep.subscriptions, ep.qos_target_bps).map_err(EpisodeError::Invalid)?;
    let layout = EpisodeLayout::new(spec);
    let ris = RisId::from(RIS_ID);
    let mut ran = Ran {
        scenario,
        ris: ris.clone(),
        ues: scenario.ue_ids().collect(),
        log: EpisodeLog::new(EpisodeHeader {
            regime: spec.regime,
            seed: spec.seed,
            budget: ep.budget,
        }),
        cached: None,
    };

    match plane.ris_state(&ris) {
        Ok(_) => {}
        Err(ControlError::NotFound(_)) => {
            plane.register_ris(descriptor(scenario))?;
        }
        Err(e) => return Err(e.into()),
    }

    let mut history = Vec::with_capacity(layout.warmup as usize);
    for e in 0..layout.warmup {
        history.push(ran.report(plane, e, 1, None)?);
    }

    let mut sessions: Vec<SessionSummary> = Vec::new();
    if let Some(policy) = policy(spec.regime) {
        for agent in agents.iter().filter(|a| a.subscribed) {
            if detect_degradation(agent, &history, ep.window) != Some(true) {
                continue;
            }
            let request = SessionRequest {
                ue_id: agent.ue_id,
                qos_request_bps: agent.qos_target_bps,
                policy,
                originator: Default::default(),
            };
            let payload = serde_json::to_string(&request).expect("requests serialize");
            ran.log.push(
                format!("ue:{}", agent.ue_id),
                EventKind::ServiceRequest,
                vec![agent.ue_id],
                None,
                &payload,
            );
            match plane.create_session(request)? {
                SessionOutcome::Created { session } => {
                    let payload = serde_json::to_string(&session).expect("sessions serialize");
                    ran.log.push(
                        "rcf",
                        EventKind::Allocate,
                        vec![agent.ue_id],
                        session.leases.first().copied(),
                        &payload,
                    );
                    sessions.push(SessionSummary {
                        ue_id: agent.ue_id,
                        session: Some(session),
                        closure: None,
                    });
                }
                SessionOutcome::Declined { .. } => {
                    ran.log.push(
                        "rcf",
                        EventKind::Decline,
                        vec![agent.ue_id],
                        None,
                        "declined",
                    );
                    sessions.push(SessionSummary {
                        ue_id: agent.ue_id,
                        session: None,
                        closure: None,
                    });
                }
            }
        }
    }

    let mut lease_ues: BTreeMap<LeaseId, Vec<UeId>> = BTreeMap::new();
    let mut lease_policy: BTreeMap<LeaseId, AllocationPolicy> = BTreeMap::new();
    for s in &sessions {
        if let Some(session) = &s.session {
            for &id in &session.leases {
                lease_ues.entry(id).or_default().push(s.ue_id);
                lease_policy.insert(id, session.policy);
            }
        }
    }

    let mut tasks = Vec::new();
    if !lease_ues.is_empty() {
        let state = plane.ris_state(&ris)?;
        for (i, (&id, ues)) in lease_ues.iter().enumerate() {
            let indices: Vec<usize> = (0..state.owners.len())
                .filter(|&n| state.owners[n] == Some(id))
                .collect();
            let schedule = GainSchedule {
                a: spec.optimizer.a,
                c: spec.optimizer.c,
                stability: spec.optimizer.stability_fraction * ep.budget as f64,
                alpha: spec.optimizer.alpha,
                gamma: spec.optimizer.gamma,
            };
            let rng_key = spec.seed.wrapping_mul(100).wrapping_add(i as u64);
            let optimizer = OptimizerState::new(
                indices.len(),
                schedule,
                rng_key,
                state.descriptor.resistance_ohm,
            )
            .map_err(OptimizeError::from)?;
            tasks.push(LeaseOptimizer {
                lease: AllocationLease {
                    lease_id: id,
                    ris_id: ris.clone(),
                    element_indices: indices,
                    beneficiary_ues: ues.iter().copied().collect::<BTreeSet<_>>(),
                    policy: lease_policy[&id],
                    state: LeaseState::Active,
                },
                state: optimizer,
            });
        }
    }

    let settings = OptimizeSettings {
        budget: ep.budget,
        tag_namespace: format!("{}-{}", spec.regime, spec.seed),
        pilot_pairs: spec.optimizer.pilot_pairs,
        // the sigmoid's slope at mid-range is a quarter of the box per logit
        first_step: 4.0 * spec.optimizer.first_step_fraction,
        max_timeouts: spec.optimizer.max_timeouts,
    };
    let mut driver = Driver {
        plane,
        ran,
        layout,
        seq: BTreeMap::new(),
        lease_ues,
        timeout: Duration::from_millis(spec.optimizer.feedback_timeout_ms),
    };
    let (trajectories, timeouts, aborted) = if tasks.is_empty() {
        (Vec::new(), 0, None)
    } else {
        let outcome = optimize(&mut tasks, &mut driver, &settings)?;
        (outcome.trajectories, outcome.timeouts, outcome.aborted)
    };
    let Driver {
        plane,
        mut ran,
        lease_ues,
        ..
    } = driver;

    if let Some(e) = aborted {
        let _ = close_all(plane, &mut ran.log, &lease_ues, &mut sessions);
        return Err(EpisodeError::Aborted(e));
    }

    for s in &sessions {
        let Some(session) = &s.session else { continue };
        let mine = tasks
            .iter()
            .zip(&trajectories)
            .filter(|(t, _)| session.leases.contains(&t.lease.lease_id));
        let (mut iterations, mut best) = (0u64, None::<f64>);
        for (task, trajectory) in mine {
            iterations = iterations.max(trajectory.len() as u64);
            if task.state.best_objective.is_finite() {
                best = Some(best.map_or(task.state.best_objective, |b| {
                    b.max(task.state.best_objective)
                }));
            }
        }
        plane.report_progress(session.session_id, iterations, best)?;
    }

    let mut sums: BTreeMap<UeId, f64> = BTreeMap::new();
    let eval_start = layout.eval_start();
    for e in eval_start..eval_start + layout.eval {
        let sample = ran.report(plane, e, 1, None)?;
        for m in &sample.ues {
            *sums.entry(m.ue_id).or_default() += m.throughput_bps;
        }
        if ep.termination == Termination::Degradation {
            for s in sessions.iter_mut() {
                let Some(id) = open_session(s) else {
                    continue;
                };
                let qos = plane.session_qos(id)?;
                if qos.mean_bps.is_some_and(|m| m < ep.degradation_floor_bps) {
                    close(plane, &mut ran.log, &lease_ues, s)?;
                }
            }
        }
    }
    close_all(plane, &mut ran.log, &lease_ues, &mut sessions)?;

    let n = layout.eval.max(1) as f64;
    Ok(EpisodeReport {
        regime: spec.regime,
        seed: spec.seed,
        log: ran.log,
        eval_mean_bps: sums.into_iter().map(|(u, s)| (u, s / n)).collect(),
        sessions,
        trajectories,
        timeouts,
    })
}

fn open_session(s: &SessionSummary) -> Option<SessionId> {
    match (&s.session, &s.closure) {
        (Some(session), None) => Some(session.session_id),
        _ => None,
    }
}
