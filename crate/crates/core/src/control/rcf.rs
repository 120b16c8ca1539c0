//! The configuration function: sessions on top of the registry.
//!
//! Every mutation goes through `&mut Rcf`, so callers that share an `Rcf`
//! serialize on one lock and all mutations are linearized. Timestamps are a
//! logical clock that ticks once per mutation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::em::quantize_tuning;
use crate::optimizer::{allocate, AllocationPolicy, LeaseId, LeaseIds, RisId};
use crate::UeId;

use super::registry::{JournalEntry, Registry, RisDescriptor, RisState};
use super::router::FeedbackRouter;
use super::wire::{AckStatus, In1Ack, In1Message, In2Message};
use super::ControlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub u64);

impl std::fmt::Display for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "S{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Requested,
    Active,
    Terminating,
    Closed,
}

/// Who asked for the service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Originator {
    #[default]
    Ue,
    Gnb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    pub ue_id: UeId,
    pub qos_request_bps: f64,
    pub policy: AllocationPolicy,
    #[serde(default)]
    pub originator: Originator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    pub ue_id: UeId,
    pub qos_request_bps: f64,
    pub policy: AllocationPolicy,
    pub originator: Originator,
    pub state: SessionState,
    pub leases: Vec<LeaseId>,
    pub created_at: u64,
    pub closed_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum SessionOutcome {
    Created {
        session: Session,
    },
    /// The UE already meets its target; nothing was allocated.
    Declined {
        ue_id: UeId,
        measured_bps: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub session_id: SessionId,
    pub ue_id: UeId,
    pub best_objective: Option<f64>,
    pub iterations: u64,
    /// Leases released by this termination. A shared lease that still has
    /// other beneficiaries is left running and not listed.
    pub released: Vec<LeaseId>,
    pub closed_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QosStatus {
    Satisfied,
    Unsatisfied,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosReport {
    pub session_id: SessionId,
    pub status: QosStatus,
    pub target_bps: f64,
    pub window: Vec<f64>,
    pub mean_bps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcfConfig {
    /// UEs holding a service subscription. PARTITIONED splits the pool
    /// over the subscribers that are not yet served.
    pub subscribers: BTreeSet<UeId>,
    pub window: usize,
    pub archive_capacity: usize,
}

impl Default for RcfConfig {
    fn default() -> Self {
        Self {
            subscribers: BTreeSet::new(),
            window: 10,
            archive_capacity: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Progress {
    iterations: u64,
    best_objective: Option<f64>,
}

#[derive(Debug)]
pub struct Rcf {
    registry: Registry,
    sessions: BTreeMap<SessionId, Session>,
    reports: BTreeMap<SessionId, ClosureReport>,
    progress: BTreeMap<SessionId, Progress>,
    archive: VecDeque<In2Message>,
    router: Arc<FeedbackRouter>,
    config: RcfConfig,
    clock: u64,
    next_session: u64,
}

impl Rcf {
    pub fn new(config: RcfConfig) -> Self {
        Self::with_registry(config, Registry::new())
    }

    pub fn with_registry(config: RcfConfig, registry: Registry) -> Self {
        Self {
            registry,
            sessions: BTreeMap::new(),
            reports: BTreeMap::new(),
            progress: BTreeMap::new(),
            archive: VecDeque::new(),
            router: Arc::new(FeedbackRouter::new()),
            config,
            clock: 0,
            next_session: 1,
        }
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn config(&self) -> &RcfConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn router(&self) -> Arc<FeedbackRouter> {
        Arc::clone(&self.router)
    }

    pub fn archive(&self) -> impl Iterator<Item = &In2Message> {
        self.archive.iter()
    }

    pub fn session(&self, id: SessionId) -> Option<&Session> {
        self.sessions.get(&id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn register_ris(&mut self, descriptor: RisDescriptor) -> Result<RisId, ControlError> {
        let id = descriptor.ris_id.clone();
        self.registry
            .commit(JournalEntry::Register { descriptor })?;
        self.tick();
        Ok(id)
    }

    pub fn ris_state(&self, id: &RisId) -> Result<RisState, ControlError> {
        self.registry
            .state(id)
            .ok_or_else(|| ControlError::NotFound(format!("surface `{id}`")))
    }

    /// Latest `window` throughput readings for `ue`, oldest first.
    pub fn ue_window(&self, ue: UeId, window: usize) -> Vec<f64> {
        let mut values: Vec<f64> = self
            .archive
            .iter()
            .rev()
            .filter_map(|m| {
                m.ues
                    .iter()
                    .find(|r| r.ue_id == ue)
                    .map(|r| r.throughput_bps)
            })
            .take(window)
            .collect();
        values.reverse();
        values
    }

    fn windowed_mean(&self, ue: UeId) -> Option<f64> {
        let w = self.ue_window(ue, self.config.window);
        (w.len() >= self.config.window && !w.is_empty())
            .then(|| w.iter().sum::<f64>() / w.len() as f64)
    }

    /// Opens a session. A UE whose windowed throughput already meets the
    /// request is declined; otherwise every free element is requested.
    pub fn create_session(
        &mut self,
        request: SessionRequest,
    ) -> Result<SessionOutcome, ControlError> {
        if !(request.qos_request_bps.is_finite() && request.qos_request_bps >= 0.0) {
            return Err(ControlError::Validation {
                field: "qos_request_bps".into(),
                reason: "must be a non-negative number".into(),
            });
        }
        if self.registry.is_empty() {
            return Err(ControlError::ServiceUnavailable(
                "no surface registered".into(),
            ));
        }
        let ue = request.ue_id;
        if self
            .sessions
            .values()
            .any(|s| s.ue_id == ue && s.state == SessionState::Active)
        {
            return Err(ControlError::Conflict(format!(
                "UE {ue} already has an active session"
            )));
        }
        if let Some(measured) = self.windowed_mean(ue) {
            if measured >= request.qos_request_bps {
                self.tick();
                return Ok(SessionOutcome::Declined {
                    ue_id: ue,
                    measured_bps: measured,
                });
            }
        }

        let leases = match request.policy {
            AllocationPolicy::Joint => self.join_or_allocate_joint(ue)?,
            AllocationPolicy::Partitioned => self.allocate_partition(ue)?,
        };
        let now = self.tick();
        let id = SessionId(self.next_session);
        self.next_session += 1;
        let session = Session {
            session_id: id,
            ue_id: ue,
            qos_request_bps: request.qos_request_bps,
            policy: request.policy,
            originator: request.originator,
            state: SessionState::Active,
            leases,
            created_at: now,
            closed_at: None,
        };
        self.sessions.insert(id, session.clone());
        self.progress.insert(
            id,
            Progress {
                iterations: 0,
                best_objective: None,
            },
        );
        Ok(SessionOutcome::Created { session })
    }

    fn join_or_allocate_joint(&mut self, ue: UeId) -> Result<Vec<LeaseId>, ControlError> {
        let shared: Vec<LeaseId> = self
            .registry
            .pool()
            .active_leases()
            .filter(|l| l.policy == AllocationPolicy::Joint)
            .map(|l| l.lease_id)
            .collect();
        if !shared.is_empty() {
            for &lease_id in &shared {
                self.registry.commit(JournalEntry::Join {
                    lease_id,
                    ue_id: ue,
                })?;
            }
            return Ok(shared);
        }
        let view = self.registry.pool().free_view();
        let leases = allocate(
            &view,
            &BTreeSet::from([ue]),
            AllocationPolicy::Joint,
            self.registry.pool_mut().lease_ids(),
        )?;
        let ids = leases.iter().map(|l| l.lease_id).collect();
        self.registry.commit(JournalEntry::Grant { leases })?;
        Ok(ids)
    }

    fn allocate_partition(&mut self, ue: UeId) -> Result<Vec<LeaseId>, ControlError> {
        let served: BTreeSet<UeId> = self
            .sessions
            .values()
            .filter(|s| s.state == SessionState::Active)
            .map(|s| s.ue_id)
            .collect();
        let mut share: BTreeSet<UeId> = self
            .config
            .subscribers
            .difference(&served)
            .copied()
            .collect();
        share.insert(ue);
        let view = self.registry.pool().free_view();
        let planned = allocate(
            &view,
            &share,
            AllocationPolicy::Partitioned,
            &mut LeaseIds::default(),
        )?;
        let mut leases: Vec<_> = planned
            .into_iter()
            .filter(|l| l.beneficiary_ues.contains(&ue))
            .collect();
        for lease in &mut leases {
            lease.lease_id = self.registry.pool_mut().lease_ids().next_id();
        }
        let ids = leases.iter().map(|l| l.lease_id).collect();
        self.registry.commit(JournalEntry::Grant { leases })?;
        Ok(ids)
    }

    /// Closes a session, releasing and resetting every lease it no longer
    /// shares. Closing a closed session returns the original report.
    pub fn terminate_session(&mut self, id: SessionId) -> Result<ClosureReport, ControlError> {
        if let Some(report) = self.reports.get(&id) {
            return Ok(report.clone());
        }
        let session = self
            .sessions
            .get_mut(&id)
            .ok_or_else(|| ControlError::NotFound(format!("session {id}")))?;
        session.state = SessionState::Terminating;
        let (ue, leases) = (session.ue_id, session.leases.clone());
        let mut released = Vec::new();
        for lease_id in leases {
            let Some(lease) = self.registry.pool().lease(lease_id) else {
                continue;
            };
            if !lease.is_active() {
                continue;
            }
            let remaining = lease.beneficiary_ues.iter().filter(|&&u| u != ue).count();
            if remaining > 0 {
                self.registry.commit(JournalEntry::Leave {
                    lease_id,
                    ue_id: ue,
                })?;
            } else {
                self.registry.commit(JournalEntry::Release { lease_id })?;
                released.push(lease_id);
            }
        }
        let now = self.tick();
        let session = self.sessions.get_mut(&id).expect("checked above");
        session.state = SessionState::Closed;
        session.closed_at = Some(now);
        let progress = self.progress.get(&id).copied().unwrap_or(Progress {
            iterations: 0,
            best_objective: None,
        });
        let report = ClosureReport {
            session_id: id,
            ue_id: ue,
            best_objective: progress.best_objective,
            iterations: progress.iterations,
            released,
            closed_at: now,
        };
        self.reports.insert(id, report.clone());
        Ok(report)
    }

    /// Records optimizer progress for the closure report.
    pub fn report_progress(
        &mut self,
        id: SessionId,
        iterations: u64,
        best_objective: Option<f64>,
    ) -> Result<(), ControlError> {
        let session = self
            .sessions
            .get(&id)
            .ok_or_else(|| ControlError::NotFound(format!("session {id}")))?;
        if session.state != SessionState::Active {
            return Err(ControlError::Conflict(format!(
                "session {id} is not active"
            )));
        }
        self.progress.insert(
            id,
            Progress {
                iterations,
                best_objective,
            },
        );
        Ok(())
    }

    /// Applies an In1 update. Rejections leave every piece of state as it
    /// was; a replayed or older sequence number is acknowledged as stale.
    pub fn push_coefficients(&mut self, msg: &In1Message) -> Result<In1Ack, ControlError> {
        msg.validate()?;
        let descriptor = self
            .registry
            .descriptor(&msg.ris_id)
            .ok_or_else(|| ControlError::NotFound(format!("surface `{}`", msg.ris_id)))?;
        let levels = descriptor.phase_quantization_level;
        let size = descriptor.elements();
        if let Some(&bad) = msg.indices.iter().find(|&&i| i >= size) {
            return Err(ControlError::Validation {
                field: "indices".into(),
                reason: format!("index {bad} outside array of {size}"),
            });
        }
        let pool = self.registry.pool();
        let lease = msg
            .indices
            .first()
            .and_then(|&i| pool.owner_of(&msg.ris_id, i))
            .and_then(|id| pool.lease(id))
            .filter(|l| l.is_active() && l.contains_all(&msg.indices))
            .ok_or_else(|| {
                ControlError::Unauthorized("indices are not covered by one active lease".into())
            })?;
        let lease_id = lease.lease_id;
        if self
            .registry
            .last_seq(lease_id)
            .is_some_and(|last| msg.seq <= last)
        {
            return Ok(In1Ack::new(
                msg.ris_id.clone(),
                msg.seq,
                AckStatus::Stale,
                None,
            ));
        }
        let tunings = msg
            .tunings()?
            .into_iter()
            .map(|t| quantize_tuning(t, levels))
            .collect();
        self.registry.commit(JournalEntry::Apply {
            ris_id: msg.ris_id.clone(),
            lease_id,
            seq: msg.seq,
            indices: msg.indices.clone(),
            tunings,
        })?;
        self.tick();
        Ok(In1Ack::new(
            msg.ris_id.clone(),
            msg.seq,
            AckStatus::Applied,
            None,
        ))
    }

    /// Archives feedback and hands it to a waiting optimizer. Returns
    /// whether it was routed.
    pub fn ingest_feedback(&mut self, msg: In2Message) -> Result<bool, ControlError> {
        msg.validate()?;
        let routed = self.router.deliver(&msg);
        if self.config.archive_capacity > 0 {
            while self.archive.len() >= self.config.archive_capacity {
                self.archive.pop_front();
            }
            self.archive.push_back(msg);
        }
        Ok(routed)
    }

    /// Informational only: an unsatisfied session stays active.
    pub fn session_qos_check(&self, id: SessionId) -> Result<QosReport, ControlError> {
        let session = self
            .sessions
            .get(&id)
            .ok_or_else(|| ControlError::NotFound(format!("session {id}")))?;
        let window = self.ue_window(session.ue_id, self.config.window);
        let enough = session.state == SessionState::Active
            && window.len() >= self.config.window
            && !window.is_empty();
        let mean = enough.then(|| window.iter().sum::<f64>() / window.len() as f64);
        let status = match mean {
            None => QosStatus::Indeterminate,
            Some(m) if m >= session.qos_request_bps => QosStatus::Satisfied,
            Some(_) => QosStatus::Unsatisfied,
        };
        Ok(QosReport {
            session_id: id,
            status,
            target_bps: session.qos_request_bps,
            window,
            mean_bps: mean,
        })
    }

    /// Session/lease consistency on top of the registry audit.
    pub fn audit(&self) -> Result<(), String> {
        self.registry.audit(true)?;
        let pool = self.registry.pool();
        for s in self.sessions.values() {
            match s.state {
                SessionState::Active => {
                    let live = s.leases.iter().any(|id| {
                        pool.lease(*id)
                            .is_some_and(|l| l.is_active() && l.beneficiary_ues.contains(&s.ue_id))
                    });
                    if !live {
                        return Err(format!("{} active without a live lease", s.session_id));
                    }
                }
                SessionState::Closed => {
                    for id in &s.leases {
                        // a later session of the same UE may have rejoined the lease
                        let rejoined = self.sessions.values().any(|o| {
                            o.state == SessionState::Active
                                && o.ue_id == s.ue_id
                                && o.leases.contains(id)
                        });
                        if !rejoined
                            && pool.lease(*id).is_some_and(|l| {
                                l.is_active() && l.beneficiary_ues.contains(&s.ue_id)
                            })
                        {
                            return Err(format!(
                                "{} closed but still served by {id}",
                                s.session_id
                            ));
                        }
                    }
                }
                _ => return Err(format!("{} left in a transient state", s.session_id)),
            }
        }
        Ok(())
    }
}
