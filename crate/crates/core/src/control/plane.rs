//! The interface the RAN side and the optimizer talk to.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::optimizer::RisId;

use super::rcf::{ClosureReport, QosReport, Rcf, SessionId, SessionOutcome, SessionRequest};
use super::registry::{RisDescriptor, RisState};
use super::wire::{In1Ack, In1Message, In2Message};
use super::ControlError;

pub trait ControlPlane {
    fn register_ris(&mut self, descriptor: RisDescriptor) -> Result<RisId, ControlError>;
    fn ris_state(&mut self, id: &RisId) -> Result<RisState, ControlError>;
    fn create_session(&mut self, request: SessionRequest) -> Result<SessionOutcome, ControlError>;
    fn terminate_session(&mut self, id: SessionId) -> Result<ClosureReport, ControlError>;
    fn session_qos(&mut self, id: SessionId) -> Result<QosReport, ControlError>;
    fn report_progress(
        &mut self,
        id: SessionId,
        iterations: u64,
        best_objective: Option<f64>,
    ) -> Result<(), ControlError>;
    fn push_coefficients(&mut self, msg: &In1Message) -> Result<In1Ack, ControlError>;
    /// Returns whether the feedback was routed to a waiter.
    fn publish_feedback(&mut self, msg: &In2Message) -> Result<bool, ControlError>;
    fn expect_feedback(&mut self, tag: &str) -> Result<(), ControlError>;
    fn cancel_feedback(&mut self, tag: &str) -> Result<(), ControlError>;
    fn await_feedback(&mut self, tag: &str, timeout: Duration) -> Result<In2Message, ControlError>;
}

/// In-process plane. Every message still goes through its wire encoding so
/// the loopback and remote paths see identical bytes.
#[derive(Debug)]
pub struct Loopback {
    rcf: Rcf,
}

fn through_json<T: Serialize + DeserializeOwned>(value: &T) -> Result<T, ControlError> {
    let text = serde_json::to_string(value).map_err(|e| ControlError::Malformed(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| ControlError::Malformed(e.to_string()))
}

impl Loopback {
    pub fn new(rcf: Rcf) -> Self {
        Self { rcf }
    }

    pub fn rcf(&self) -> &Rcf {
        &self.rcf
    }

    pub fn into_inner(self) -> Rcf {
        self.rcf
    }

    fn reply<T: Serialize + DeserializeOwned>(
        r: Result<T, ControlError>,
    ) -> Result<T, ControlError> {
        match r {
            Ok(v) => through_json(&v),
            Err(e) => Err(through_json(&e)?),
        }
    }
}

impl ControlPlane for Loopback {
    fn register_ris(&mut self, descriptor: RisDescriptor) -> Result<RisId, ControlError> {
        let descriptor = through_json(&descriptor)?;
        Self::reply(self.rcf.register_ris(descriptor))
    }

    fn ris_state(&mut self, id: &RisId) -> Result<RisState, ControlError> {
        Self::reply(self.rcf.ris_state(id))
    }

    fn create_session(&mut self, request: SessionRequest) -> Result<SessionOutcome, ControlError> {
        let request = through_json(&request)?;
        Self::reply(self.rcf.create_session(request))
    }

    fn terminate_session(&mut self, id: SessionId) -> Result<ClosureReport, ControlError> {
        Self::reply(self.rcf.terminate_session(id))
    }

    fn session_qos(&mut self, id: SessionId) -> Result<QosReport, ControlError> {
        Self::reply(self.rcf.session_qos_check(id))
    }

    fn report_progress(
        &mut self,
        id: SessionId,
        iterations: u64,
        best_objective: Option<f64>,
    ) -> Result<(), ControlError> {
        Self::reply(self.rcf.report_progress(id, iterations, best_objective))
    }

    fn push_coefficients(&mut self, msg: &In1Message) -> Result<In1Ack, ControlError> {
        let msg = In1Message::decode(&msg.encode())?;
        let ack = self.rcf.push_coefficients(&msg)?;
        Ok(In1Ack::decode(&ack.encode())?)
    }

    fn publish_feedback(&mut self, msg: &In2Message) -> Result<bool, ControlError> {
        let msg = In2Message::decode(&msg.encode())?;
        Self::reply(self.rcf.ingest_feedback(msg))
    }

    fn expect_feedback(&mut self, tag: &str) -> Result<(), ControlError> {
        self.rcf.router().expect(tag);
        Ok(())
    }

    fn cancel_feedback(&mut self, tag: &str) -> Result<(), ControlError> {
        self.rcf.router().cancel(tag);
        Ok(())
    }

    fn await_feedback(&mut self, tag: &str, timeout: Duration) -> Result<In2Message, ControlError> {
        let msg = self
            .rcf
            .router()
            .wait(tag, timeout)
            .ok_or_else(|| ControlError::Timeout(format!("feedback `{tag}`")))?;
        Ok(In2Message::decode(&msg.encode())?)
    }
}
