//! Control plane: the surface registry, subscriber sessions, coefficient
//! pushes and feedback intake, plus the wire formats that carry them.

pub mod plane;
pub mod rcf;
pub mod registry;
pub mod router;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::AllocationError;

pub use plane::{ControlPlane, Loopback};
pub use rcf::{
    ClosureReport, Originator, QosReport, QosStatus, Rcf, RcfConfig, Session, SessionId,
    SessionOutcome, SessionRequest, SessionState,
};
pub use registry::{JournalEntry, Registry, RisDescriptor, RisState};
pub use router::FeedbackRouter;
pub use wire::{AckStatus, In1Ack, In1Message, In2Message, UeRecord, WireError, WIRE_VERSION};

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ControlError {
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("service unavailable: {0}")]
    ServiceUnavailable(String),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed: {0}")]
    Malformed(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("journal: {0}")]
    Journal(String),
}

impl From<AllocationError> for ControlError {
    fn from(e: AllocationError) -> Self {
        let text = e.to_string();
        match e {
            AllocationError::EmptyRequest => ControlError::Validation {
                field: "ue_id".into(),
                reason: text,
            },
            AllocationError::Unavailable { .. } => ControlError::ServiceUnavailable(text),
            AllocationError::UnknownRis(_) | AllocationError::UnknownLease(_) => {
                ControlError::NotFound(text)
            }
            AllocationError::DuplicateRis(_) | AllocationError::ElementBusy { .. } => {
                ControlError::Conflict(text)
            }
            AllocationError::IndexOutOfRange { .. } => ControlError::Validation {
                field: "indices".into(),
                reason: text,
            },
        }
    }
}

impl From<WireError> for ControlError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Checksum => ControlError::ChecksumMismatch,
            WireError::Malformed(_) | WireError::Version(_) => {
                ControlError::Malformed(e.to_string())
            }
            WireError::Invalid(reason) => ControlError::Validation {
                field: "message".into(),
                reason,
            },
        }
    }
}
