//! Asset Management Infrastructure: the authoritative off-chip ledger and
//! its line-delimited JSON protocol.
//!
//! Every request and reply is one JSON object on one line, UTF-8, with all
//! binary fields as lowercase hex. Requests name an AMI session (a 128-bit
//! handle the HSM opens at chip birth and binds to the chip's communication
//! key); asset-bearing fields travel only inside [`SecureEnvelope`]s sealed
//! under that key.

mod client;
mod ledger;
pub mod server;

pub use client::{AmiClient, AmiTransport, InProcess, Offline, Remote};
pub use ledger::{provision_decision, AmiRecord, Ledger, LedgerState, Session};

use serde::{Deserialize, Serialize};

use crate::enclave::envelope::SecureEnvelope;
use crate::enclave::vault::AssetKind;
use crate::lifecycle::{Actor, ChipStatus, LifecycleState, TransitionDecision};
use crate::IpId;

pub type SessionId = [u8; 16];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AmiError {
    #[error("AMI unreachable")]
    Unreachable,
    #[error("AMI i/o error: {0}")]
    Io(String),
    #[error("AMI protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum ProvisionDenied {
    #[error("unknown chip")]
    Unknown,
    #[error("chip is decommissioned")]
    Decommissioned,
    #[error("lifecycle claim does not match the ledger")]
    LifecycleMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Duplicate,
    UnknownSession,
    IntegrityFailure,
    Malformed,
    IllegalLifecycle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedAsset {
    pub kind: AssetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip_id: Option<IpId>,
    pub envelope: SecureEnvelope,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AmiMessage {
    /// HSM to AMI: binds a session to a comm key sealed under the HSM trust
    /// key.
    OpenSession {
        #[serde(with = "hex::serde")]
        session: SessionId,
        envelope: SecureEnvelope,
    },
    SessionOpened {
        #[serde(with = "hex::serde")]
        session: SessionId,
    },
    /// Plaintext: chip id (32 bytes) followed by the lifecycle code.
    Register {
        #[serde(with = "hex::serde")]
        session: SessionId,
        envelope: SecureEnvelope,
    },
    RegisterAck {
        /// SHA-256 of the chip id, never the id itself.
        chip_ref: String,
    },
    RegisterReject {
        reason: RejectReason,
    },
    EnrollAsset {
        #[serde(with = "hex::serde")]
        session: SessionId,
        asset: SealedAsset,
    },
    EnrollResult {
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    /// Plaintext: chip id followed by the claimed lifecycle code.
    Authenticate {
        #[serde(with = "hex::serde")]
        session: SessionId,
        envelope: SecureEnvelope,
    },
    AuthResult {
        accepted: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<ProvisionDenied>,
    },
    /// Same plaintext as `Authenticate`.
    Provision {
        #[serde(with = "hex::serde")]
        session: SessionId,
        envelope: SecureEnvelope,
    },
    ProvisionResult {
        assets: Vec<SealedAsset>,
    },
    /// Plaintext: chip id, from code, to code, 32-byte validation key.
    LifecycleUpdate {
        #[serde(with = "hex::serde")]
        session: SessionId,
        actor: Actor,
        envelope: SecureEnvelope,
    },
    LifecycleResult {
        decision: TransitionDecision,
    },
    StatusQuery {
        #[serde(with = "hex::serde")]
        session: SessionId,
    },
    Status {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lifecycle: Option<LifecycleState>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        status: Option<ChipStatus>,
    },
    Error {
        message: String,
    },
}

impl AmiMessage {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("messages always serialise")
    }

    pub fn from_line(line: &str) -> Result<Self, AmiError> {
        serde_json::from_str(line.trim_end()).map_err(|e| AmiError::Protocol(e.to_string()))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            AmiMessage::OpenSession { .. } => "open_session",
            AmiMessage::SessionOpened { .. } => "session_opened",
            AmiMessage::Register { .. } => "register",
            AmiMessage::RegisterAck { .. } => "register_ack",
            AmiMessage::RegisterReject { .. } => "register_reject",
            AmiMessage::EnrollAsset { .. } => "enroll_asset",
            AmiMessage::EnrollResult { .. } => "enroll_result",
            AmiMessage::Authenticate { .. } => "authenticate",
            AmiMessage::AuthResult { .. } => "auth_result",
            AmiMessage::Provision { .. } => "provision",
            AmiMessage::ProvisionResult { .. } => "provision_result",
            AmiMessage::LifecycleUpdate { .. } => "lifecycle_update",
            AmiMessage::LifecycleResult { .. } => "lifecycle_result",
            AmiMessage::StatusQuery { .. } => "status_query",
            AmiMessage::Status { .. } => "status",
            AmiMessage::Error { .. } => "error",
        }
    }
}

/// Ledger handle for a chip id: hex SHA-256 of the id.
pub fn chip_ref(chip_id: &[u8; 32]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(chip_id))
}
