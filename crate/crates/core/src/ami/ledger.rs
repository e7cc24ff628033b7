use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{chip_ref, AmiMessage, ProvisionDenied, RejectReason, SealedAsset, SessionId};
use crate::enclave::envelope::{open_envelope, seal_asset, CommKey, Nonce, SecureEnvelope};
use crate::enclave::vault::{asset_map, AssetKey, AssetKind};
use crate::lifecycle::{
    request_transition, Actor, ChipStatus, DenyReason, LifecycleState, TransitionDecision, TransitionTable,
    ValidationKey,
};
use crate::puf::ChipIdentity;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmiRecord {
    pub chip_id: ChipIdentity,
    pub lifecycle: LifecycleState,
    pub status: ChipStatus,
    #[serde(with = "asset_map")]
    pub assets: BTreeMap<AssetKey, Vec<u8>>,
    /// Logical timestamp.
    pub registered_at: u64,
}

impl AmiRecord {
    fn transition_table(&self) -> TransitionTable {
        let keys = self
            .assets
            .iter()
            .filter_map(|(k, v)| match k.kind {
                AssetKind::LifecycleValidationKey { from, to } => {
                    <ValidationKey>::try_from(v.as_slice()).ok().map(|key| ((from, to), key))
                }
                _ => None,
            })
            .collect();
        TransitionTable::from_keys(&keys)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    #[serde(with = "hex::serde")]
    pub comm_key: CommKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chip_ref: Option<String>,
    /// Replies sealed so far; feeds reply nonces.
    pub replies: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerState {
    /// Keyed by chip_ref.
    pub records: BTreeMap<String, AmiRecord>,
    /// Keyed by hex session id.
    pub sessions: BTreeMap<String, Session>,
    pub clock: u64,
    #[serde(with = "hex::serde")]
    trust_key: [u8; 32],
}

/// Assets are released only to registered, active chips whose lifecycle
/// claim matches the ledger.
pub fn provision_decision(record: Option<&AmiRecord>, claim: LifecycleState) -> Result<(), ProvisionDenied> {
    let record = record.ok_or(ProvisionDenied::Unknown)?;
    if record.status == ChipStatus::Decommissioned {
        return Err(ProvisionDenied::Decommissioned);
    }
    if record.lifecycle != claim {
        return Err(ProvisionDenied::LifecycleMismatch);
    }
    Ok(())
}

fn reject(reason: RejectReason) -> AmiMessage {
    AmiMessage::RegisterReject { reason }
}

fn error(message: impl Into<String>) -> AmiMessage {
    AmiMessage::Error {
        message: message.into(),
    }
}

fn split_chip_claim(plain: &[u8]) -> Option<(ChipIdentity, LifecycleState)> {
    if plain.len() != 33 {
        return None;
    }
    let digest: [u8; 32] = plain[..32].try_into().ok()?;
    Some((ChipIdentity { digest }, LifecycleState::from_code(plain[32])?))
}

impl LedgerState {
    pub fn new(trust_key: [u8; 32]) -> Self {
        Self {
            records: BTreeMap::new(),
            sessions: BTreeMap::new(),
            clock: 0,
            trust_key,
        }
    }

    pub fn record_by_chip(&self, chip_id: &ChipIdentity) -> Option<&AmiRecord> {
        self.records.get(&chip_ref(&chip_id.digest))
    }

    fn reply_nonce(&mut self, session: &SessionId) -> Nonce {
        let s = self.sessions.get_mut(&hex::encode(session)).expect("session exists");
        let nonce = Sha256::new()
            .chain_update(b"ami-reply")
            .chain_update(session)
            .chain_update(s.replies.to_be_bytes())
            .finalize();
        s.replies += 1;
        nonce[..16].try_into().expect("16 bytes")
    }

    fn open(&self, session: &SessionId, env: &SecureEnvelope) -> Result<(&Session, Vec<u8>), RejectReason> {
        let s = self
            .sessions
            .get(&hex::encode(session))
            .ok_or(RejectReason::UnknownSession)?;
        let plain = open_envelope(env, &s.comm_key).map_err(|_| RejectReason::IntegrityFailure)?;
        Ok((s, plain))
    }

    pub fn handle(&mut self, msg: AmiMessage) -> AmiMessage {
        match msg {
            AmiMessage::OpenSession { session, envelope } => self.open_session(session, &envelope),
            AmiMessage::Register { session, envelope } => self.register_chip(session, &envelope),
            AmiMessage::EnrollAsset { session, asset } => match self.enroll_assets(session, std::slice::from_ref(&asset)) {
                Ok(()) => AmiMessage::EnrollResult { ok: true, reason: None },
                Err(reason) => AmiMessage::EnrollResult {
                    ok: false,
                    reason: Some(reason),
                },
            },
            AmiMessage::Authenticate { session, envelope } => match self.authenticate(session, &envelope) {
                Ok(_) => AmiMessage::AuthResult {
                    accepted: true,
                    reason: None,
                },
                Err(reason) => AmiMessage::AuthResult {
                    accepted: false,
                    reason: Some(reason),
                },
            },
            AmiMessage::Provision { session, envelope } => self.authenticate_and_provision(session, &envelope),
            AmiMessage::LifecycleUpdate {
                session,
                actor,
                envelope,
            } => AmiMessage::LifecycleResult {
                decision: self.update_lifecycle(session, actor, &envelope),
            },
            AmiMessage::StatusQuery { session } => self.status(session),
            other => error(format!("unexpected message type {}", other.type_name())),
        }
    }

    fn open_session(&mut self, session: SessionId, env: &SecureEnvelope) -> AmiMessage {
        let Ok(plain) = open_envelope(env, &self.trust_key) else {
            return error("session key envelope failed integrity check");
        };
        let Ok(comm_key) = CommKey::try_from(plain.as_slice()) else {
            return error("session key must be 32 bytes");
        };
        let id = hex::encode(session);
        match self.sessions.get(&id) {
            Some(s) if s.comm_key != comm_key => return error("session id already bound"),
            Some(_) => {}
            None => {
                self.sessions.insert(
                    id,
                    Session {
                        comm_key,
                        chip_ref: None,
                        replies: 0,
                    },
                );
            }
        }
        AmiMessage::SessionOpened { session }
    }

    /// Check-and-insert on chip id. Runs under the ledger lock, so two
    /// registrations of one id can never both succeed.
    pub fn register_chip(&mut self, session: SessionId, env: &SecureEnvelope) -> AmiMessage {
        let plain = match self.open(&session, env) {
            Ok((_, p)) => p,
            Err(r) => return reject(r),
        };
        let verdict = match split_chip_claim(&plain) {
            None => Err(RejectReason::Malformed),
            Some((chip_id, _)) if self.records.contains_key(&chip_ref(&chip_id.digest)) => Err(RejectReason::Duplicate),
            Some((_, lifecycle)) if lifecycle != LifecycleState::FabricationTest => Err(RejectReason::IllegalLifecycle),
            Some(claim) => Ok(claim),
        };
        let (chip_id, lifecycle) = match verdict {
            Ok(claim) => claim,
            Err(reason) => {
                // a failed birth leaves no trace: drop the session if nothing is bound to it
                let id = hex::encode(session);
                if self.sessions.get(&id).is_some_and(|s| s.chip_ref.is_none()) {
                    self.sessions.remove(&id);
                }
                return reject(reason);
            }
        };
        let cref = chip_ref(&chip_id.digest);
        self.clock += 1;
        self.records.insert(
            cref.clone(),
            AmiRecord {
                chip_id,
                lifecycle,
                status: ChipStatus::Active,
                assets: BTreeMap::new(),
                registered_at: self.clock,
            },
        );
        if let Some(s) = self.sessions.get_mut(&hex::encode(session)) {
            s.chip_ref = Some(cref.clone());
        }
        AmiMessage::RegisterAck { chip_ref: cref }
    }

    /// Stores each asset under (kind, ip). PUF responses are kept only as
    /// IPIDs, i.e. SHA-256 of the response bytes.
    pub fn enroll_assets(&mut self, session: SessionId, assets: &[SealedAsset]) -> Result<(), String> {
        let mut opened = Vec::with_capacity(assets.len());
        let cref = {
            let s = self
                .sessions
                .get(&hex::encode(session))
                .ok_or_else(|| "unknown session".to_owned())?;
            let cref = s.chip_ref.clone().ok_or_else(|| "not registered".to_owned())?;
            for a in assets {
                let plain = open_envelope(&a.envelope, &s.comm_key).map_err(|_| "integrity failure".to_owned())?;
                opened.push((AssetKey { kind: a.kind, ip: a.ip_id.clone() }, plain));
            }
            cref
        };
        let record = self.records.get_mut(&cref).ok_or_else(|| "not registered".to_owned())?;
        if record.status == ChipStatus::Decommissioned {
            return Err("decommissioned".into());
        }
        for (key, plain) in opened {
            let value = if key.kind == AssetKind::PufExpectedResponse {
                Sha256::digest(&plain).to_vec()
            } else {
                plain
            };
            record.assets.insert(key, value);
        }
        Ok(())
    }

    fn authenticate(&self, session: SessionId, env: &SecureEnvelope) -> Result<String, ProvisionDenied> {
        let (s, plain) = self.open(&session, env).map_err(|_| ProvisionDenied::Unknown)?;
        let (chip_id, claim) = split_chip_claim(&plain).ok_or(ProvisionDenied::Unknown)?;
        let cref = chip_ref(&chip_id.digest);
        if s.chip_ref.as_deref() != Some(cref.as_str()) {
            return Err(ProvisionDenied::Unknown);
        }
        provision_decision(self.records.get(&cref), claim)?;
        Ok(cref)
    }

    pub fn authenticate_and_provision(&mut self, session: SessionId, env: &SecureEnvelope) -> AmiMessage {
        let cref = match self.authenticate(session, env) {
            Ok(c) => c,
            Err(reason) => {
                return AmiMessage::AuthResult {
                    accepted: false,
                    reason: Some(reason),
                }
            }
        };
        let releasable: Vec<(AssetKey, Vec<u8>)> = self.records[&cref]
            .assets
            .iter()
            .filter(|(k, _)| {
                matches!(
                    k.kind,
                    AssetKind::ObfuscationVector | AssetKind::FirmwareSignature | AssetKind::ScanKey
                )
            })
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let comm_key = self.sessions[&hex::encode(session)].comm_key;
        let assets = releasable
            .into_iter()
            .map(|(k, v)| SealedAsset {
                kind: k.kind,
                ip_id: k.ip,
                envelope: seal_asset(&v, &comm_key, self.reply_nonce(&session)),
            })
            .collect();
        AmiMessage::ProvisionResult { assets }
    }

    /// Validates against the chip's enrolled transition keys; reaching
    /// end-of-life decommissions the record for good.
    pub fn update_lifecycle(&mut self, session: SessionId, actor: Actor, env: &SecureEnvelope) -> TransitionDecision {
        let denied = TransitionDecision::Denied(DenyReason::BadKey);
        let Ok((s, plain)) = self.open(&session, env) else {
            return denied;
        };
        if plain.len() != 32 + 2 + 32 {
            return denied;
        }
        let cref = chip_ref(plain[..32].try_into().expect("32 bytes"));
        if s.chip_ref.as_deref() != Some(cref.as_str()) {
            return denied;
        }
        let (Some(from), Some(to)) = (LifecycleState::from_code(plain[32]), LifecycleState::from_code(plain[33])) else {
            return denied;
        };
        let key: ValidationKey = plain[34..].try_into().expect("32 bytes");
        let Some(record) = self.records.get_mut(&cref) else {
            return denied;
        };
        if record.status == ChipStatus::Decommissioned || record.lifecycle != from {
            return TransitionDecision::Denied(DenyReason::NoSuchEdge);
        }
        let decision = request_transition(&record.transition_table(), from, to, &key, actor);
        if decision.is_accepted() {
            record.lifecycle = to;
            if to == LifecycleState::EndOfLife {
                record.status = ChipStatus::Decommissioned;
            }
        }
        decision
    }

    fn status(&self, session: SessionId) -> AmiMessage {
        let record = self
            .sessions
            .get(&hex::encode(session))
            .and_then(|s| s.chip_ref.as_ref())
            .and_then(|c| self.records.get(c));
        AmiMessage::Status {
            lifecycle: record.map(|r| r.lifecycle),
            status: record.map(|r| r.status),
        }
    }
}

/// The ledger behind a single serialization point.
#[derive(Debug)]
pub struct Ledger {
    state: Mutex<LedgerState>,
}

impl Ledger {
    pub fn new(trust_key: [u8; 32]) -> Self {
        Self::from_state(LedgerState::new(trust_key))
    }

    pub fn from_state(state: LedgerState) -> Self {
        Self {
            state: Mutex::new(state),
        }
    }

    pub fn handle(&self, msg: AmiMessage) -> AmiMessage {
        self.state.lock().expect("ledger lock poisoned").handle(msg)
    }

    /// One request line in, one reply line out (no trailing newline).
    /// Malformed input yields an `error` reply.
    pub fn handle_line(&self, line: &str) -> String {
        let reply = match AmiMessage::from_line(line) {
            Ok(msg) => self.handle(msg),
            Err(e) => error(e.to_string()),
        };
        reply.to_line()
    }

    pub fn with_state<T>(&self, f: impl FnOnce(&LedgerState) -> T) -> T {
        f(&self.state.lock().expect("ledger lock poisoned"))
    }

    pub fn snapshot(&self) -> LedgerState {
        self.with_state(Clone::clone)
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_vec_pretty(&self.snapshot())?;
        std::fs::write(path, json)
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let bytes = std::fs::read(path)?;
        let state: LedgerState = serde_json::from_slice(&bytes)?;
        Ok(Self::from_state(state))
    }
}
