//! The HSM that mediates chip birth: it mints the chip's communication key,
//! opens the chip's AMI session, relays registration, enrolls OEM assets and
//! performs the first lifecycle transition.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ami::{AmiClient, AmiError, AmiMessage, RejectReason, SealedAsset, SessionId};
use crate::enclave::envelope::{seal_asset, CommKey};
use crate::enclave::vault::{AssetKey, AssetKind};
use crate::enclave::{request_lifecycle_transition, run_boot, BootError, BootReport, Chip};
use crate::lifecycle::{Actor, LifecycleState, TransitionDecision, TransitionTable};
use crate::transcript::{Channel, Endpoint, Transcript};
use crate::IpId;

#[derive(Debug, thiserror::Error)]
pub enum HsmError {
    #[error("chip is in {0}, birth requires fabrication_test")]
    WrongLifecycle(LifecycleState),
    #[error("AMI unreachable")]
    AmiUnreachable,
    #[error("registration rejected: {0:?}")]
    RegistrationRejected(RejectReason),
    #[error("boot failed: {0}")]
    Boot(BootError),
    #[error("lifecycle transition denied: {0:?}")]
    TransitionDenied(TransitionDecision),
    #[error("AMI protocol error: {0}")]
    Protocol(String),
}

impl From<BootError> for HsmError {
    fn from(e: BootError) -> Self {
        match e {
            BootError::AmiUnreachable => HsmError::AmiUnreachable,
            BootError::RegistrationRejected(r) => HsmError::RegistrationRejected(r),
            other => HsmError::Boot(other),
        }
    }
}

impl From<AmiError> for HsmError {
    fn from(e: AmiError) -> Self {
        match e {
            AmiError::Unreachable => HsmError::AmiUnreachable,
            other => HsmError::Protocol(other.to_string()),
        }
    }
}

/// HSM custody of one chip during fabrication test.
#[derive(Debug, Clone)]
pub struct HsmSession {
    trust_key: [u8; 32],
    /// Every validation key: the HSM's birth key plus the OEM-supplied ones.
    pub validation_keys: TransitionTable,
    /// OEM-supplied unlock vectors, delivered to the AMI at birth.
    pub obfuscation_vectors: BTreeMap<IpId, Vec<u8>>,
    rng: ChaCha20Rng,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthReport {
    pub chip_ref: String,
    #[serde(with = "hex::serde")]
    pub session: SessionId,
    pub boot: BootReport,
    pub enrolled_assets: usize,
    pub transition: TransitionDecision,
}

impl HsmSession {
    pub fn new(
        trust_key: [u8; 32],
        validation_keys: TransitionTable,
        obfuscation_vectors: BTreeMap<IpId, Vec<u8>>,
        rng_seed: u64,
    ) -> Self {
        Self {
            trust_key,
            validation_keys,
            obfuscation_vectors,
            rng: ChaCha20Rng::seed_from_u64(rng_seed),
        }
    }

    fn enroll(
        &mut self,
        ami: &mut AmiClient,
        t: &mut Transcript,
        session: SessionId,
        comm_key: &CommKey,
        key: AssetKey,
        plain: &[u8],
    ) -> Result<(), HsmError> {
        let mut nonce = [0u8; 16];
        self.rng.fill_bytes(&mut nonce);
        let asset = SealedAsset {
            kind: key.kind,
            ip_id: key.ip,
            envelope: seal_asset(plain, comm_key, nonce),
        };
        match ami.call(t, Endpoint::Hsm, &AmiMessage::EnrollAsset { session, asset })? {
            AmiMessage::EnrollResult { ok: true, .. } => Ok(()),
            other => Err(HsmError::Protocol(format!("enrollment refused: {other:?}"))),
        }
    }

    fn ceremony(&mut self, chip: &mut Chip, ami: &mut AmiClient, t: &mut Transcript) -> Result<BirthReport, HsmError> {
        let mut comm_key = [0u8; 32];
        let mut session = [0u8; 16];
        self.rng.fill_bytes(&mut comm_key);
        self.rng.fill_bytes(&mut session);

        // installed over the HSM's physical test interface; nothing leaves it
        t.record(Channel::BootIface, Endpoint::Hsm, Endpoint::Enclave, "key_install", vec![], false);
        let vault = &mut chip.enclave.vault;
        vault.store(AssetKey::chip(AssetKind::CommKey), comm_key.to_vec());
        vault.store(AssetKey::chip(AssetKind::SessionId), session.to_vec());
        for e in self.validation_keys.entries() {
            vault.store(
                AssetKey::chip(AssetKind::LifecycleValidationKey { from: e.from, to: e.to }),
                e.validation_key.to_vec(),
            );
        }

        let mut nonce = [0u8; 16];
        self.rng.fill_bytes(&mut nonce);
        let envelope = seal_asset(&comm_key, &self.trust_key, nonce);
        match ami.call(t, Endpoint::Hsm, &AmiMessage::OpenSession { session, envelope })? {
            AmiMessage::SessionOpened { .. } => {}
            other => return Err(HsmError::Protocol(format!("session refused: {other:?}"))),
        }

        let boot = run_boot(chip, ami, t)?;
        let chip_ref = boot
            .registered
            .clone()
            .ok_or_else(|| HsmError::Protocol("birth boot did not register".into()))?;

        let mut enrolled = 0;
        let vectors: Vec<_> = self.obfuscation_vectors.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        for (ip, v) in vectors {
            self.enroll(ami, t, session, &comm_key, AssetKey::ip(AssetKind::ObfuscationVector, ip), &v)?;
            enrolled += 1;
        }
        let keys: Vec<_> = self.validation_keys.entries().to_vec();
        for e in keys {
            let key = AssetKey::chip(AssetKind::LifecycleValidationKey { from: e.from, to: e.to });
            self.enroll(ami, t, session, &comm_key, key, &e.validation_key)?;
            enrolled += 1;
        }

        let birth_key = self
            .validation_keys
            .key(LifecycleState::FabricationTest, LifecycleState::PackagingOem)
            .ok_or(HsmError::TransitionDenied(TransitionDecision::Denied(
                crate::lifecycle::DenyReason::BadKey,
            )))?;
        let transition = request_lifecycle_transition(
            chip,
            ami,
            t,
            LifecycleState::PackagingOem,
            &birth_key,
            Actor::Hsm,
        )?;
        if !transition.is_accepted() {
            return Err(HsmError::TransitionDenied(transition));
        }
        Ok(BirthReport {
            chip_ref,
            session,
            boot,
            enrolled_assets: enrolled,
            transition,
        })
    }
}

/// Runs chip birth. On any failure the chip is restored to its state before
/// the ceremony.
pub fn birth_ceremony(
    session: &mut HsmSession,
    chip: &mut Chip,
    ami: &mut AmiClient,
    t: &mut Transcript,
) -> Result<BirthReport, HsmError> {
    let lifecycle = chip.lifecycle().map_err(|e| HsmError::Boot(e.into()))?;
    if lifecycle != LifecycleState::FabricationTest {
        return Err(HsmError::WrongLifecycle(lifecycle));
    }
    let before = chip.clone();
    let result = session.ceremony(chip, ami, t);
    if let Err(e) = &result {
        log::warn!("birth ceremony failed, rolling back: {e}");
        *chip = before;
    }
    result
}
