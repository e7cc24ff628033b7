//! The compute enclave and the HOST SoC it guards.
//!
//! A boot runs four phases:
//!
//! 1. self-boot and lifecycle validation, with every IP held in reset and
//!    the system bus inactive;
//! 2. boot-interface handshake with the HOST (IRQ, then ACK), after which
//!    the bus is active;
//! 3. SCM enforcement for the current lifecycle, one IP at a time with all
//!    others gated: ChipID registration at chip birth, PUF attestation and
//!    IP unlocking afterwards;
//! 4. release of all IPs and of the HOST.

pub mod envelope;
pub mod vault;

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ami::{chip_ref, AmiClient, AmiError, AmiMessage, ProvisionDenied, RejectReason, SealedAsset, SessionId};
use crate::bits::BitVector;
use crate::lifecycle::{
    boot_mode, request_transition, Actor, BootMode, LedgerView, LifecycleState, TransitionDecision, TransitionTable,
    ValidationKey,
};
use crate::obfuscation::{fragment_key, LockMode, UnlockVector};
use crate::puf::{compute_chip_id, majority, AuthResult, ChipIdentity, PcmState, PufError, PufResponse};
use crate::transcript::{Channel, Endpoint, Transcript};
use crate::wrapper::{SecurityWrapper, WrapperError};
use crate::IpId;
use envelope::{open_envelope, seal_asset, CommKey, Nonce, SecureEnvelope};
use vault::{AssetKey, AssetKind, AssetVault, VaultError};

#[derive(Debug, thiserror::Error)]
pub enum BootError {
    #[error(transparent)]
    Vault(#[from] VaultError),
    #[error(transparent)]
    Wrapper(#[from] WrapperError),
    #[error(transparent)]
    Puf(#[from] PufError),
    #[error("need {needed} PUF-equipped IPs, found {available}")]
    NoPufUnit { needed: usize, available: usize },
    #[error("AMI unreachable")]
    AmiUnreachable,
    #[error("AMI error: {0}")]
    Ami(String),
    #[error("registration rejected: {0:?}")]
    RegistrationRejected(RejectReason),
}

impl From<AmiError> for BootError {
    fn from(e: AmiError) -> Self {
        match e {
            AmiError::Unreachable => BootError::AmiUnreachable,
            other => BootError::Ami(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BusTopology {
    #[default]
    SingleBus,
    MultiBus,
}

/// Order of the post-birth SCMs in phase 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScmOrder {
    #[default]
    PufFirst,
    UnlockFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Soc {
    pub name: String,
    pub topology: BusTopology,
    pub wrappers: Vec<SecurityWrapper>,
    pub bus_active: bool,
    pub host_released: bool,
}

impl Soc {
    pub fn new(name: impl Into<String>, topology: BusTopology, wrappers: Vec<SecurityWrapper>) -> Self {
        Self {
            name: name.into(),
            topology,
            wrappers,
            bus_active: false,
            host_released: false,
        }
    }

    pub fn index_of(&self, ip: &IpId) -> Option<usize> {
        self.wrappers.iter().position(|w| &w.ip_id == ip)
    }

    pub fn wrapper(&self, ip: &IpId) -> Option<&SecurityWrapper> {
        self.wrappers.iter().find(|w| &w.ip_id == ip)
    }

    pub fn wrapper_mut(&mut self, ip: &IpId) -> Option<&mut SecurityWrapper> {
        self.wrappers.iter_mut().find(|w| &w.ip_id == ip)
    }

    pub fn gate_all(&mut self, t: &mut Transcript) {
        for w in &mut self.wrappers {
            w.gate_reset(t);
        }
    }

    pub fn release_all(&mut self, t: &mut Transcript) {
        for w in &mut self.wrappers {
            w.release_reset(t);
        }
    }

    /// Leaves only wrapper `idx` out of reset.
    pub fn isolate(&mut self, t: &mut Transcript, idx: usize) {
        for (i, w) in self.wrappers.iter_mut().enumerate() {
            if i != idx && !w.is_gated() {
                w.gate_reset(t);
            }
        }
        if self.wrappers[idx].is_gated() {
            self.wrappers[idx].release_reset(t);
        }
    }

    pub fn puf_indices(&self) -> Vec<usize> {
        (0..self.wrappers.len()).filter(|&i| self.wrappers[i].puf.is_some()).collect()
    }

    pub fn locked_ips(&self) -> Vec<IpId> {
        self.wrappers
            .iter()
            .filter(|w| w.key_applier.is_some())
            .map(|w| w.ip_id.clone())
            .collect()
    }

    pub fn lock_modes(&self) -> BTreeMap<IpId, LockMode> {
        self.wrappers
            .iter()
            .filter_map(|w| w.lock_mode().map(|m| (w.ip_id.clone(), m)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnclaveConfig {
    /// IPs contributing to the ChipID.
    pub n_chip_id_ips: usize,
    /// Reads per IP majority-voted into a golden response.
    pub golden_reads: usize,
    pub scm_order: ScmOrder,
}

impl Default for EnclaveConfig {
    fn default() -> Self {
        Self {
            n_chip_id_ips: 3,
            golden_reads: 9,
            scm_order: ScmOrder::PufFirst,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Enclave {
    pub vault: AssetVault,
    pub config: EnclaveConfig,
    rng: ChaCha20Rng,
}

impl Enclave {
    pub fn new(config: EnclaveConfig, rng_seed: u64) -> Self {
        let mut vault = AssetVault::new();
        vault.set_lifecycle(LifecycleState::FabricationTest);
        Self {
            vault,
            config,
            rng: ChaCha20Rng::seed_from_u64(rng_seed),
        }
    }

    fn nonce(&mut self) -> Nonce {
        let mut n = [0u8; 16];
        self.rng.fill_bytes(&mut n);
        n
    }

    fn comm_key(&self) -> Result<CommKey, VaultError> {
        self.vault.fetch_array(&AssetKey::chip(AssetKind::CommKey))
    }

    pub fn session(&self) -> Result<SessionId, VaultError> {
        self.vault.fetch_array(&AssetKey::chip(AssetKind::SessionId))
    }

    fn chip_id(&self) -> Result<[u8; 32], VaultError> {
        self.vault.fetch_array(&AssetKey::chip(AssetKind::ChipId))
    }

    fn seal(&mut self, plaintext: &[u8]) -> Result<SecureEnvelope, VaultError> {
        let key = self.comm_key()?;
        let nonce = self.nonce();
        Ok(seal_asset(plaintext, &key, nonce))
    }

    fn chip_claim(&self, lifecycle: LifecycleState) -> Result<Vec<u8>, VaultError> {
        let mut p = self.chip_id()?.to_vec();
        p.push(lifecycle.code());
        Ok(p)
    }

    /// PCM contents rebuilt from the expected responses in the vault.
    pub fn pcm(&self) -> PcmState {
        let mut pcm = PcmState::new();
        for (k, v) in self.vault.entries() {
            if let (AssetKind::PufExpectedResponse, Some(ip)) = (k.kind, &k.ip) {
                let control = BitVector::from_bytes(&(pcm.len() as u16).to_be_bytes(), 16);
                pcm.enroll(
                    control,
                    PufResponse {
                        ip_id: ip.clone(),
                        bits: BitVector::from_bytes(v, v.len() * 8),
                    },
                );
            }
        }
        pcm
    }

    pub fn transition_table(&self) -> TransitionTable {
        let keys: BTreeMap<_, ValidationKey> = self
            .vault
            .entries()
            .filter_map(|(k, v)| match k.kind {
                AssetKind::LifecycleValidationKey { from, to } => v.try_into().ok().map(|key| ((from, to), key)),
                _ => None,
            })
            .collect();
        TransitionTable::from_keys(&keys)
    }
}

#[derive(Debug, Clone)]
pub struct Chip {
    pub soc: Soc,
    pub enclave: Enclave,
}

impl Chip {
    pub fn new(soc: Soc, enclave: Enclave) -> Self {
        Self { soc, enclave }
    }

    pub fn lifecycle(&self) -> Result<LifecycleState, VaultError> {
        self.enclave.vault.lifecycle()
    }

    /// Functional step of a locked IP, or `None` if the IP is not locked.
    pub fn step_ip(&self, ip: &IpId, input: u64) -> Option<u64> {
        self.soc.wrapper(ip)?.key_applier.as_ref().map(|k| k.step(input))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootPhase {
    SelfBoot,
    Handshake,
    ScmEnforcement,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootOutcome {
    Released,
    Truncated,
    RevertedToPreviousLifecycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootReport {
    pub stored_lifecycle: LifecycleState,
    pub effective_lifecycle: LifecycleState,
    pub mode: BootMode,
    pub phases: Vec<BootPhase>,
    pub outcome: BootOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_reason: Option<String>,
    pub attestation: Vec<(IpId, AuthResult)>,
    pub unlocked: Vec<(IpId, LockMode)>,
    /// ChipID ledger handle after a successful birth registration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registered: Option<String>,
    /// Transcript index of the first event of this boot.
    pub first_event: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ack_event: Option<usize>,
    /// Half-open transcript index range of phase 3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scm_events: Option<(usize, usize)>,
    /// One past the last event of this boot.
    pub end_event: usize,
}

impl BootReport {
    pub fn is_released(&self) -> bool {
        matches!(self.outcome, BootOutcome::Released | BootOutcome::RevertedToPreviousLifecycle)
    }
}

/// Runs one power-on boot of `chip`.
pub fn run_boot(chip: &mut Chip, ami: &mut AmiClient, t: &mut Transcript) -> Result<BootReport, BootError> {
    let first_event = t.len();
    let Chip { soc, enclave } = chip;

    // phase 1
    soc.bus_active = false;
    soc.host_released = false;
    for w in &mut soc.wrappers {
        if let Some(k) = w.key_applier.as_mut() {
            k.relock();
        }
    }
    soc.gate_all(t);
    let stored = enclave.vault.lifecycle()?;
    let view = if stored != LifecycleState::FabricationTest && stored != LifecycleState::EndOfLife {
        query_status(enclave, ami, t)
    } else {
        None
    };
    let mode = boot_mode(stored, view);
    let mut report = BootReport {
        stored_lifecycle: stored,
        effective_lifecycle: stored,
        mode,
        phases: vec![BootPhase::SelfBoot],
        outcome: BootOutcome::Truncated,
        truncation_reason: None,
        attestation: vec![],
        unlocked: vec![],
        registered: None,
        first_event,
        ack_event: None,
        scm_events: None,
        end_event: first_event,
    };
    match mode {
        BootMode::Truncated => {
            report.truncation_reason = Some(match view {
                Some(v) if stored != LifecycleState::EndOfLife => format!("ledger reports {:?}", v.status),
                _ => "end of life".to_owned(),
            });
            report.end_event = t.len();
            return Ok(report);
        }
        BootMode::RevertPrevious(previous) => {
            log::warn!("lifecycle {stored} not confirmed by ledger, booting in {previous}");
            enclave.vault.set_lifecycle(previous);
            report.effective_lifecycle = previous;
        }
        BootMode::Full => {}
    }

    // phase 2
    t.record(Channel::BootIface, Endpoint::Enclave, Endpoint::Host, "boot_irq", vec![], false);
    report.ack_event = Some(t.record(Channel::BootIface, Endpoint::Host, Endpoint::Enclave, "boot_ack", vec![], false));
    soc.bus_active = true;
    report.phases.push(BootPhase::Handshake);

    // phase 3
    let scm_start = t.len();
    let verdict = match report.effective_lifecycle {
        LifecycleState::FabricationTest => {
            report.registered = Some(birth_scm(soc, enclave, ami, t)?);
            Ok(())
        }
        LifecycleState::PackagingOem | LifecycleState::Deployment => match enclave.config.scm_order {
            ScmOrder::PufFirst => attest(soc, enclave, t, &mut report).and_then(|()| unlock(soc, enclave, ami, t, &mut report)),
            ScmOrder::UnlockFirst => unlock(soc, enclave, ami, t, &mut report).and_then(|()| attest(soc, enclave, t, &mut report)),
        },
        LifecycleState::Recall => attest(soc, enclave, t, &mut report),
        LifecycleState::EndOfLife => Err(ScmFailure::Truncate("end of life".to_owned())),
    };
    let verdict = match verdict {
        Ok(()) => Ok(()),
        Err(ScmFailure::Truncate(reason)) => Err(reason),
        Err(ScmFailure::Fatal(e)) => return Err(e),
    };
    report.scm_events = Some((scm_start, t.len()));
    if let Err(reason) = verdict {
        soc.gate_all(t);
        report.truncation_reason = Some(reason);
        report.end_event = t.len();
        return Ok(report);
    }
    report.phases.push(BootPhase::ScmEnforcement);

    // phase 4
    soc.release_all(t);
    t.record(Channel::BootIface, Endpoint::Enclave, Endpoint::Host, "host_release", vec![], false);
    soc.host_released = true;
    report.phases.push(BootPhase::Release);
    report.outcome = if matches!(mode, BootMode::RevertPrevious(_)) {
        BootOutcome::RevertedToPreviousLifecycle
    } else {
        BootOutcome::Released
    };
    report.end_event = t.len();
    Ok(report)
}

/// Phase-3 failures that truncate the boot rather than abort it.
enum ScmFailure {
    Truncate(String),
    Fatal(BootError),
}

impl<E: Into<BootError>> From<E> for ScmFailure {
    fn from(e: E) -> Self {
        ScmFailure::Fatal(e.into())
    }
}

fn query_status(enclave: &Enclave, ami: &mut AmiClient, t: &mut Transcript) -> Option<LedgerView> {
    let session = enclave.session().ok()?;
    match ami.call(t, Endpoint::Enclave, &AmiMessage::StatusQuery { session }) {
        Ok(AmiMessage::Status {
            lifecycle: Some(lifecycle),
            status: Some(status),
        }) => Some(LedgerView { lifecycle, status }),
        Ok(_) => None,
        Err(e) => {
            log::warn!("ledger status unavailable: {e}");
            None
        }
    }
}

/// Golden responses from the first `n_ips` PUF-equipped IPs, each read in
/// isolation, and the ChipID over them.
pub fn orchestrate_chip_id(
    soc: &mut Soc,
    t: &mut Transcript,
    n_ips: usize,
    golden_reads: usize,
    rng_seed: u64,
) -> Result<(ChipIdentity, Vec<PufResponse>), BootError> {
    let candidates = soc.puf_indices();
    if n_ips == 0 || candidates.len() < n_ips {
        return Err(BootError::NoPufUnit {
            needed: n_ips.max(1),
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let mut responses = Vec::with_capacity(n_ips);
    for &idx in &candidates[..n_ips] {
        soc.isolate(t, idx);
        let reads = (0..golden_reads.max(1))
            .map(|_| soc.wrappers[idx].extract_puf_signature(t, rng.next_u64()))
            .collect::<Result<Vec<_>, _>>()?;
        soc.wrappers[idx].gate_reset(t);
        responses.push(majority(&reads));
    }
    Ok((compute_chip_id(&responses)?, responses))
}

fn birth_scm(soc: &mut Soc, enclave: &mut Enclave, ami: &mut AmiClient, t: &mut Transcript) -> Result<String, BootError> {
    let session = enclave.session()?;
    let seed = enclave.rng.next_u64();
    let (chip_id, responses) = orchestrate_chip_id(
        soc,
        t,
        enclave.config.n_chip_id_ips,
        enclave.config.golden_reads,
        seed,
    )?;
    enclave.vault.store(AssetKey::chip(AssetKind::ChipId), chip_id.digest.to_vec());
    for r in &responses {
        enclave.vault.store(
            AssetKey::ip(AssetKind::PufExpectedResponse, r.ip_id.clone()),
            r.bits.as_bytes().to_vec(),
        );
    }

    let envelope = enclave.seal(&enclave.chip_claim(LifecycleState::FabricationTest)?)?;
    let cref = match ami.call(t, Endpoint::Enclave, &AmiMessage::Register { session, envelope })? {
        AmiMessage::RegisterAck { chip_ref } => chip_ref,
        AmiMessage::RegisterReject { reason } => return Err(BootError::RegistrationRejected(reason)),
        other => return Err(BootError::Ami(format!("unexpected reply {}", other.type_name()))),
    };

    for r in &responses {
        let asset = SealedAsset {
            kind: AssetKind::PufExpectedResponse,
            ip_id: Some(r.ip_id.clone()),
            envelope: enclave.seal(r.bits.as_bytes())?,
        };
        match ami.call(t, Endpoint::Enclave, &AmiMessage::EnrollAsset { session, asset })? {
            AmiMessage::EnrollResult { ok: true, .. } => {}
            other => return Err(BootError::Ami(format!("IPID enrollment failed: {other:?}"))),
        }
    }
    Ok(cref)
}

fn attest(soc: &mut Soc, enclave: &mut Enclave, t: &mut Transcript, report: &mut BootReport) -> Result<(), ScmFailure> {
    let pcm = enclave.pcm();
    if pcm.is_empty() {
        return Err(ScmFailure::Truncate("no enrolled PUF responses".into()));
    }
    let mut all_pass = true;
    for ip in pcm.ip_ids() {
        let result = match soc.index_of(ip) {
            Some(idx) => {
                soc.isolate(t, idx);
                let seed = enclave.rng.next_u64();
                let received = soc.wrappers[idx].extract_puf_signature(t, seed)?;
                soc.wrappers[idx].gate_reset(t);
                pcm.authenticate(ip, &received)?
            }
            None => AuthResult::Fail,
        };
        all_pass &= result == AuthResult::Pass;
        report.attestation.push((ip.clone(), result));
    }
    if all_pass {
        Ok(())
    } else {
        Err(ScmFailure::Truncate("PUF attestation failed".into()))
    }
}

fn unlock(
    soc: &mut Soc,
    enclave: &mut Enclave,
    ami: &mut AmiClient,
    t: &mut Transcript,
    report: &mut BootReport,
) -> Result<(), ScmFailure> {
    let locked = soc.locked_ips();
    let missing = locked
        .iter()
        .any(|ip| !enclave.vault.contains(&AssetKey::ip(AssetKind::ObfuscationVector, ip.clone())));
    if missing {
        if let Err(denied) = provision(enclave, ami, t, report.effective_lifecycle)? {
            return Err(ScmFailure::Truncate(format!("provisioning denied: {denied}")));
        }
    }
    for ip in &locked {
        let key = AssetKey::ip(AssetKind::ObfuscationVector, ip.clone());
        let bytes = enclave
            .vault
            .fetch(&key)
            .map_err(|_| ScmFailure::Truncate(format!("no obfuscation vector for {ip}")))?
            .to_vec();
        let idx = soc.index_of(ip).expect("locked ip is in the soc");
        let width = soc.wrappers[idx].key_applier.as_ref().expect("locked").input_width;
        let frames = fragment_key(
            &UnlockVector::new(ip.clone(), BitVector::from_bytes(&bytes, bytes.len() * 8)),
            width,
        );
        soc.isolate(t, idx);
        let mode = soc.wrappers[idx].apply_unlock_vector(t, &frames)?;
        soc.wrappers[idx].gate_reset(t);
        report.unlocked.push((ip.clone(), mode));
    }
    if report.unlocked.iter().all(|(_, m)| *m == LockMode::Unlocked) {
        Ok(())
    } else {
        Err(ScmFailure::Truncate("IP unlock failed".into()))
    }
}

/// Authenticates with the ledger and stores the released assets.
fn provision(
    enclave: &mut Enclave,
    ami: &mut AmiClient,
    t: &mut Transcript,
    claim: LifecycleState,
) -> Result<Result<(), ProvisionDenied>, BootError> {
    let session = enclave.session()?;
    let plain = enclave.chip_claim(claim)?;
    let envelope = enclave.seal(&plain)?;
    match ami.call(t, Endpoint::Enclave, &AmiMessage::Authenticate { session, envelope })? {
        AmiMessage::AuthResult { accepted: true, .. } => {}
        AmiMessage::AuthResult { reason, .. } => return Ok(Err(reason.unwrap_or(ProvisionDenied::Unknown))),
        other => return Err(BootError::Ami(format!("unexpected reply {}", other.type_name()))),
    }
    let envelope = enclave.seal(&plain)?;
    let assets = match ami.call(t, Endpoint::Enclave, &AmiMessage::Provision { session, envelope })? {
        AmiMessage::ProvisionResult { assets } => assets,
        AmiMessage::AuthResult { reason, .. } => return Ok(Err(reason.unwrap_or(ProvisionDenied::Unknown))),
        other => return Err(BootError::Ami(format!("unexpected reply {}", other.type_name()))),
    };
    let key = enclave.comm_key()?;
    for a in assets {
        let plain = open_envelope(&a.envelope, &key).map_err(|e| BootError::Ami(e.to_string()))?;
        enclave.vault.store(AssetKey { kind: a.kind, ip: a.ip_id }, plain);
    }
    Ok(Ok(()))
}

/// Checks the request against the chip's own validation keys, then asks the
/// ledger. The chip commits only if both accept; reaching end-of-life
/// purges the vault.
pub fn request_lifecycle_transition(
    chip: &mut Chip,
    ami: &mut AmiClient,
    t: &mut Transcript,
    target: LifecycleState,
    key: &ValidationKey,
    actor: Actor,
) -> Result<TransitionDecision, BootError> {
    let enclave = &mut chip.enclave;
    let current = enclave.vault.lifecycle()?;
    let local = request_transition(&enclave.transition_table(), current, target, key, actor);
    if !local.is_accepted() {
        return Ok(local);
    }
    let session = enclave.session()?;
    let mut plain = enclave.chip_id()?.to_vec();
    plain.extend_from_slice(&[current.code(), target.code()]);
    plain.extend_from_slice(key);
    let envelope = enclave.seal(&plain)?;
    let decision = match ami.call(t, Endpoint::Enclave, &AmiMessage::LifecycleUpdate { session, actor, envelope })? {
        AmiMessage::LifecycleResult { decision } => decision,
        other => return Err(BootError::Ami(format!("unexpected reply {}", other.type_name()))),
    };
    if decision.is_accepted() {
        enclave.vault.set_lifecycle(target);
        if target == LifecycleState::EndOfLife {
            enclave.vault.purge_for_eol();
        }
    }
    Ok(decision)
}

/// Ledger handle of the chip's ChipID, if it has one.
pub fn chip_ref_of(chip: &Chip) -> Option<String> {
    chip.enclave.chip_id().ok().map(|id| chip_ref(&id))
}
