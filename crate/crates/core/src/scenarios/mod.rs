//! Scenario harness: the honest lifecycle walk and the three supply-chain
//! threat cases, each producing a [`Verdict`] plus the full [`Transcript`].
//!
//! Every random choice is drawn from a sub-seed of the configured master
//! seed, so a (config, seed) pair always yields the same transcript.

mod checks;
pub mod config;
mod honest;
mod threats;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use checks::{confidentiality_violations, phase_order_violations, Violation};
pub use config::{ConfigError, IpConfig, ScenarioConfig, SocConfig};
pub use honest::run_honest_lifecycle_with;
pub use threats::{run_threat_counterfeit_with, run_threat_recycling_with, run_threat_reverse_engineering_with};

use crate::ami::{AmiClient, AmiError, AmiMessage, Ledger, Remote, SessionId};
use crate::enclave::vault::AssetKind;
use crate::enclave::{request_lifecycle_transition, run_boot, BootError, BootReport, Chip};
use crate::hsm::{birth_ceremony, BirthReport, HsmSession};
use crate::lifecycle::{Actor, ChipStatus, LifecycleState, TransitionDecision, TransitionTable};
use crate::seed::{actor_rng, sub_key, sub_seed};
use crate::transcript::{Endpoint, Transcript};

/// Shortest byte string treated as an asset by the confidentiality scan.
pub const MIN_ASSET_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "honest")]
    Honest,
    #[serde(rename = "threat-counterfeit")]
    Counterfeit,
    #[serde(rename = "threat-reverse-engineering")]
    ReverseEngineering,
    #[serde(rename = "threat-recycling")]
    Recycling,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Honest,
        ScenarioKind::Counterfeit,
        ScenarioKind::ReverseEngineering,
        ScenarioKind::Recycling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Honest => "honest",
            ScenarioKind::Counterfeit => "threat-counterfeit",
            ScenarioKind::ReverseEngineering => "threat-reverse-engineering",
            ScenarioKind::Recycling => "threat-recycling",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AmiMode {
    InProcess,
    /// `tcp://host:port` or `host:port`.
    Remote(String),
}

/// Shared HSM-to-AMI trust key for a master seed. An `ami-serve` started
/// with the same seed accepts sessions from scenarios run with it.
pub fn trust_key(seed: u64) -> [u8; 32] {
    sub_key(seed, "hsm-ami-trust")
}

pub fn new_ledger(seed: u64) -> Ledger {
    Ledger::new(trust_key(seed))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
    /// Transcript indices backing the observation.
    pub evidence: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub scenario: String,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
    pub evidence: Vec<usize>,
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn failing_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub verdict: Verdict,
    pub transcript: Transcript,
    /// Every secret the run handled, for independent transcript scans.
    pub assets: Vec<Vec<u8>>,
}

/// Compact text for enum-like values: `"accepted"`, `"denied(bad_key)"`.
pub(crate) fn label<T: Serialize>(v: &T) -> String {
    fn render(v: &serde_json::Value) -> String {
        match v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Null => "none".into(),
            serde_json::Value::Object(m) if m.len() == 1 => {
                let (k, inner) = m.iter().next().expect("one entry");
                format!("{k}({})", render(inner))
            }
            other => other.to_string(),
        }
    }
    render(&serde_json::to_value(v).expect("serialisable"))
}

/// A chip that went through birth, with the keys its OEM holds.
pub(crate) struct Unit {
    pub chip: Chip,
    pub keys: TransitionTable,
    pub session: SessionId,
    pub chip_ref: String,
}

pub(crate) struct Ctx<'a> {
    pub kind: ScenarioKind,
    pub cfg: &'a ScenarioConfig,
    pub t: Transcript,
    pub ami: AmiClient,
    checks: Vec<Check>,
    assets: Vec<Vec<u8>>,
    boots: Vec<BootReport>,
}

impl<'a> Ctx<'a> {
    pub fn new(kind: ScenarioKind, cfg: &'a ScenarioConfig, ami: AmiClient) -> Self {
        Self {
            kind,
            cfg,
            t: Transcript::new(),
            ami,
            checks: vec![],
            assets: vec![],
            boots: vec![],
        }
    }

    fn scoped(&self, what: &str) -> String {
        format!("{}/{what}", self.kind.name())
    }

    pub fn seed(&self, what: &str) -> u64 {
        sub_seed(self.cfg.seed, &self.scoped(what))
    }

    pub fn rng(&self, what: &str) -> rand_chacha::ChaCha20Rng {
        actor_rng(self.cfg.seed, &self.scoped(what))
    }

    pub fn last_event(&self) -> Vec<usize> {
        self.t.last_index().into_iter().collect()
    }

    pub fn check(
        &mut self,
        name: &str,
        expected: impl fmt::Display,
        observed: impl fmt::Display,
        evidence: Vec<usize>,
    ) -> bool {
        let (expected, observed) = (expected.to_string(), observed.to_string());
        let pass = expected == observed;
        if !pass {
            log::warn!("{}: check {name} expected {expected}, observed {observed}", self.kind);
        }
        self.checks.push(Check {
            name: name.to_owned(),
            expected,
            observed,
            pass,
            evidence,
        });
        pass
    }

    /// Records a step that could not run at all.
    pub fn abort(&mut self, name: &str, err: impl fmt::Display) {
        let evidence = self.last_event();
        self.check(name, "ok", format!("error: {err}"), evidence);
    }

    /// Adds the chip's secret vault contents to the confidentiality scan.
    pub fn harvest(&mut self, chip: &Chip) {
        for (k, v) in chip.enclave.vault.entries() {
            if k.kind != AssetKind::SessionId && v.len() >= MIN_ASSET_BYTES && !self.assets.iter().any(|a| a == v) {
                self.assets.push(v.to_vec());
            }
        }
    }

    pub fn add_asset(&mut self, bytes: &[u8]) {
        if bytes.len() >= MIN_ASSET_BYTES && !self.assets.iter().any(|a| a == bytes) {
            self.assets.push(bytes.to_vec());
        }
    }

    pub fn boot(&mut self, chip: &mut Chip) -> Result<BootReport, BootError> {
        let report = run_boot(chip, &mut self.ami, &mut self.t)?;
        self.harvest(chip);
        self.boots.push(report.clone());
        Ok(report)
    }

    pub fn boot_evidence(report: &BootReport) -> Vec<usize> {
        let mut ev = vec![report.first_event];
        ev.extend(report.ack_event);
        if report.end_event > report.first_event {
            ev.push(report.end_event - 1);
        }
        ev.dedup();
        ev
    }

    /// A fresh die of the configured design plus its OEM key set.
    pub fn new_chip(&self, tag: &str) -> (Chip, TransitionTable) {
        let chip = self.cfg.build_chip(sub_key(self.cfg.seed, &self.scoped(&format!("{tag}/die"))), self.seed(&format!("{tag}/enclave")));
        let keys = TransitionTable::generate(&mut self.rng(&format!("{tag}/keys")));
        (chip, keys)
    }

    pub fn hsm(&self, tag: &str, keys: &TransitionTable) -> HsmSession {
        HsmSession::new(
            trust_key(self.cfg.seed),
            keys.clone(),
            self.cfg.unlock_vectors(),
            self.seed(&format!("{tag}/hsm")),
        )
    }

    pub fn birth(&mut self, chip: &mut Chip, hsm: &mut HsmSession) -> Result<BirthReport, crate::hsm::HsmError> {
        let before = self.t.len();
        let result = birth_ceremony(hsm, chip, &mut self.ami, &mut self.t);
        if let Ok(report) = &result {
            self.harvest(chip);
            self.boots.push(report.boot.clone());
        }
        for v in hsm.obfuscation_vectors.values() {
            self.add_asset(v);
        }
        for e in hsm.validation_keys.entries() {
            self.add_asset(&e.validation_key);
        }
        log::debug!("birth ceremony events {before}..{}", self.t.len());
        result
    }

    /// Births a new die and checks the ceremony outcome.
    pub fn born_unit(&mut self, tag: &str) -> Option<Unit> {
        let (mut chip, keys) = self.new_chip(tag);
        let mut hsm = self.hsm(tag, &keys);
        match self.birth(&mut chip, &mut hsm) {
            Ok(report) => {
                let ack = self.t.find("register_ack");
                self.check(&format!("{tag}_registration"), "register_ack", "register_ack", ack.last().copied().into_iter().collect());
                let ev = self.last_event();
                self.check(&format!("{tag}_birth_transition"), "accepted", label(&report.transition), ev);
                Some(Unit {
                    chip,
                    keys,
                    session: report.session,
                    chip_ref: report.chip_ref,
                })
            }
            Err(e) => {
                self.abort(&format!("{tag}_birth"), e);
                None
            }
        }
    }

    /// OEM-driven transition with the correct key.
    pub fn oem_transition(&mut self, unit: &mut Unit, target: LifecycleState) -> TransitionDecision {
        let from = unit.chip.lifecycle().unwrap_or(LifecycleState::EndOfLife);
        let key = unit.keys.key(from, target).unwrap_or([0; 32]);
        self.transition(unit, target, &key, Actor::Oem, &format!("to_{}", label(&target)))
    }

    pub fn transition(
        &mut self,
        unit: &mut Unit,
        target: LifecycleState,
        key: &[u8; 32],
        actor: Actor,
        name: &str,
    ) -> TransitionDecision {
        match request_lifecycle_transition(&mut unit.chip, &mut self.ami, &mut self.t, target, key, actor) {
            Ok(d) => d,
            Err(e) => {
                self.abort(name, e);
                TransitionDecision::Denied(crate::lifecycle::DenyReason::BadKey)
            }
        }
    }

    pub fn expect_transition(&mut self, unit: &mut Unit, target: LifecycleState) -> bool {
        let name = format!("transition_to_{}", label(&target));
        let d = self.oem_transition(unit, target);
        let ev = self.last_event();
        self.check(&name, "accepted", label(&d), ev)
    }

    /// Ledger status as the OEM sees it.
    pub fn ledger_status(&mut self, session: SessionId) -> (String, Vec<usize>) {
        match self.ami.call(&mut self.t, Endpoint::Oem, &AmiMessage::StatusQuery { session }) {
            Ok(AmiMessage::Status { lifecycle, status }) => (
                format!("{}/{}", label(&lifecycle), label(&status)),
                self.last_event(),
            ),
            Ok(other) => (format!("unexpected {}", other.type_name()), self.last_event()),
            Err(e) => (format!("error: {e}"), self.last_event()),
        }
    }

    /// Boots and checks for release with every locked IP unlocked.
    pub fn expect_full_boot(&mut self, unit: &mut Unit, name: &str) -> Option<BootReport> {
        match self.boot(&mut unit.chip) {
            Ok(r) => {
                let ev = Self::boot_evidence(&r);
                self.check(&format!("{name}_outcome"), "released", label(&r.outcome), ev.clone());
                let locked = unit.chip.soc.locked_ips().len();
                let unlocked = unit
                    .chip
                    .soc
                    .lock_modes()
                    .values()
                    .filter(|m| **m == crate::obfuscation::LockMode::Unlocked)
                    .count();
                self.check(&format!("{name}_unlocked"), format!("{locked}/{locked}"), format!("{unlocked}/{locked}"), ev);
                Some(r)
            }
            Err(e) => {
                self.abort(&format!("{name}_boot"), e);
                None
            }
        }
    }

    pub fn finish(mut self, expected: &str) -> ScenarioRun {
        let ips: Vec<_> = self.cfg.soc.ips.iter().map(|i| i.id.clone()).collect();
        let leaks = confidentiality_violations(&self.t, &self.assets, &ips);
        self.check(
            "confidentiality",
            "0 violations",
            format!("{} violations", leaks.len()),
            leaks.iter().map(|v| v.index).collect(),
        );
        let order = phase_order_violations(&self.t, &self.boots);
        self.check(
            "phase_order",
            "0 violations",
            format!("{} violations", order.len()),
            order.iter().map(|v| v.index).collect(),
        );
        let len = self.t.len();
        let dangling = self.checks.iter().flat_map(|c| &c.evidence).filter(|&&i| i >= len).count();
        self.check("evidence_resolves", "0 dangling", format!("{dangling} dangling"), vec![]);

        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        let observed = if failed.is_empty() {
            expected.to_owned()
        } else {
            format!("violated: {}", failed.join(", "))
        };
        let mut evidence: Vec<usize> = self.checks.iter().flat_map(|c| c.evidence.iter().copied()).collect();
        evidence.sort_unstable();
        evidence.dedup();
        ScenarioRun {
            verdict: Verdict {
                scenario: self.kind.name().to_owned(),
                expected: expected.to_owned(),
                pass: observed == expected,
                observed,
                evidence,
                checks: self.checks,
            },
            transcript: self.t,
            assets: self.assets,
        }
    }
}

fn client(mode: &AmiMode, seed: u64) -> Result<AmiClient, AmiError> {
    Ok(match mode {
        AmiMode::InProcess => AmiClient::in_process(Arc::new(new_ledger(seed))),
        AmiMode::Remote(addr) => AmiClient::new(Remote::connect(addr)?),
    })
}

/// Runs one scenario. In remote mode every scenario needs a ledger that has
/// not seen the same (config, seed) before.
pub fn run_scenario(kind: ScenarioKind, cfg: &ScenarioConfig, mode: &AmiMode) -> Result<ScenarioRun, AmiError> {
    let ami = client(mode, cfg.seed)?;
    Ok(match kind {
        ScenarioKind::Honest => run_honest_lifecycle_with(cfg, ami),
        ScenarioKind::Counterfeit => run_threat_counterfeit_with(cfg, ami),
        ScenarioKind::ReverseEngineering => run_threat_reverse_engineering_with(cfg, cfg.attempts, ami),
        ScenarioKind::Recycling => run_threat_recycling_with(cfg, ami),
    })
}

fn in_process(cfg: &ScenarioConfig) -> AmiClient {
    AmiClient::in_process(Arc::new(new_ledger(cfg.seed)))
}

pub fn run_honest_lifecycle(cfg: &ScenarioConfig) -> Verdict {
    run_honest_lifecycle_with(cfg, in_process(cfg)).verdict
}

pub fn run_threat_counterfeit(cfg: &ScenarioConfig) -> Verdict {
    run_threat_counterfeit_with(cfg, in_process(cfg)).verdict
}

pub fn run_threat_reverse_engineering(cfg: &ScenarioConfig, attempts: u64) -> Verdict {
    run_threat_reverse_engineering_with(cfg, attempts, in_process(cfg)).verdict
}

pub fn run_threat_recycling(cfg: &ScenarioConfig) -> Verdict {
    run_threat_recycling_with(cfg, in_process(cfg)).verdict
}

pub(crate) fn status_label(lifecycle: LifecycleState, status: ChipStatus) -> String {
    format!("{}/{}", label(&lifecycle), label(&status))
}
