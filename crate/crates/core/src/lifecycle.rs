//! Device lifecycle: five stages, the authorised-controller transition
//! table with per-transition validation keys, and the boot-mode decision.

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleState {
    FabricationTest,
    PackagingOem,
    Deployment,
    Recall,
    EndOfLife,
}

impl LifecycleState {
    pub const ALL: [LifecycleState; 5] = [
        LifecycleState::FabricationTest,
        LifecycleState::PackagingOem,
        LifecycleState::Deployment,
        LifecycleState::Recall,
        LifecycleState::EndOfLife,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LifecycleState::FabricationTest => "fabrication_test",
            LifecycleState::PackagingOem => "packaging_oem",
            LifecycleState::Deployment => "deployment",
            LifecycleState::Recall => "recall",
            LifecycleState::EndOfLife => "end_of_life",
        };
        f.write_str(s)
    }
}

/// Entity authorised to perform a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Hsm,
    Oem,
}

/// Anyone who may request a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Hsm,
    Oem,
    User,
    Adversary,
}

impl Actor {
    pub const ALL: [Actor; 4] = [Actor::Hsm, Actor::Oem, Actor::User, Actor::Adversary];

    fn acts_as(self, c: Controller) -> bool {
        matches!((self, c), (Actor::Hsm, Controller::Hsm) | (Actor::Oem, Controller::Oem))
    }
}

/// The canonical edge set and its controllers.
pub const EDGES: [(LifecycleState, LifecycleState, Controller); 5] = [
    (LifecycleState::FabricationTest, LifecycleState::PackagingOem, Controller::Hsm),
    (LifecycleState::PackagingOem, LifecycleState::Deployment, Controller::Oem),
    (LifecycleState::Deployment, LifecycleState::Recall, Controller::Oem),
    (LifecycleState::Recall, LifecycleState::PackagingOem, Controller::Oem),
    (LifecycleState::Recall, LifecycleState::EndOfLife, Controller::Oem),
];

pub fn controller_for(from: LifecycleState, to: LifecycleState) -> Option<Controller> {
    EDGES.iter().find(|(f, t, _)| *f == from && *t == to).map(|e| e.2)
}

pub type ValidationKey = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub from: LifecycleState,
    pub to: LifecycleState,
    pub controller: Controller,
    #[serde(with = "hex::serde")]
    pub validation_key: ValidationKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionTable {
    entries: Vec<TransitionEntry>,
}

impl TransitionTable {
    /// Draws a fresh 256-bit key for every canonical edge.
    pub fn generate<R: RngCore>(rng: &mut R) -> Self {
        let entries = EDGES
            .iter()
            .map(|&(from, to, controller)| {
                let mut validation_key = [0u8; 32];
                rng.fill_bytes(&mut validation_key);
                TransitionEntry {
                    from,
                    to,
                    controller,
                    validation_key,
                }
            })
            .collect();
        Self { entries }
    }

    /// Builds a table from known keys; edges without a key are absent.
    pub fn from_keys(keys: &BTreeMap<(LifecycleState, LifecycleState), ValidationKey>) -> Self {
        let entries = EDGES
            .iter()
            .filter_map(|&(from, to, controller)| {
                keys.get(&(from, to)).map(|k| TransitionEntry {
                    from,
                    to,
                    controller,
                    validation_key: *k,
                })
            })
            .collect();
        Self { entries }
    }

    pub fn entries(&self) -> &[TransitionEntry] {
        &self.entries
    }

    pub fn entry(&self, from: LifecycleState, to: LifecycleState) -> Option<&TransitionEntry> {
        self.entries.iter().find(|e| e.from == from && e.to == to)
    }

    pub fn key(&self, from: LifecycleState, to: LifecycleState) -> Option<ValidationKey> {
        self.entry(from, to).map(|e| e.validation_key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    #[error("no such lifecycle edge")]
    NoSuchEdge,
    #[error("actor is not the transition controller")]
    WrongActor,
    #[error("validation key mismatch")]
    BadKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionDecision {
    Accepted,
    Denied(DenyReason),
}

impl TransitionDecision {
    pub fn is_accepted(self) -> bool {
        self == TransitionDecision::Accepted
    }
}

/// Pure authorisation check. Callers commit the new state to the chip and
/// the ledger only on `Accepted`.
pub fn request_transition(
    table: &TransitionTable,
    current: LifecycleState,
    target: LifecycleState,
    presented_key: &ValidationKey,
    actor: Actor,
) -> TransitionDecision {
    let Some(controller) = controller_for(current, target) else {
        return TransitionDecision::Denied(DenyReason::NoSuchEdge);
    };
    if !actor.acts_as(controller) {
        return TransitionDecision::Denied(DenyReason::WrongActor);
    }
    let Some(entry) = table.entry(current, target) else {
        return TransitionDecision::Denied(DenyReason::BadKey);
    };
    if bool::from(entry.validation_key.ct_eq(presented_key)) {
        TransitionDecision::Accepted
    } else {
        TransitionDecision::Denied(DenyReason::BadKey)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChipStatus {
    Active,
    Decommissioned,
}

/// What the ledger reports about a chip at boot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerView {
    pub lifecycle: LifecycleState,
    pub status: ChipStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootMode {
    Full,
    Truncated,
    /// Boot in the ledger-recorded lifecycle instead of the local one.
    RevertPrevious(LifecycleState),
}

/// `ledger` is `None` when no ledger record is available (chip birth, or an
/// unreachable AMI outside birth), in which case only the local state
/// counts.
pub fn boot_mode(stored: LifecycleState, ledger: Option<LedgerView>) -> BootMode {
    if stored == LifecycleState::EndOfLife {
        return BootMode::Truncated;
    }
    match ledger {
        None => BootMode::Full,
        Some(v) if v.status == ChipStatus::Decommissioned || v.lifecycle == LifecycleState::EndOfLife => {
            BootMode::Truncated
        }
        Some(v) if v.lifecycle != stored => BootMode::RevertPrevious(v.lifecycle),
        Some(_) => BootMode::Full,
    }
}
