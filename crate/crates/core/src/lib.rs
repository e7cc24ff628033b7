//! Deterministic simulator of an SoC security enclave for supply-chain
//! protection.
//!
//! The crate models PUF-based chip identity, logic-locked IPs, the security
//! wrappers around HOST IPs, the enclave's four-phase boot control sequence,
//! the device lifecycle, the off-chip asset management ledger (AMI) and the
//! HSM-mediated chip birth. [`scenarios`] replays supply-chain threats
//! against all of it and [`metrics`] reproduces the overhead and delay
//! figures.

pub mod ami;
pub mod bits;
pub mod enclave;
pub mod hsm;
pub mod lifecycle;
pub mod metrics;
pub mod obfuscation;
pub mod puf;
pub mod scenarios;
pub mod seed;
pub mod transcript;
pub mod wrapper;

use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a HOST IP block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IpId(String);

impl IpId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for IpId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl fmt::Display for IpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
