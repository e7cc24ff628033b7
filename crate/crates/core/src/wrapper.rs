//! Security wrapper around a HOST IP.
//!
//! The bus side is a port map of registers; the test-wrapper side is
//! abstracted to direct register and SCM access. SCM satellites are an
//! optional PUF array and an optional key applier for a locked IP. While the
//! enclave holds the wrapper in reset, every access is rejected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::obfuscation::{LockMode, LockedIpModel};
use crate::puf::{sample_response, PufInstance, PufResponse};
use crate::transcript::{Channel, Endpoint, Transcript};
use crate::IpId;

/// Staging buffer size; one 512-bit vector.
pub const BUFFER_BYTES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WrapperError {
    #[error("address {0:#x} is not mapped")]
    UnmappedAddress(u32),
    #[error("wrapper {0} is held in reset")]
    Rejected(IpId),
    #[error("wrapper {0} has no PUF unit")]
    NoPufUnit(IpId),
    #[error("wrapper {0} has no key applier")]
    NoKeyApplier(IpId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityWrapper {
    pub ip_id: IpId,
    reset_gated: bool,
    port_map: BTreeMap<u32, u64>,
    pub puf: Option<PufInstance>,
    pub key_applier: Option<LockedIpModel>,
    #[serde(skip)]
    buffer: Vec<u8>,
}

impl SecurityWrapper {
    /// A wrapper with `registers` zero-initialised registers at word
    /// addresses `0, 4, 8, ...`.
    pub fn new(ip_id: IpId, registers: u32) -> Self {
        Self {
            ip_id,
            reset_gated: false,
            port_map: (0..registers).map(|r| (r * 4, 0)).collect(),
            puf: None,
            key_applier: None,
            buffer: Vec::with_capacity(BUFFER_BYTES),
        }
    }

    pub fn with_puf(mut self, puf: PufInstance) -> Self {
        self.puf = Some(puf);
        self
    }

    pub fn with_key_applier(mut self, ip: LockedIpModel) -> Self {
        self.key_applier = Some(ip);
        self
    }

    pub fn endpoint(&self) -> Endpoint {
        Endpoint::Ip(self.ip_id.clone())
    }

    pub fn is_gated(&self) -> bool {
        self.reset_gated
    }

    pub fn gate_reset(&mut self, t: &mut Transcript) {
        self.reset_gated = true;
        t.record(Channel::ResetCtl, Endpoint::Enclave, self.endpoint(), "reset_gate", vec![], false);
    }

    pub fn release_reset(&mut self, t: &mut Transcript) {
        self.reset_gated = false;
        t.record(Channel::ResetCtl, Endpoint::Enclave, self.endpoint(), "reset_release", vec![], false);
    }

    fn reject(&self, t: &mut Transcript, from: Endpoint, addr: u32) -> WrapperError {
        t.record(
            Channel::SystemBus,
            from,
            self.endpoint(),
            "bus_rejected",
            addr.to_be_bytes().to_vec(),
            false,
        );
        WrapperError::Rejected(self.ip_id.clone())
    }

    fn check_mapped(&self, t: &mut Transcript, from: &Endpoint, addr: u32) -> Result<(), WrapperError> {
        if self.port_map.contains_key(&addr) {
            return Ok(());
        }
        t.record(
            Channel::SystemBus,
            from.clone(),
            self.endpoint(),
            "bus_unmapped",
            addr.to_be_bytes().to_vec(),
            false,
        );
        Err(WrapperError::UnmappedAddress(addr))
    }

    pub fn bus_read(&mut self, t: &mut Transcript, from: Endpoint, addr: u32) -> Result<u64, WrapperError> {
        if self.reset_gated {
            return Err(self.reject(t, from, addr));
        }
        self.check_mapped(t, &from, addr)?;
        let value = self.port_map[&addr];
        let mut payload = addr.to_be_bytes().to_vec();
        payload.extend_from_slice(&value.to_be_bytes());
        t.record(Channel::SystemBus, self.endpoint(), from, "bus_read", payload, false);
        Ok(value)
    }

    pub fn bus_write(&mut self, t: &mut Transcript, from: Endpoint, addr: u32, value: u64) -> Result<(), WrapperError> {
        if self.reset_gated {
            return Err(self.reject(t, from, addr));
        }
        self.check_mapped(t, &from, addr)?;
        self.port_map.insert(addr, value);
        let mut payload = addr.to_be_bytes().to_vec();
        payload.extend_from_slice(&value.to_be_bytes());
        t.record(Channel::SystemBus, from, self.endpoint(), "bus_write", payload, false);
        Ok(())
    }

    /// Triggers the PUF satellite and ships the signature to the enclave
    /// through the staging buffer, one buffer-load per bus event.
    pub fn extract_puf_signature(&mut self, t: &mut Transcript, rng_seed: u64) -> Result<PufResponse, WrapperError> {
        let puf = self.puf.as_ref().ok_or_else(|| WrapperError::NoPufUnit(self.ip_id.clone()))?;
        if self.reset_gated {
            return Err(self.reject(t, Endpoint::Enclave, 0));
        }
        let response = sample_response(puf, rng_seed);
        for chunk in response.bits.as_bytes().chunks(BUFFER_BYTES) {
            self.buffer.clear();
            self.buffer.extend_from_slice(chunk);
            t.record(
                Channel::SystemBus,
                self.endpoint(),
                Endpoint::Enclave,
                "puf_signature",
                self.buffer.clone(),
                true,
            );
        }
        self.buffer.clear();
        Ok(response)
    }

    /// Drives key frames into the locked IP in order and returns its final
    /// mode.
    pub fn apply_unlock_vector(&mut self, t: &mut Transcript, frames: &[BitVector]) -> Result<LockMode, WrapperError> {
        if self.key_applier.is_none() {
            return Err(WrapperError::NoKeyApplier(self.ip_id.clone()));
        }
        if self.reset_gated {
            return Err(self.reject(t, Endpoint::Enclave, 0));
        }
        let endpoint = self.endpoint();
        let ip = self.key_applier.as_mut().expect("checked above");
        let mut mode = ip.mode();
        for frame in frames {
            t.record(
                Channel::SystemBus,
                Endpoint::Enclave,
                endpoint.clone(),
                "key_frame",
                frame.as_bytes().to_vec(),
                true,
            );
            mode = ip.apply_frame(frame);
        }
        Ok(mode)
    }

    pub fn lock_mode(&self) -> Option<LockMode> {
        self.key_applier.as_ref().map(|k| k.mode())
    }
}
