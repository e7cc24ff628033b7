use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{decode_correct, encode_parity, PufError, PufResponse};
use crate::bits::BitVector;
use crate::IpId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcmEntry {
    /// Opaque challenge selector sent to the wrapper when triggering the PUF.
    pub control_signal: BitVector,
    pub expected_response: PufResponse,
    pub parity: BitVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuthResult {
    Pass,
    Fail,
}

/// PUF Control Module buffer: enrolled IPs indexed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcmState {
    entries: BTreeMap<IpId, PcmEntry>,
}

impl PcmState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Provisions (or re-provisions) an IP with its golden response; parity
    /// is derived from the expected signature.
    pub fn enroll(&mut self, control_signal: BitVector, expected: PufResponse) {
        let parity = encode_parity(&expected);
        self.entries.insert(
            expected.ip_id.clone(),
            PcmEntry {
                control_signal,
                expected_response: expected,
                parity,
            },
        );
    }

    pub fn entry(&self, ip: &IpId) -> Option<&PcmEntry> {
        self.entries.get(ip)
    }

    pub fn ip_ids(&self) -> impl Iterator<Item = &IpId> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Pass iff the error-corrected signature equals the expected one.
    pub fn authenticate(&self, ip: &IpId, received: &PufResponse) -> Result<AuthResult, PufError> {
        let entry = self.entries.get(ip).ok_or_else(|| PufError::UnknownIp(ip.clone()))?;
        if received.width() != entry.expected_response.width() {
            return Ok(AuthResult::Fail);
        }
        Ok(match decode_correct(received, &entry.parity) {
            Ok(fixed) if fixed.bits == entry.expected_response.bits => AuthResult::Pass,
            _ => AuthResult::Fail,
        })
    }
}

pub fn pcm_authenticate(pcm: &PcmState, ip: &IpId, received: &PufResponse) -> Result<AuthResult, PufError> {
    pcm.authenticate(ip, received)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puf::{sample_response, PufInstance};

    fn enrolled() -> (PcmState, PufResponse) {
        let puf = PufInstance::new(IpId::from("uart"), 64, [9; 32], 0.0).unwrap();
        let expected = sample_response(&puf, 0);
        let mut pcm = PcmState::new();
        pcm.enroll(BitVector::zeros(16), expected.clone());
        (pcm, expected)
    }

    #[test]
    fn parity_length_matches_width() {
        let (pcm, _) = enrolled();
        assert_eq!(pcm.entry(&IpId::from("uart")).unwrap().parity.len(), 4 * 6);
    }

    #[test]
    fn exact_and_single_flip_pass() {
        let (pcm, expected) = enrolled();
        let ip = IpId::from("uart");
        assert_eq!(pcm.authenticate(&ip, &expected), Ok(AuthResult::Pass));
        let mut noisy = expected.clone();
        noisy.bits.flip(40);
        assert_eq!(pcm.authenticate(&ip, &noisy), Ok(AuthResult::Pass));
    }

    #[test]
    fn double_flip_fails() {
        let (pcm, mut noisy) = enrolled();
        noisy.bits.flip(1);
        noisy.bits.flip(2);
        assert_eq!(pcm.authenticate(&IpId::from("uart"), &noisy), Ok(AuthResult::Fail));
    }

    #[test]
    fn unknown_ip() {
        let (pcm, expected) = enrolled();
        assert_eq!(
            pcm_authenticate(&pcm, &IpId::from("gpio"), &expected),
            Err(PufError::UnknownIp(IpId::from("gpio")))
        );
    }
}
