//! Memory-element PUF cells, the PUF control module and chip identity.

pub mod ecc;
mod pcm;

pub use pcm::{pcm_authenticate, AuthResult, PcmEntry, PcmState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::BitVector;
use crate::IpId;

pub const DEFAULT_WIDTH: usize = 256;
pub const DEFAULT_BER: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PufError {
    #[error("invalid PUF instance: {0}")]
    InvalidInstance(String),
    #[error("uncorrectable error in segment {segment} of response from {ip}")]
    Uncorrectable { ip: IpId, segment: usize },
    #[error("IP {0} is not enrolled in the PCM")]
    UnknownIp(IpId),
    #[error("response width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("no responses supplied")]
    NoResponses,
}

/// One MeLPUF array embedded in a HOST IP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PufInstance {
    pub ip_id: IpId,
    pub width: usize,
    /// Per-die process variation.
    #[serde(with = "hex::serde")]
    pub chip_entropy: [u8; 32],
    pub ber: f64,
}

impl PufInstance {
    pub fn new(ip_id: IpId, width: usize, chip_entropy: [u8; 32], ber: f64) -> Result<Self, PufError> {
        let puf = Self {
            ip_id,
            width,
            chip_entropy,
            ber,
        };
        puf.validate()?;
        Ok(puf)
    }

    pub fn validate(&self) -> Result<(), PufError> {
        if self.width == 0 || !self.width.is_multiple_of(ecc::SEGMENT_BITS) {
            return Err(PufError::InvalidInstance(format!(
                "width {} must be a positive multiple of 16",
                self.width
            )));
        }
        if !(0.0..0.5).contains(&self.ber) {
            return Err(PufError::InvalidInstance(format!("ber {} outside [0, 0.5)", self.ber)));
        }
        Ok(())
    }

    /// Noise-free response bit `i`: MSB of SHA-256 keyed by the die entropy.
    fn ideal_bit(&self, i: usize) -> bool {
        let mut h = Sha256::new();
        h.update(b"melpuf-cell");
        h.update(self.chip_entropy);
        h.update((self.ip_id.as_str().len() as u32).to_be_bytes());
        h.update(self.ip_id.as_str().as_bytes());
        h.update((i as u32).to_be_bytes());
        h.finalize()[0] & 0x80 != 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PufResponse {
    pub ip_id: IpId,
    pub bits: BitVector,
}

impl PufResponse {
    pub fn width(&self) -> usize {
        self.bits.len()
    }
}

/// Reads the PUF once. The noise-free value depends only on the die entropy,
/// the IP id and the width; `rng_seed` drives the independent bit flips.
pub fn sample_response(puf: &PufInstance, rng_seed: u64) -> PufResponse {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let bits = BitVector::from_bits((0..puf.width).map(|i| {
        let bit = puf.ideal_bit(i);
        if puf.ber > 0.0 && rng.gen_bool(puf.ber) {
            !bit
        } else {
            bit
        }
    }));
    PufResponse {
        ip_id: puf.ip_id.clone(),
        bits,
    }
}

/// Per-bit majority vote over several reads of one PUF.
pub fn majority(samples: &[PufResponse]) -> PufResponse {
    let first = samples.first().expect("at least one sample");
    let n = samples.len();
    let bits = BitVector::from_bits(
        (0..first.width()).map(|i| samples.iter().filter(|s| s.bits.get(i)).count() * 2 > n),
    );
    PufResponse {
        ip_id: first.ip_id.clone(),
        bits,
    }
}

/// Majority over `reads` noisy samples. Used to fix a golden response at
/// enrollment.
pub fn golden_response(puf: &PufInstance, reads: usize, rng_seed: u64) -> PufResponse {
    let samples: Vec<PufResponse> = (0..reads.max(1) as u64)
        .map(|k| sample_response(puf, rng_seed.wrapping_add(k.wrapping_mul(0x9e37_79b9_7f4a_7c15))))
        .collect();
    majority(&samples)
}

pub fn encode_parity(expected: &PufResponse) -> BitVector {
    ecc::encode_bits(&expected.bits)
}

pub fn decode_correct(noisy: &PufResponse, parity: &BitVector) -> Result<PufResponse, PufError> {
    let expected_parity = noisy.width() / ecc::SEGMENT_BITS * ecc::PARITY_BITS;
    if !noisy.width().is_multiple_of(ecc::SEGMENT_BITS) || parity.len() != expected_parity {
        return Err(PufError::WidthMismatch {
            expected: expected_parity,
            found: parity.len(),
        });
    }
    let bits = ecc::decode_bits(&noisy.bits, parity).map_err(|(segment, _)| PufError::Uncorrectable {
        ip: noisy.ip_id.clone(),
        segment,
    })?;
    Ok(PufResponse {
        ip_id: noisy.ip_id.clone(),
        bits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChipIdentity {
    #[serde(with = "hex::serde")]
    pub digest: [u8; 32],
}

impl ChipIdentity {
    pub fn to_hex(&self) -> String {
        hex::encode(self.digest)
    }
}

/// SHA-256 of the XOR-fold of all responses.
pub fn compute_chip_id(responses: &[PufResponse]) -> Result<ChipIdentity, PufError> {
    let (first, rest) = responses.split_first().ok_or(PufError::NoResponses)?;
    let mut fold = first.bits.clone();
    for r in rest {
        if r.width() != fold.len() {
            return Err(PufError::WidthMismatch {
                expected: fold.len(),
                found: r.width(),
            });
        }
        fold.xor_assign(&r.bits);
    }
    Ok(ChipIdentity {
        digest: Sha256::digest(fold.as_bytes()).into(),
    })
}
