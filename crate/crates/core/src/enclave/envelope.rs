//! AES-256 counter-mode envelopes with a SHA-256 plaintext digest.

use aes::cipher::{KeyIvInit, StreamCipher};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

type Aes256Ctr = ctr::Ctr128BE<aes::Aes256>;

pub type CommKey = [u8; 32];
pub type Nonce = [u8; 16];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecureEnvelope {
    #[serde(with = "hex::serde")]
    pub nonce: Nonce,
    #[serde(with = "hex::serde")]
    pub ciphertext: Vec<u8>,
    #[serde(with = "hex::serde")]
    pub digest: [u8; 32],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("envelope integrity check failed")]
pub struct IntegrityFailure;

/// Keystream XOR; the nonce is the initial 128-bit big-endian counter block.
pub fn aes256_ctr(key: &CommKey, nonce: &Nonce, data: &[u8]) -> Vec<u8> {
    let mut buf = data.to_vec();
    let mut cipher = Aes256Ctr::new(key.into(), nonce.into());
    cipher.apply_keystream(&mut buf);
    buf
}

pub fn seal_asset(plaintext: &[u8], key: &CommKey, nonce: Nonce) -> SecureEnvelope {
    SecureEnvelope {
        nonce,
        ciphertext: aes256_ctr(key, &nonce, plaintext),
        digest: Sha256::digest(plaintext).into(),
    }
}

pub fn open_envelope(env: &SecureEnvelope, key: &CommKey) -> Result<Vec<u8>, IntegrityFailure> {
    let plaintext = aes256_ctr(key, &env.nonce, &env.ciphertext);
    let digest: [u8; 32] = Sha256::digest(&plaintext).into();
    if digest == env.digest {
        Ok(plaintext)
    } else {
        Err(IntegrityFailure)
    }
}
