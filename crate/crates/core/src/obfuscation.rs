//! State-space obfuscated (logic-locked) IPs.
//!
//! A locked IP hides its functional mode behind a single path of key frames.
//! Each frame is one input-width slice of the unlock vector; a wrong frame
//! drops the FSM back to its initial locked state.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::BitVector;
use crate::IpId;

pub const DEFAULT_KEY_BITS: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlockVector {
    pub ip_id: IpId,
    pub key_bits: BitVector,
}

impl UnlockVector {
    pub fn new(ip_id: IpId, key_bits: BitVector) -> Self {
        assert!(!key_bits.is_empty(), "unlock vector must be non-empty");
        Self { ip_id, key_bits }
    }
}

/// Splits the key into `ceil(len / input_width)` frames of `input_width`
/// bits each, zero-padding the last.
pub fn fragment_key(key: &UnlockVector, input_width: usize) -> Vec<BitVector> {
    assert!(input_width > 0, "input width must be positive");
    let len = key.key_bits.len();
    (0..len.div_ceil(input_width))
        .map(|f| {
            let start = f * input_width;
            let take = input_width.min(len - start);
            let mut frame = key.key_bits.slice(start, take);
            for _ in take..input_width {
                frame.push(false);
            }
            frame
        })
        .collect()
}

/// Concatenates frames and drops the padding beyond `key_len` bits.
pub fn reassemble(frames: &[BitVector], key_len: usize) -> BitVector {
    let mut out = BitVector::zeros(0);
    for f in frames {
        out.extend_from(f);
    }
    assert!(out.len() >= key_len, "frames shorter than key");
    out.slice(0, key_len)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockMode {
    Locked,
    /// Number of correct frames applied so far (at least one).
    Transition(usize),
    Unlocked,
}

/// Behaviour of the IP once unlocked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FunctionalModel {
    #[default]
    Identity,
    Xor { mask: u64 },
    Add { k: u64 },
    Not,
}

impl FunctionalModel {
    pub fn eval(&self, input: u64) -> u64 {
        match *self {
            FunctionalModel::Identity => input,
            FunctionalModel::Xor { mask } => input ^ mask,
            FunctionalModel::Add { k } => input.wrapping_add(k),
            FunctionalModel::Not => !input,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockedIpModel {
    pub ip_id: IpId,
    /// Functional input width, excluding clock and reset.
    pub input_width: usize,
    unlock_path: Vec<BitVector>,
    mode: LockMode,
    pub functional: FunctionalModel,
    #[serde(with = "hex::serde")]
    scramble_key: [u8; 32],
    /// Reporting only; decoy transitions are not modelled.
    pub decoy_states: u32,
}

impl LockedIpModel {
    pub fn new(key: &UnlockVector, input_width: usize, functional: FunctionalModel, decoy_states: u32) -> Self {
        let scramble_key = Sha256::new()
            .chain_update(b"locked-scramble")
            .chain_update(key.ip_id.as_str().as_bytes())
            .chain_update(key.key_bits.as_bytes())
            .finalize()
            .into();
        Self {
            ip_id: key.ip_id.clone(),
            input_width,
            unlock_path: fragment_key(key, input_width),
            mode: LockMode::Locked,
            functional,
            scramble_key,
            decoy_states,
        }
    }

    pub fn mode(&self) -> LockMode {
        self.mode
    }

    pub fn frame_count(&self) -> usize {
        self.unlock_path.len()
    }

    pub fn is_unlocked(&self) -> bool {
        self.mode == LockMode::Unlocked
    }

    /// Advances along the unlock path on the expected frame; anything else
    /// resets to `Locked`. Frames have no effect once unlocked.
    pub fn apply_frame(&mut self, frame: &BitVector) -> LockMode {
        let step = match self.mode {
            LockMode::Unlocked => return self.mode,
            LockMode::Locked => 0,
            LockMode::Transition(s) => s,
        };
        self.mode = if self.unlock_path.get(step) == Some(frame) {
            if step + 1 == self.unlock_path.len() {
                LockMode::Unlocked
            } else {
                LockMode::Transition(step + 1)
            }
        } else {
            LockMode::Locked
        };
        self.mode
    }

    pub fn step(&self, input: u64) -> u64 {
        if self.is_unlocked() {
            self.functional.eval(input)
        } else {
            self.scramble(input)
        }
    }

    pub fn relock(&mut self) -> LockMode {
        self.mode = LockMode::Locked;
        self.mode
    }

    /// Keyed 64-bit permutation (8-round Feistel on 32-bit halves).
    fn scramble(&self, input: u64) -> u64 {
        let mut l = (input >> 32) as u32;
        let mut r = input as u32;
        for round in 0..8 {
            let k = u32::from_be_bytes(self.scramble_key[round * 4..round * 4 + 4].try_into().unwrap());
            let mut f = r ^ k;
            f = f.wrapping_mul(0x9e37_79b1);
            f ^= f >> 15;
            f = f.wrapping_mul(0x85eb_ca77);
            f ^= f >> 13;
            (l, r) = (r, l ^ f);
        }
        ((l as u64) << 32) | r as u64
    }
}

pub fn apply_frame(ip: &mut LockedIpModel, frame: &BitVector) -> LockMode {
    ip.apply_frame(frame)
}

pub fn step(ip: &LockedIpModel, input: u64) -> u64 {
    ip.step(input)
}

pub fn relock(ip: &mut LockedIpModel) -> LockMode {
    ip.relock()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(len: usize, seed: u8) -> UnlockVector {
        let bytes: Vec<u8> = (0..len.div_ceil(8)).map(|i| (i as u8).wrapping_mul(37) ^ seed).collect();
        UnlockVector::new(IpId::from("aes"), BitVector::from_bytes(&bytes, len))
    }

    #[test]
    fn frame_counts() {
        assert_eq!(fragment_key(&key(512, 1), 32).len(), 16);
        assert_eq!(fragment_key(&key(512, 1), 512).len(), 1);
        let frames = fragment_key(&key(512, 1), 100);
        assert_eq!(frames.len(), 6);
        assert!(frames.iter().all(|f| f.len() == 100));
        assert_eq!(frames[5].slice(12, 88).count_ones(), 0);
    }

    #[test]
    fn ordered_frames_unlock() {
        let k = key(512, 2);
        let mut ip = LockedIpModel::new(&k, 32, FunctionalModel::Identity, 3);
        let frames = fragment_key(&k, 32);
        for (i, f) in frames.iter().enumerate() {
            let m = ip.apply_frame(f);
            if i + 1 < frames.len() {
                assert_eq!(m, LockMode::Transition(i + 1));
            }
        }
        assert_eq!(ip.mode(), LockMode::Unlocked);
        assert_eq!(ip.step(0x1234), 0x1234);
    }

    #[test]
    fn corrupted_frame_resets() {
        let k = key(512, 3);
        let mut ip = LockedIpModel::new(&k, 32, FunctionalModel::Identity, 0);
        let mut frames = fragment_key(&k, 32);
        frames[4].flip(7);
        for (i, f) in frames.iter().enumerate().take(5) {
            let m = ip.apply_frame(f);
            if i == 4 {
                assert_eq!(m, LockMode::Locked);
            }
        }
    }

    #[test]
    fn relock_is_idempotent_and_reversible() {
        let k = key(64, 4);
        let frames = fragment_key(&k, 16);
        let mut ip = LockedIpModel::new(&k, 16, FunctionalModel::Not, 0);
        assert_eq!(ip.relock(), LockMode::Locked);
        assert_eq!(ip.relock(), LockMode::Locked);
        frames.iter().for_each(|f| {
            ip.apply_frame(f);
        });
        assert!(ip.is_unlocked());
        assert_eq!(ip.step(0), u64::MAX);
        ip.relock();
        assert_ne!(ip.step(0), u64::MAX);
        frames.iter().for_each(|f| {
            ip.apply_frame(f);
        });
        assert!(ip.is_unlocked());
    }
}
