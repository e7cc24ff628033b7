//! Extended Hamming SEC-DED(22,16) over 16-bit response segments.
//!
//! A segment's 16 data bits occupy the non-power-of-two positions 3..=21 of
//! a classic Hamming(21,16) word. The six parity bits are emitted MSB-first
//! as `[p1, p2, p4, p8, p16, p_all]`, where `p_all` is even parity over the
//! other 21 bits.

use crate::bits::BitVector;

pub const SEGMENT_BITS: usize = 16;
pub const PARITY_BITS: usize = 6;

/// Hamming position of each data bit, data bit 0 being the segment MSB.
const DATA_POSITIONS: [u8; SEGMENT_BITS] = [3, 5, 6, 7, 9, 10, 11, 12, 13, 14, 15, 17, 18, 19, 20, 21];

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("uncorrectable error in segment")]
pub struct Uncorrectable;

/// XOR of the Hamming positions of every set data bit.
fn syndrome_of(data: u16) -> u8 {
    DATA_POSITIONS
        .iter()
        .enumerate()
        .filter(|(j, _)| data & (0x8000 >> j) != 0)
        .fold(0u8, |acc, (_, &pos)| acc ^ pos)
}

/// Packs the 5-bit Hamming syndrome (bit k = parity at position 2^k) and the
/// overall parity into the emitted 6-bit layout.
fn pack(syndrome: u8, overall: bool) -> u8 {
    let mut out = 0u8;
    for k in 0..5 {
        if syndrome & (1 << k) != 0 {
            out |= 1 << (5 - k);
        }
    }
    out | overall as u8
}

fn unpack(parity: u8) -> (u8, bool) {
    let mut syndrome = 0u8;
    for k in 0..5 {
        if parity & (1 << (5 - k)) != 0 {
            syndrome |= 1 << k;
        }
    }
    (syndrome, parity & 1 != 0)
}

pub fn encode_segment(data: u16) -> u8 {
    let syndrome = syndrome_of(data);
    let overall = (data.count_ones() + syndrome.count_ones()) % 2 == 1;
    pack(syndrome, overall)
}

/// Corrects at most one flipped bit among the 22 code bits of a segment.
/// Any error pattern recognised as a double error is reported as
/// [`Uncorrectable`].
pub fn decode_segment(data: u16, parity: u8) -> Result<u16, Uncorrectable> {
    let (stored, stored_overall) = unpack(parity & 0x3f);
    let syndrome = syndrome_of(data) ^ stored;
    let overall_odd =
        (data.count_ones() + stored.count_ones() + stored_overall as u32) % 2 == 1;

    match (syndrome, overall_odd) {
        (0, false) => Ok(data),
        // single error in p_all itself
        (0, true) => Ok(data),
        (_, false) => Err(Uncorrectable),
        (s, true) if s.is_power_of_two() => Ok(data),
        (s, true) => match DATA_POSITIONS.iter().position(|&p| p == s) {
            Some(j) => Ok(data ^ (0x8000 >> j)),
            None => Err(Uncorrectable),
        },
    }
}

/// Parity for every 16-bit segment of `data`, concatenated in order.
pub fn encode_bits(data: &BitVector) -> BitVector {
    assert_eq!(data.len() % SEGMENT_BITS, 0, "length must be a multiple of 16");
    let segments = data.len() / SEGMENT_BITS;
    let mut parity = BitVector::zeros(segments * PARITY_BITS);
    for s in 0..segments {
        let word = data.read_uint(s * SEGMENT_BITS, SEGMENT_BITS) as u16;
        parity.write_uint(s * PARITY_BITS, PARITY_BITS, encode_segment(word) as u64);
    }
    parity
}

/// Segment-wise correction. The error carries the index of the first
/// segment that could not be corrected.
pub fn decode_bits(data: &BitVector, parity: &BitVector) -> Result<BitVector, (usize, Uncorrectable)> {
    assert_eq!(data.len() % SEGMENT_BITS, 0);
    let segments = data.len() / SEGMENT_BITS;
    assert_eq!(parity.len(), segments * PARITY_BITS, "parity length mismatch");
    let mut out = data.clone();
    for s in 0..segments {
        let word = data.read_uint(s * SEGMENT_BITS, SEGMENT_BITS) as u16;
        let p = parity.read_uint(s * PARITY_BITS, PARITY_BITS) as u8;
        let fixed = decode_segment(word, p).map_err(|e| (s, e))?;
        out.write_uint(s * SEGMENT_BITS, SEGMENT_BITS, fixed as u64);
    }
    Ok(out)
}
