//! Oracles shared by the integration tests. Nothing here calls into the
//! crate's ECC or hashing code.

#![allow(dead_code)]

/// Hamming positions of the 16 data bits, MSB first.
pub const DATA_POS: [u32; 16] = [3, 5, 6, 7, 9, 10, 11, 12, 13, 14, 15, 17, 18, 19, 20, 21];

/// Codeword as a 22-bit integer, bit `p` holding Hamming position `p`
/// (position 0 is the overall parity bit).
pub fn place(data: u16, parity: u8) -> u32 {
    let mut cw = 0u32;
    for (j, &p) in DATA_POS.iter().enumerate() {
        if data & (0x8000 >> j) != 0 {
            cw |= 1 << p;
        }
    }
    // parity layout [p1, p2, p4, p8, p16, p_all], MSB first
    for k in 0..5 {
        if parity & (1 << (5 - k)) != 0 {
            cw |= 1 << (1u32 << k);
        }
    }
    if parity & 1 != 0 {
        cw |= 1;
    }
    cw
}

pub fn split(cw: u32) -> (u16, u8) {
    let mut data = 0u16;
    for (j, &p) in DATA_POS.iter().enumerate() {
        if cw & (1 << p) != 0 {
            data |= 0x8000 >> j;
        }
    }
    let mut parity = 0u8;
    for k in 0..5 {
        if cw & (1 << (1u32 << k)) != 0 {
            parity |= 1 << (5 - k);
        }
    }
    (data, parity | (cw & 1) as u8)
}

/// Parity-check matrix product: zero iff `cw` is a codeword. Rows are the
/// five Hamming checks (XOR of positions with bit k set) plus overall
/// parity over all 22 bits.
pub fn syndrome(cw: u32) -> u32 {
    let mut s = 0u32;
    for p in 1..22u32 {
        if cw & (1 << p) != 0 {
            s ^= p;
        }
    }
    s | ((cw.count_ones() & 1) << 5)
}

/// Brute force: the unique 6-bit parity making a codeword.
pub fn oracle_parity(data: u16) -> u8 {
    let found: Vec<u8> = (0..64u8).filter(|&p| syndrome(place(data, p)) == 0).collect();
    assert_eq!(found.len(), 1, "parity not unique for {data:#06x}");
    found[0]
}

/// All 65536 codewords, indexed by data value.
pub fn codebook() -> Vec<u32> {
    (0..=u16::MAX).map(|d| place(d, oracle_parity(d))).collect()
}

/// Nearest-codeword decoding: distance 0 or a unique codeword at distance
/// 1 decodes; anything else is uncorrectable.
pub fn oracle_decode(book: &[u32], received: u32) -> Option<u16> {
    let mut best = u32::MAX;
    let mut at = Vec::new();
    for (d, &cw) in book.iter().enumerate() {
        let dist = (cw ^ received).count_ones();
        if dist < best {
            best = dist;
            at.clear();
        }
        if dist == best {
            at.push(d as u16);
        }
    }
    (best <= 1 && at.len() == 1).then(|| at[0])
}

/// Fixed responses and their SHA-256 digests, computed with Python's
/// hashlib.
pub mod vectors {
    pub fn r1() -> Vec<u8> {
        (0..32u8).collect()
    }
    pub fn r2() -> Vec<u8> {
        (0..32u32).map(|i| ((i * 7 + 3) % 256) as u8).collect()
    }
    pub fn r3() -> Vec<u8> {
        vec![0xff; 32]
    }
    pub const R1_XOR_R2: &str = "030b131b1b232b33334b435b5b536b63636b939b9b838bb3b3aba3dbdbd3cbc3";
    pub const CHIP_ID_R1: &str = "630dcd2966c4336691125448bbb25b4ff412a49c732db2c8abc1b8581bd710dd";
    pub const CHIP_ID_R1_R2: &str = "a8b95b52ee84d895c0665e875cf369a349da53dc11ffcbe3c49f68f68a9b417a";
    pub const CHIP_ID_R1_R2_R3: &str = "01b95ebed0e3a8a0cc1b96b007a00c9155aee56820b3f09b33ecd9a203f52e3e";
    pub const SHA256_ZEROS_32: &str = "66687aadf862bd776c8fc18b8e9f8e20089714856ee233b3902a591d0d5f2925";
    pub const IPID_R2: &str = "ab5f8b5cb9435354c7b58603592d5faf081e17ceb05f7a7c67f4b666f12ca457";

    /// AES-256-CTR, NIST SP 800-38A F.5.5.
    pub const NIST_KEY: &str = "603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4";
    pub const NIST_CTR: &str = "f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff";
    pub const NIST_PT: &str = "6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e5130c81c46a35ce411e5fbc1191a0a52eff69f2445df4f9b17ad2b417be66c3710";
    pub const NIST_CT: &str = "601ec313775789a5b7a7f504bbf3d228f443e3ca4d62b59aca84e990cacaf5c52b0930daa23de94ce87017ba2d84988ddfc9c58db67aada613c2dd08457941a6";
    /// Same key, counter ff..ff, 32 zero bytes: checks the 128-bit wrap.
    pub const WRAP_CT: &str = "3b3c2921c85a24de9ac606ce6d1d60cce568f68194cf76d6174d4cc04310a854";
}
