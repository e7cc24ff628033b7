//! Master-seed fan-out. Every actor gets its own sub-seed so that adding an
//! actor never perturbs the random streams of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub fn sub_seed(master: u64, actor: &str) -> u64 {
    let d = Sha256::new()
        .chain_update(b"seed-fanout")
        .chain_update(master.to_be_bytes())
        .chain_update(actor.as_bytes())
        .finalize();
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn sub_key(master: u64, actor: &str) -> [u8; 32] {
    Sha256::new()
        .chain_update(b"key-fanout")
        .chain_update(master.to_be_bytes())
        .chain_update(actor.as_bytes())
        .finalize()
        .into()
}

pub fn actor_rng(master: u64, actor: &str) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(sub_seed(master, actor))
}
