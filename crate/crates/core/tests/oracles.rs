mod common;

use citadel_sim::bits::BitVector;
use citadel_sim::enclave::envelope::{aes256_ctr, open_envelope, seal_asset};
use citadel_sim::puf::ecc::{decode_bits, decode_segment, encode_bits, encode_segment};
use citadel_sim::puf::{compute_chip_id, PufResponse};
use citadel_sim::IpId;
use common::vectors;
use common::{codebook, oracle_decode, oracle_parity, place, split};

fn arr<const N: usize>(h: &str) -> [u8; N] {
    hex::decode(h).unwrap().try_into().unwrap()
}

#[test]
fn encoder_matches_brute_force_parity_for_every_segment() {
    for d in 0..=u16::MAX {
        assert_eq!(encode_segment(d), oracle_parity(d), "data {d:#06x}");
    }
}

#[test]
fn decoder_matches_nearest_codeword_on_all_single_and_double_flips() {
    let book = codebook();
    for d in (0..=u16::MAX).step_by(1031) {
        let cw = book[d as usize];
        for i in 0..22 {
            let one = cw ^ (1 << i);
            let (data, parity) = split(one);
            assert_eq!(decode_segment(data, parity).ok(), oracle_decode(&book, one));
            assert_eq!(decode_segment(data, parity), Ok(d));
            for j in i + 1..22 {
                let two = one ^ (1 << j);
                let (data, parity) = split(two);
                assert_eq!(oracle_decode(&book, two), None);
                assert!(decode_segment(data, parity).is_err(), "{d:#06x} flips {i},{j}");
            }
        }
    }
}

#[test]
fn oracle_layout_round_trips() {
    for d in [0u16, 1, 0x8000, 0xbeef, u16::MAX] {
        let p = oracle_parity(d);
        assert_eq!(split(place(d, p)), (d, p));
    }
}

#[test]
fn bit_level_codec_uses_msb_first_segments() {
    let data = BitVector::from_bytes(&[0xbe, 0xef, 0x00, 0x01], 32);
    let parity = encode_bits(&data);
    assert_eq!(parity.len(), 12);
    assert_eq!(parity.read_uint(0, 6) as u8, oracle_parity(0xbeef));
    assert_eq!(parity.read_uint(6, 6) as u8, oracle_parity(0x0001));
    let mut noisy = data.clone();
    noisy.flip(17);
    assert_eq!(decode_bits(&noisy, &parity).unwrap(), data);
    noisy.flip(18);
    assert_eq!(decode_bits(&noisy, &parity).unwrap_err().0, 1);
}

fn resp(bytes: Vec<u8>) -> PufResponse {
    PufResponse {
        ip_id: IpId::from("ip"),
        bits: BitVector::from_bytes(&bytes, bytes.len() * 8),
    }
}

#[test]
fn chip_id_matches_frozen_digests() {
    let (r1, r2, r3) = (vectors::r1(), vectors::r2(), vectors::r3());
    let x: Vec<u8> = r1.iter().zip(&r2).map(|(a, b)| a ^ b).collect();
    assert_eq!(hex::encode(x), vectors::R1_XOR_R2);
    assert_eq!(compute_chip_id(&[resp(r1.clone())]).unwrap().to_hex(), vectors::CHIP_ID_R1);
    assert_eq!(compute_chip_id(&[resp(r1.clone()), resp(r2.clone())]).unwrap().to_hex(), vectors::CHIP_ID_R1_R2);
    assert_eq!(
        compute_chip_id(&[resp(r1.clone()), resp(r2.clone()), resp(r3)]).unwrap().to_hex(),
        vectors::CHIP_ID_R1_R2_R3
    );
    assert_eq!(compute_chip_id(&[resp(r2.clone()), resp(r2)]).unwrap().to_hex(), vectors::SHA256_ZEROS_32);
}

#[test]
fn chip_id_rejects_empty_and_mismatched_widths() {
    assert!(compute_chip_id(&[]).is_err());
    assert!(compute_chip_id(&[resp(vec![0; 32]), resp(vec![0; 16])]).is_err());
}

#[test]
fn aes256_ctr_matches_nist_vector() {
    let key = arr::<32>(vectors::NIST_KEY);
    let ctr = arr::<16>(vectors::NIST_CTR);
    let pt = hex::decode(vectors::NIST_PT).unwrap();
    assert_eq!(hex::encode(aes256_ctr(&key, &ctr, &pt)), vectors::NIST_CT);
}

#[test]
fn aes256_ctr_counter_wraps_across_128_bits() {
    let key = arr::<32>(vectors::NIST_KEY);
    assert_eq!(hex::encode(aes256_ctr(&key, &[0xff; 16], &[0u8; 32])), vectors::WRAP_CT);
}

#[test]
fn envelope_ciphertext_is_ctr_output_and_digest_checks() {
    let key = arr::<32>(vectors::NIST_KEY);
    let ctr = arr::<16>(vectors::NIST_CTR);
    let pt = hex::decode(vectors::NIST_PT).unwrap();
    let env = seal_asset(&pt, &key, ctr);
    assert_eq!(hex::encode(&env.ciphertext), vectors::NIST_CT);
    assert_eq!(open_envelope(&env, &key).unwrap(), pt);
}
