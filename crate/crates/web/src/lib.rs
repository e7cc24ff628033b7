//! Browser bindings for the static page in `www/`.
//!
//! Every export returns JSON text; errors come back as strings.

use citadel_sim::metrics::{self, Calibration, SweepKind};
use citadel_sim::puf::ecc::{decode_segment, encode_segment, PARITY_BITS, SEGMENT_BITS};
use citadel_sim::scenarios::{run_scenario, AmiMode, ScenarioConfig, ScenarioKind};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Calibration points, an interpolated sweep and (for unlock curves) the
/// frame-count estimate, for one curve.
#[wasm_bindgen]
pub fn delay_curve(kind: &str, ip_class: &str, step: u32) -> Result<String, String> {
    let cal = Calibration::builtin();
    let (sweep_kind, points) = match kind {
        "auth" => (SweepKind::Auth, &cal.delays.auth_delay),
        "unlock" => (SweepKind::Unlock, cal.unlock_curve(ip_class).map_err(|e| e.to_string())?),
        other => return Err(format!("unknown curve kind {other:?}")),
    };
    let sweep = metrics::sweep(sweep_kind, Some(ip_class), step).map_err(|e| e.to_string())?;
    let estimate: Vec<(u32, f64)> = match sweep_kind {
        SweepKind::Auth => vec![],
        SweepKind::Unlock => points
            .iter()
            .filter_map(|&(b, _)| metrics::estimate_unlock_delay(ip_class, b).ok().map(|d| (b, d)))
            .collect(),
    };
    Ok(json!({ "points": points, "sweep": sweep, "estimate": estimate }).to_string())
}

/// IP classes with an unlock curve.
#[wasm_bindgen]
pub fn ip_classes() -> String {
    let classes: Vec<&str> = Calibration::builtin().ip_classes().collect();
    json!(classes).to_string()
}

fn bits_of(v: u32, width: usize) -> String {
    (0..width).rev().map(|i| if v >> i & 1 == 1 { '1' } else { '0' }).collect()
}

/// Encodes one 16-bit segment, flips the given code-bit positions (0..16
/// data MSB first, 16..22 parity `[p1 p2 p4 p8 p16 p_all]`) and decodes.
#[wasm_bindgen]
pub fn ecc_flips(data: u16, flips: Vec<u32>) -> Result<String, String> {
    let parity = encode_segment(data);
    let mut word = (u32::from(data) << PARITY_BITS) | u32::from(parity);
    let total = (SEGMENT_BITS + PARITY_BITS) as u32;
    for &f in &flips {
        if f >= total {
            return Err(format!("bit {f} is outside the {total}-bit codeword"));
        }
        word ^= 1 << (total - 1 - f);
    }
    let (rx_data, rx_parity) = ((word >> PARITY_BITS) as u16, (word & 0x3f) as u8);
    let decoded = decode_segment(rx_data, rx_parity);
    let outcome = match decoded {
        Err(_) => "uncorrectable",
        Ok(_) if flips.is_empty() => "clean",
        Ok(d) if d == data => "corrected",
        Ok(_) => "miscorrected",
    };
    Ok(json!({
        "data": format!("{data:04x}"),
        "parity": bits_of(parity.into(), PARITY_BITS),
        "sent": bits_of((u32::from(data) << PARITY_BITS) | u32::from(parity), total as usize),
        "received": bits_of(word, total as usize),
        "flips": flips,
        "outcome": outcome,
        "decoded": decoded.ok().map(|d| format!("{d:04x}")),
    })
    .to_string())
}

/// Runs a scenario against an in-page ledger. `config_json` may be empty
/// for the built-in single-bus SoC. Returns the verdict plus the
/// transcript events its evidence points at.
#[wasm_bindgen]
pub fn run_verdict(scenario: &str, seed: u32, attempts: u32, config_json: &str) -> Result<String, String> {
    let kind = ScenarioKind::from_name(scenario).ok_or_else(|| format!("unknown scenario {scenario:?}"))?;
    let mut cfg = if config_json.trim().is_empty() {
        ScenarioConfig::single_bus()
    } else {
        ScenarioConfig::from_json(config_json).map_err(|e| e.to_string())?
    };
    cfg.seed = seed.into();
    cfg.attempts = attempts.max(1).into();
    let run = run_scenario(kind, &cfg, &AmiMode::InProcess).map_err(|e| e.to_string())?;
    let evidence: Vec<Value> = run
        .verdict
        .evidence
        .iter()
        .filter_map(|&i| run.transcript.get(i).map(|e| json!({ "index": i, "event": e })))
        .collect();
    Ok(json!({
        "verdict": run.verdict,
        "events": run.transcript.len(),
        "evidence": evidence,
    })
    .to_string())
}
