//! Transcript scans shared by every scenario.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::enclave::BootReport;
use crate::transcript::{contains_asset, Channel, Endpoint, Transcript};
use crate::IpId;

use super::MIN_ASSET_BYTES;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub reason: String,
}

/// Finds events where asset material is visible to a party other than the
/// source IP and the enclave.
///
/// Network and boot-interface payloads may never contain an asset, raw or
/// hex-encoded. A system-bus event carrying plaintext (or containing an
/// asset) must run between the enclave and one IP that is out of reset
/// while every other IP is held in reset. Gating state is rebuilt from the
/// reset-control events.
pub fn confidentiality_violations(t: &Transcript, assets: &[Vec<u8>], ips: &[IpId]) -> Vec<Violation> {
    let assets: Vec<&[u8]> = assets
        .iter()
        .filter(|a| a.len() >= MIN_ASSET_BYTES)
        .map(Vec::as_slice)
        .collect();
    let mut gated: BTreeMap<&IpId, bool> = ips.iter().map(|ip| (ip, false)).collect();
    let mut out = vec![];
    for (index, e) in t.events().iter().enumerate() {
        let leaks = || assets.iter().any(|a| contains_asset(&e.payload, a));
        match e.channel {
            Channel::ResetCtl => {
                if let Endpoint::Ip(ip) = &e.to {
                    if let Some(g) = gated.get_mut(ip) {
                        *g = e.label == "reset_gate";
                    }
                }
            }
            Channel::AmiNet | Channel::BootIface => {
                if leaks() {
                    out.push(Violation {
                        index,
                        reason: format!("asset on {:?} event {}", e.channel, e.label),
                    });
                }
            }
            Channel::SystemBus => {
                if !(e.plaintext || leaks()) {
                    continue;
                }
                let source = match (&e.from, &e.to) {
                    (Endpoint::Ip(ip), Endpoint::Enclave) | (Endpoint::Enclave, Endpoint::Ip(ip)) => ip,
                    _ => {
                        out.push(Violation {
                            index,
                            reason: format!("asset between {} and {}", e.from, e.to),
                        });
                        continue;
                    }
                };
                let isolated = gated.iter().all(|(ip, g)| if *ip == source { !g } else { *g });
                if !isolated {
                    out.push(Violation {
                        index,
                        reason: format!("asset transfer with {source} not isolated"),
                    });
                }
            }
        }
    }
    out
}

/// System-bus events inside a boot that precede the HOST acknowledgment,
/// or occur at all in a boot that never reached the handshake.
pub fn phase_order_violations(t: &Transcript, boots: &[BootReport]) -> Vec<Violation> {
    let mut out = vec![];
    for b in boots {
        let limit = b.ack_event.unwrap_or(b.end_event);
        for index in b.first_event..limit.min(t.len()) {
            if t.events()[index].channel == Channel::SystemBus {
                out.push(Violation {
                    index,
                    reason: "system bus event before boot acknowledgment".into(),
                });
            }
        }
    }
    out
}
