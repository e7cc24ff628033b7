//! Scenario configuration, loadable from JSON.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::enclave::{BusTopology, Chip, Enclave, EnclaveConfig, ScmOrder, Soc};
use crate::obfuscation::{FunctionalModel, LockedIpModel, UnlockVector};
use crate::puf::{PufInstance, DEFAULT_BER, DEFAULT_WIDTH};
use crate::seed::actor_rng;
use crate::wrapper::SecurityWrapper;
use crate::IpId;

fn default_input_width() -> usize {
    32
}
fn default_puf_width() -> usize {
    DEFAULT_WIDTH
}
fn default_key_bits() -> usize {
    crate::obfuscation::DEFAULT_KEY_BITS
}
fn default_registers() -> u32 {
    8
}
fn default_decoys() -> u32 {
    3
}
fn default_ber() -> f64 {
    DEFAULT_BER
}
fn default_attempts() -> u64 {
    10_000
}
fn default_golden_reads() -> usize {
    9
}
fn default_n_chip_id_ips() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IpConfig {
    pub id: IpId,
    /// Delay-calibration class, e.g. "aes256".
    #[serde(default)]
    pub class: Option<String>,
    /// Key-frame width in bits (1..=64).
    #[serde(default = "default_input_width")]
    pub input_width: usize,
    #[serde(default)]
    pub has_puf: bool,
    #[serde(default = "default_puf_width")]
    pub puf_width: usize,
    #[serde(default)]
    pub is_locked: bool,
    #[serde(default = "default_key_bits")]
    pub key_bits: usize,
    /// Explicit unlock vector; derived from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_hex: Option<String>,
    #[serde(default)]
    pub functional: FunctionalModel,
    #[serde(default = "default_registers")]
    pub registers: u32,
    #[serde(default = "default_decoys")]
    pub decoy_states: u32,
}

impl IpConfig {
    pub fn new(id: &str) -> Self {
        Self {
            id: IpId::from(id),
            class: None,
            input_width: default_input_width(),
            has_puf: false,
            puf_width: default_puf_width(),
            is_locked: false,
            key_bits: default_key_bits(),
            key_hex: None,
            functional: FunctionalModel::Identity,
            registers: default_registers(),
            decoy_states: default_decoys(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocConfig {
    pub name: String,
    #[serde(default)]
    pub topology: BusTopology,
    pub ips: Vec<IpConfig>,
    #[serde(default = "default_n_chip_id_ips")]
    pub n_chip_id_ips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub soc: SocConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ber")]
    pub ber: f64,
    /// Random unlock attempts per locked IP in the reverse-engineering case.
    #[serde(default = "default_attempts")]
    pub attempts: u64,
    #[serde(default = "default_golden_reads")]
    pub golden_reads: usize,
    #[serde(default)]
    pub scm_order: ScmOrder,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Four wrapped IPs on one bus, three of them carrying PUFs.
    pub fn single_bus() -> Self {
        let ip = |id: &str, class: &str, width: usize, puf: bool, functional: FunctionalModel| IpConfig {
            class: Some(class.into()),
            input_width: width,
            has_puf: puf,
            is_locked: true,
            functional,
            ..IpConfig::new(id)
        };
        Self {
            soc: SocConfig {
                name: "single-bus".into(),
                topology: BusTopology::SingleBus,
                ips: vec![
                    ip("aes256", "aes256", 64, true, FunctionalModel::Xor { mask: 0x5a5a_5a5a_5a5a_5a5a }),
                    ip("sha256", "sha256", 32, true, FunctionalModel::Add { k: 0x0123_4567 }),
                    ip("uart", "uart", 8, true, FunctionalModel::Not),
                    ip("gpio", "gpio", 32, false, FunctionalModel::Identity),
                    IpConfig {
                        registers: 16,
                        ..IpConfig::new("sram")
                    },
                ],
                n_chip_id_ips: 3,
            },
            seed: 0,
            ber: DEFAULT_BER,
            attempts: default_attempts(),
            golden_reads: default_golden_reads(),
            scm_order: ScmOrder::PufFirst,
        }
    }

    /// Two subsystems' worth of IPs behind separate buses.
    pub fn multi_bus() -> Self {
        let mut cfg = Self::single_bus();
        cfg.soc.name = "multi-bus".into();
        cfg.soc.topology = BusTopology::MultiBus;
        for (id, class, width, puf) in [("aes256_b", "aes256", 64, true), ("sha256_b", "sha256", 32, true), ("gpio_b", "gpio", 16, true)] {
            cfg.soc.ips.push(IpConfig {
                class: Some(class.into()),
                input_width: width,
                has_puf: puf,
                is_locked: true,
                ..IpConfig::new(id)
            });
        }
        cfg.soc.n_chip_id_ips = 4;
        cfg
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut seen = BTreeSet::new();
        for ip in &self.soc.ips {
            if !seen.insert(&ip.id) {
                return invalid(format!("duplicate IP id {}", ip.id));
            }
            if ip.id.as_str().is_empty() {
                return invalid("empty IP id");
            }
            if ip.has_puf && (ip.puf_width == 0 || ip.puf_width % 16 != 0) {
                return invalid(format!("{}: PUF width {} is not a positive multiple of 16", ip.id, ip.puf_width));
            }
            if ip.is_locked {
                if !(1..=64).contains(&ip.input_width) {
                    return invalid(format!("{}: input width must be 1..=64", ip.id));
                }
                if ip.key_bits == 0 || ip.key_bits % 8 != 0 {
                    return invalid(format!("{}: key_bits must be a positive multiple of 8", ip.id));
                }
                if let Some(h) = &ip.key_hex {
                    let bytes = hex::decode(h).map_err(|e| ConfigError::Invalid(format!("{}: key_hex: {e}", ip.id)))?;
                    if bytes.len() * 8 != ip.key_bits {
                        return invalid(format!("{}: key_hex has {} bits, expected {}", ip.id, bytes.len() * 8, ip.key_bits));
                    }
                }
            }
        }
        if !(0.0..0.5).contains(&self.ber) {
            return invalid("ber must be in [0, 0.5)");
        }
        if self.attempts == 0 {
            return invalid("attempts must be at least 1");
        }
        if self.golden_reads == 0 {
            return invalid("golden_reads must be at least 1");
        }
        Ok(())
    }

    /// OEM unlock vectors, explicit or derived from the master seed.
    pub fn unlock_vectors(&self) -> BTreeMap<IpId, Vec<u8>> {
        self.soc
            .ips
            .iter()
            .filter(|ip| ip.is_locked)
            .map(|ip| {
                let bytes = match &ip.key_hex {
                    Some(h) => hex::decode(h).expect("validated"),
                    None => {
                        let mut b = vec![0u8; ip.key_bits / 8];
                        actor_rng(self.seed, &format!("oem/unlock/{}", ip.id)).fill_bytes(&mut b);
                        b
                    }
                };
                (ip.id.clone(), bytes)
            })
            .collect()
    }

    pub fn enclave_config(&self) -> EnclaveConfig {
        EnclaveConfig {
            n_chip_id_ips: self.soc.n_chip_id_ips,
            golden_reads: self.golden_reads,
            scm_order: self.scm_order,
        }
    }

    /// One die of this design: shared netlist (including the locked FSMs),
    /// die-specific PUF entropy, fresh enclave.
    pub fn build_chip(&self, die_entropy: [u8; 32], enclave_seed: u64) -> Chip {
        let vectors = self.unlock_vectors();
        let wrappers = self
            .soc
            .ips
            .iter()
            .map(|ip| {
                let mut w = SecurityWrapper::new(ip.id.clone(), ip.registers);
                if ip.has_puf {
                    w = w.with_puf(
                        PufInstance::new(ip.id.clone(), ip.puf_width, die_entropy, self.ber).expect("validated config"),
                    );
                }
                if ip.is_locked {
                    let bytes = &vectors[&ip.id];
                    let key = UnlockVector::new(ip.id.clone(), BitVector::from_bytes(bytes, bytes.len() * 8));
                    w = w.with_key_applier(LockedIpModel::new(&key, ip.input_width, ip.functional, ip.decoy_states));
                }
                w
            })
            .collect();
        Chip::new(
            Soc::new(self.soc.name.clone(), self.soc.topology, wrappers),
            Enclave::new(self.enclave_config(), enclave_seed),
        )
    }
}
