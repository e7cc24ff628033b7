//! Area overhead and security-operation delay analytics.
//!
//! Synthesis results enter only as calibration constants, shipped in
//! `data/calibration.json`. Delays are looked up in the calibration tables
//! and linearly interpolated between points.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// NAND-2 equivalents per MeLPUF bit.
pub const GATES_PER_PUF_BIT: u64 = 6;

const CALIBRATION_JSON: &str = include_str!("../data/calibration.json");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("unknown IP class {0:?}")]
    UnknownIpClass(String),
    #[error("{bits} bits outside calibrated range {min}..={max}")]
    OutOfRange { bits: u32, min: u32, max: u32 },
    #[error("unknown SoC {0:?}")]
    UnknownSoc(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologyProfile {
    pub name: String,
    pub label: String,
    pub citadel_area_um2: f64,
    pub citadel_dyn_power_mw: f64,
    pub citadel_leak_power_mw: f64,
    /// Area of one NAND-2 equivalent. Not published; a nominal figure.
    pub gate_area_um2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocBaseline {
    pub name: String,
    pub label: String,
    pub baseline_um2: BTreeMap<String, f64>,
    pub with_citadel_um2: BTreeMap<String, f64>,
    pub reported_area_pct: f64,
    pub reported_power_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrapperInstance {
    pub ip_class: String,
    pub baseline_um2: f64,
    pub baseline_kgates: f64,
    pub wrapped_um2: f64,
    pub wrapped_kgates: f64,
    pub area_pct: f64,
    pub power_pct: f64,
}

impl WrapperInstance {
    pub fn wrapper_area_um2(&self) -> f64 {
        self.wrapped_um2 - self.baseline_um2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrapperTable {
    pub technology: String,
    pub instances: Vec<WrapperInstance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameEstimator {
    pub input_width: u32,
    pub frame_ps: f64,
}

/// (bits, picoseconds) points, bits strictly increasing.
pub type Curve = Vec<(u32, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayCalibration {
    pub auth_delay: Curve,
    pub unlock_delay: BTreeMap<String, Curve>,
    pub frame_estimator: BTreeMap<String, FrameEstimator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub technologies: Vec<TechnologyProfile>,
    pub socs: Vec<SocBaseline>,
    pub wrappers: WrapperTable,
    #[serde(flatten)]
    pub delays: DelayCalibration,
}

impl Calibration {
    /// The shipped calibration set.
    pub fn builtin() -> &'static Calibration {
        static CAL: OnceLock<Calibration> = OnceLock::new();
        CAL.get_or_init(|| {
            let cal: Calibration = serde_json::from_str(CALIBRATION_JSON).expect("shipped calibration parses");
            cal.validate().expect("shipped calibration is well-formed");
            cal
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        for t in &self.technologies {
            if !(t.citadel_area_um2 > 0.0 && t.citadel_dyn_power_mw > 0.0 && t.citadel_leak_power_mw > 0.0) {
                return Err(format!("technology {} has non-positive values", t.name));
            }
        }
        let curves = std::iter::once(("auth", &self.delays.auth_delay))
            .chain(self.delays.unlock_delay.iter().map(|(k, v)| (k.as_str(), v)));
        for (name, c) in curves {
            if c.is_empty() || c.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(format!("curve {name} bits not strictly increasing"));
            }
        }
        Ok(())
    }

    pub fn technology(&self, name: &str) -> Option<&TechnologyProfile> {
        self.technologies.iter().find(|t| t.name == name)
    }

    pub fn soc(&self, name: &str) -> Result<&SocBaseline, MetricsError> {
        let key = normalize(name);
        self.socs
            .iter()
            .find(|s| normalize(&s.name) == key || normalize(&s.label) == key)
            .ok_or_else(|| MetricsError::UnknownSoc(name.to_owned()))
    }

    pub fn unlock_curve(&self, ip_class: &str) -> Result<&Curve, MetricsError> {
        self.delays
            .unlock_delay
            .get(&normalize(ip_class))
            .ok_or_else(|| MetricsError::UnknownIpClass(ip_class.to_owned()))
    }

    pub fn ip_classes(&self) -> impl Iterator<Item = &str> {
        self.delays.unlock_delay.keys().map(String::as_str)
    }
}

/// "AES-256" and "aes_256" both name "aes256".
pub fn normalize(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

pub fn puf_overhead(chip_id_bits_per_ip: &[u64]) -> u64 {
    chip_id_bits_per_ip.iter().map(|b| b * GATES_PER_PUF_BIT).sum()
}

pub fn total_overhead(tech: &TechnologyProfile, wrapper_areas_um2: &[f64], puf_gates: u64, gate_area_um2: f64) -> f64 {
    tech.citadel_area_um2 + wrapper_areas_um2.iter().sum::<f64>() + puf_gates as f64 * gate_area_um2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    /// (technology, area overhead %).
    pub per_technology: Vec<(String, f64)>,
    pub average_pct: f64,
}

/// Mean over technologies of enclave area / baseline area, in percent.
/// Technologies without a baseline are skipped.
pub fn overhead_percentages(baselines: &BTreeMap<String, f64>, techs: &[TechnologyProfile]) -> OverheadReport {
    let per_technology: Vec<(String, f64)> = techs
        .iter()
        .filter_map(|t| baselines.get(&t.name).map(|b| (t.name.clone(), t.citadel_area_um2 / b * 100.0)))
        .collect();
    let average_pct = if per_technology.is_empty() {
        0.0
    } else {
        per_technology.iter().map(|(_, p)| p).sum::<f64>() / per_technology.len() as f64
    };
    OverheadReport {
        per_technology,
        average_pct,
    }
}

/// Exact at calibration points, linear in bits between them.
pub fn interpolate(curve: &[(u32, f64)], bits: u32) -> Result<f64, MetricsError> {
    let (min, max) = (curve[0].0, curve[curve.len() - 1].0);
    if bits < min || bits > max {
        return Err(MetricsError::OutOfRange { bits, min, max });
    }
    let i = curve.partition_point(|&(b, _)| b < bits);
    let (b1, d1) = curve[i];
    if b1 == bits {
        return Ok(d1);
    }
    let (b0, d0) = curve[i - 1];
    Ok(d0 + (d1 - d0) * f64::from(bits - b0) / f64::from(b1 - b0))
}

pub fn auth_delay(chip_id_bits: u32) -> Result<f64, MetricsError> {
    interpolate(&Calibration::builtin().delays.auth_delay, chip_id_bits)
}

pub fn unlock_delay(ip_class: &str, key_bits: u32) -> Result<f64, MetricsError> {
    interpolate(Calibration::builtin().unlock_curve(ip_class)?, key_bits)
}

/// Secondary estimator: one fixed delay per applied key frame,
/// ceil(bits / input_width) frames. Exact for AES-256 and SHA-256; UART and
/// GPIO deviate from strict proportionality in places.
pub fn estimate_unlock_delay(ip_class: &str, key_bits: u32) -> Result<f64, MetricsError> {
    let est = Calibration::builtin()
        .delays
        .frame_estimator
        .get(&normalize(ip_class))
        .ok_or_else(|| MetricsError::UnknownIpClass(ip_class.to_owned()))?;
    Ok(f64::from(key_bits.div_ceil(est.input_width)) * est.frame_ps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Auth,
    Unlock,
}

/// Delay every `step` bits across the calibrated range.
pub fn sweep(kind: SweepKind, ip_class: Option<&str>, step: u32) -> Result<Vec<(u32, f64)>, MetricsError> {
    let cal = Calibration::builtin();
    let curve = match kind {
        SweepKind::Auth => &cal.delays.auth_delay,
        SweepKind::Unlock => cal.unlock_curve(ip_class.unwrap_or("aes256"))?,
    };
    let (min, max) = (curve[0].0, curve[curve.len() - 1].0);
    let step = step.max(1);
    let mut bits: Vec<u32> = (min..=max).step_by(step as usize).collect();
    bits.extend(curve.iter().map(|p| p.0));
    bits.sort_unstable();
    bits.dedup();
    bits.into_iter().map(|b| interpolate(curve, b).map(|d| (b, d))).collect()
}

pub fn sweep_csv(rows: &[(u32, f64)]) -> String {
    let mut out = String::from("bits,delay_ps\n");
    for (b, d) in rows {
        out.push_str(&format!("{b},{d}\n"));
    }
    out
}
