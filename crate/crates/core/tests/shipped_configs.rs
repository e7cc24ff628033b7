//! The example configs under `configs/` must parse and match the presets.
//! Set `CITADEL_SIM_BLESS=1` to rewrite them.

use std::path::PathBuf;

use citadel_sim::scenarios::ScenarioConfig;

fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn check(name: &str, preset: ScenarioConfig) {
    let p = path(name);
    if std::env::var_os("CITADEL_SIM_BLESS").is_some() {
        std::fs::write(&p, serde_json::to_string_pretty(&preset).unwrap() + "\n").unwrap();
    }
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(ScenarioConfig::from_json(&text).unwrap(), preset, "{name} drifted from its preset");
}

#[test]
fn single_bus_matches_preset() {
    check("single-bus.json", ScenarioConfig::single_bus());
}

#[test]
fn multi_bus_matches_preset() {
    check("multi-bus.json", ScenarioConfig::multi_bus());
}

#[test]
fn minimal_config_fills_defaults() {
    let cfg = ScenarioConfig::from_json(
        r#"{"soc":{"name":"tiny","ips":[
            {"id":"a","has_puf":true},{"id":"b","has_puf":true},{"id":"c","has_puf":true,"is_locked":true}]}}"#,
    )
    .unwrap();
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.attempts, 10_000);
    assert_eq!(cfg.soc.ips[2].key_bits, 512);
}

#[test]
fn unknown_fields_are_rejected() {
    assert!(ScenarioConfig::from_json(r#"{"soc":{"name":"x","ips":[]},"sed":1}"#).is_err());
}
