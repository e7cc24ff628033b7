use citadel_sim::scenarios::{
    run_honest_lifecycle, run_scenario, run_threat_counterfeit, run_threat_recycling, run_threat_reverse_engineering,
    AmiMode, ScenarioConfig, ScenarioKind, Verdict,
};

fn assert_pass(v: &Verdict) {
    let failing: Vec<_> = v.failing_checks().collect();
    assert!(v.pass, "{} failed: {failing:#?}", v.scenario);
    assert_eq!(v.expected, v.observed);
}

#[test]
fn honest_lifecycle_single_bus() {
    assert_pass(&run_honest_lifecycle(&ScenarioConfig::single_bus()));
}

#[test]
fn honest_lifecycle_multi_bus() {
    assert_pass(&run_honest_lifecycle(&ScenarioConfig::multi_bus()));
}

#[test]
fn honest_lifecycle_unlock_first() {
    let mut cfg = ScenarioConfig::single_bus();
    cfg.scm_order = citadel_sim::enclave::ScmOrder::UnlockFirst;
    assert_pass(&run_honest_lifecycle(&cfg));
}

#[test]
fn counterfeit_is_defended() {
    assert_pass(&run_threat_counterfeit(&ScenarioConfig::single_bus()));
}

#[test]
fn reverse_engineering_is_defended() {
    let cfg = ScenarioConfig::single_bus();
    assert_pass(&run_threat_reverse_engineering(&cfg, 2_000));
}

#[test]
fn recycling_is_defended() {
    assert_pass(&run_threat_recycling(&ScenarioConfig::single_bus()));
}

#[test]
fn no_puf_ips_fails_at_birth_with_evidence() {
    let mut cfg = ScenarioConfig::single_bus();
    for ip in &mut cfg.soc.ips {
        ip.has_puf = false;
    }
    let v = run_honest_lifecycle(&cfg);
    assert!(!v.pass);
    let birth = v.checks.iter().find(|c| c.name == "chip_birth").expect("birth check");
    assert!(birth.observed.contains("PUF"), "{}", birth.observed);
    assert!(!birth.evidence.is_empty());
}

#[test]
fn evidence_indices_resolve() {
    for kind in ScenarioKind::ALL {
        let mut cfg = ScenarioConfig::single_bus();
        cfg.attempts = 200;
        let run = run_scenario(kind, &cfg, &AmiMode::InProcess).unwrap();
        assert!(!run.verdict.evidence.is_empty());
        for i in &run.verdict.evidence {
            assert!(*i < run.transcript.len(), "{kind}: dangling evidence {i}");
        }
    }
}

#[test]
fn seeds_change_transcripts() {
    let mut a = ScenarioConfig::single_bus();
    a.attempts = 10;
    let mut b = a.clone();
    b.seed = 1;
    let ta = run_scenario(ScenarioKind::Honest, &a, &AmiMode::InProcess).unwrap().transcript;
    let tb = run_scenario(ScenarioKind::Honest, &b, &AmiMode::InProcess).unwrap().transcript;
    assert_ne!(ta.to_jsonl(), tb.to_jsonl());
}

#[test]
fn remote_unreachable_is_an_error() {
    let r = run_scenario(ScenarioKind::Honest, &ScenarioConfig::single_bus(), &AmiMode::Remote("tcp://127.0.0.1:1".into()));
    assert!(r.is_err());
}
