//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails for a reason other than the recorded
//! deviation in the published UART delay series.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use citadel_sim::ami::server;
use citadel_sim::bits::BitVector;
use citadel_sim::lifecycle::{
    boot_mode, request_transition, Actor, BootMode, ChipStatus, LedgerView, LifecycleState, TransitionDecision,
    TransitionTable,
};
use citadel_sim::metrics::{auth_delay, overhead_percentages, puf_overhead, unlock_delay, Calibration};
use citadel_sim::puf::{decode_correct, encode_parity, PufError, PufResponse};
use citadel_sim::scenarios::{
    confidentiality_violations, new_ledger, run_scenario, AmiMode, ScenarioConfig, ScenarioKind, ScenarioRun,
};
use citadel_sim::transcript::{Channel, Endpoint};
use citadel_sim::IpId;
use common::{codebook, oracle_decode, place, split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use LifecycleState::*;

const OVERHEAD_TOL_PP: f64 = 1.0;
const OVERHEAD_BUDGET: Duration = Duration::from_secs(1);
const SUITE_BUDGET: Duration = Duration::from_secs(30);
const RE_ATTEMPTS: u64 = 10_000;
const LIFECYCLE_FUZZ: usize = 10_000;
const PUF_OVERHEAD_LISTS: usize = 1000;

/// Published area overheads, percent.
const REPORTED_AREA: [(&str, f64); 3] = [("single", 17.50), ("multi", 14.00), ("mit-cep", 10.50)];
/// Published delay series, (bits, ps).
const AUTH_POINTS: [(u32, f64); 5] = [(128, 320.0), (256, 680.0), (512, 1270.0), (1024, 2540.0), (2048, 4870.0)];
const UNLOCK_POINTS: [(&str, [f64; 5]); 4] = [
    ("aes256", [120.0, 240.0, 480.0, 960.0, 1920.0]),
    ("uart", [260.0, 520.0, 1020.0, 2040.0, 4080.0]),
    ("sha256", [110.0, 220.0, 440.0, 880.0, 1760.0]),
    ("gpio", [250.0, 500.0, 1000.0, 1500.0, 2500.0]),
];
const BITS: [u32; 5] = [128, 256, 512, 1024, 2048];
const DOUBLING_CLASSES: [&str; 3] = ["aes256", "uart", "sha256"];
/// The only doubling the published UART series breaks.
const KNOWN_DOUBLING_BREAKS: [&str; 1] = ["uart 256->512: 1020 != 2 x 520"];

struct Outcome {
    pass: bool,
    detail: String,
    /// Failure that is a property of the published data, not the code.
    known_deviation: bool,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
            known_deviation: false,
        }
    }
}

fn overhead() -> Outcome {
    let start = Instant::now();
    let cal = Calibration::builtin();
    let mut parts = vec![];
    let mut pass = true;
    for (soc, reported) in REPORTED_AREA {
        let s = cal.soc(soc).expect("builtin soc");
        let r = overhead_percentages(&s.baseline_um2, &cal.technologies);
        let ok = (r.average_pct - reported).abs() <= OVERHEAD_TOL_PP;
        pass &= ok;
        parts.push(format!("{soc} {:.2}% vs {reported:.2}%", r.average_pct));
    }
    let took = start.elapsed();
    pass &= took < OVERHEAD_BUDGET;
    Outcome::new(pass, format!("{} (tol {OVERHEAD_TOL_PP} pp), {took:?}", parts.join(", ")))
}

fn puf_gates() -> Outcome {
    let single = puf_overhead(&[256]);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let bad = (0..PUF_OVERHEAD_LISTS)
        .filter(|_| {
            let list: Vec<u64> = (0..rng.gen_range(0..16)).map(|_| rng.gen_range(0..=4096)).collect();
            puf_overhead(&list) != 6 * list.iter().sum::<u64>()
        })
        .count();
    Outcome::new(
        single == 1536 && bad == 0,
        format!("[256] -> {single} gates, {bad}/{PUF_OVERHEAD_LISTS} random lists off 6 x sum"),
    )
}

fn delays() -> Outcome {
    let auth_off = AUTH_POINTS.iter().filter(|&&(b, d)| auth_delay(b).ok() != Some(d)).count();
    let unlock_off = UNLOCK_POINTS
        .iter()
        .flat_map(|(class, ds)| BITS.iter().zip(ds).map(move |(&b, &d)| (class, b, d)))
        .filter(|&(class, b, d)| unlock_delay(class, b).ok() != Some(d))
        .count();
    let mut breaks = vec![];
    for class in DOUBLING_CLASSES {
        for w in BITS.windows(2) {
            let (lo, hi) = (unlock_delay(class, w[0]).unwrap(), unlock_delay(class, w[1]).unwrap());
            if hi != 2.0 * lo {
                breaks.push(format!("{class} {}->{}: {hi} != 2 x {lo}", w[0], w[1]));
            }
        }
    }
    let points_ok = auth_off == 0 && unlock_off == 0;
    let detail = format!(
        "auth 5 points ({auth_off} off), unlock 20 points ({unlock_off} off), doubling breaks: [{}]",
        breaks.join("; ")
    );
    let mut o = Outcome::new(points_ok && breaks.is_empty(), detail);
    o.known_deviation = points_ok && breaks == KNOWN_DOUBLING_BREAKS;
    if o.known_deviation {
        o.detail.push_str("; the published UART series itself is not proportional at 256->512");
    }
    o
}

fn run_suite(cfg: &ScenarioConfig) -> Vec<ScenarioRun> {
    ScenarioKind::ALL
        .iter()
        .map(|&k| run_scenario(k, cfg, &AmiMode::InProcess).expect("in-process AMI"))
        .collect()
}

fn scenarios(runs: &[ScenarioRun], took: Duration) -> Outcome {
    let mut parts = vec![];
    let mut pass = took < SUITE_BUDGET;
    for r in runs {
        let v = &r.verdict;
        pass &= v.pass;
        if v.pass {
            parts.push(format!("{} ok", v.scenario));
        } else {
            let bad: Vec<String> = v.failing_checks().map(|c| format!("{} @ {:?}", c.name, c.evidence)).collect();
            parts.push(format!("{} FAILED [{}]", v.scenario, bad.join(", ")));
        }
    }
    Outcome::new(pass, format!("{}, {took:.2?} (budget {SUITE_BUDGET:?})", parts.join(", ")))
}

fn confidentiality(shipped: &[(&str, Vec<ScenarioRun>, Vec<IpId>)]) -> Outcome {
    let mut total = 0;
    let mut assets = 0;
    let mut scanned = 0;
    for (_, runs, ips) in shipped {
        for r in runs {
            total += confidentiality_violations(&r.transcript, &r.assets, ips).len();
            assets += r.assets.len();
            scanned += r.transcript.len();
        }
    }
    // the scanner must notice a planted leak
    let (_, runs, ips) = &shipped[0];
    let mut planted = runs[0].transcript.clone();
    let secret = runs[0].assets.iter().find(|a| a.len() >= 16).expect("run has assets").clone();
    planted.record(Channel::AmiNet, Endpoint::Enclave, Endpoint::Ami, "planted", secret, false);
    let caught = !confidentiality_violations(&planted, &runs[0].assets, ips).is_empty();
    Outcome::new(
        total == 0 && caught && assets > 0,
        format!("{total} violations over {scanned} events and {assets} assets; planted leak caught: {caught}"),
    )
}

fn ecc() -> Outcome {
    let book = codebook();
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let bytes: [u8; 32] = rng.gen();
    let expected = PufResponse {
        ip_id: IpId::from("ip"),
        bits: BitVector::from_bytes(&bytes, 256),
    };
    let parity = encode_parity(&expected);
    let mut cases = 0;
    let mut agree = 0;
    for seg in 0..16 {
        let data = expected.bits.read_uint(seg * 16, 16) as u16;
        let p = parity.read_uint(seg * 6, 6) as u8;
        let cw = place(data, p);
        let mut flips: Vec<u32> = (0..22).map(|i| 1 << i).collect();
        flips.extend((0..22).flat_map(|i| (i + 1..22).map(move |j| (1u32 << i) | (1 << j))));
        for f in flips {
            let received = cw ^ f;
            let (d, q) = split(received);
            let mut noisy = expected.clone();
            noisy.bits.write_uint(seg * 16, 16, d as u64);
            let mut np = parity.clone();
            np.write_uint(seg * 6, 6, q as u64);
            // other segments are clean and must come back untouched
            let ours = match decode_correct(&noisy, &np) {
                Ok(r) => {
                    let mut rest = r.bits.clone();
                    rest.write_uint(seg * 16, 16, data as u64);
                    (rest == expected.bits).then(|| Some(r.bits.read_uint(seg * 16, 16) as u16))
                }
                Err(PufError::Uncorrectable { segment, .. }) if segment == seg => Some(None),
                Err(_) => None,
            };
            cases += 1;
            agree += (ours == Some(oracle_decode(&book, received))) as usize;
        }
    }
    Outcome::new(
        agree == cases && cases == 16 * (22 + 231),
        format!("{agree}/{cases} agree (16 segments x 22 single + 231 double flips)"),
    )
}

/// Independent statement of the edge set.
fn oracle_edge(from: LifecycleState, to: LifecycleState) -> Option<Actor> {
    match (from, to) {
        (FabricationTest, PackagingOem) => Some(Actor::Hsm),
        (PackagingOem, Deployment) | (Deployment, Recall) | (Recall, PackagingOem) | (Recall, EndOfLife) => {
            Some(Actor::Oem)
        }
        _ => None,
    }
}

fn lifecycle() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let table = TransitionTable::generate(&mut rng);
    let all_keys: Vec<[u8; 32]> = table.entries().iter().map(|e| e.validation_key).collect();
    let (mut wrong_accept, mut wrong_deny, mut accepted, mut eol_escapes) = (0, 0, 0, 0);
    for _ in 0..LIFECYCLE_FUZZ {
        let from = LifecycleState::ALL[rng.gen_range(0..5)];
        let to = LifecycleState::ALL[rng.gen_range(0..5)];
        let actor = Actor::ALL[rng.gen_range(0..4)];
        let key: [u8; 32] = match rng.gen_range(0..3) {
            0 => table.key(from, to).unwrap_or_else(|| rng.gen()),
            1 => all_keys[rng.gen_range(0..all_keys.len())],
            _ => rng.gen(),
        };
        let d = request_transition(&table, from, to, &key, actor);
        let entitled = oracle_edge(from, to) == Some(actor) && table.key(from, to) == Some(key);
        match (d == TransitionDecision::Accepted, entitled) {
            (true, false) => wrong_accept += 1,
            (false, true) => wrong_deny += 1,
            (true, true) => accepted += 1,
            _ => {}
        }
        if from == EndOfLife && d.is_accepted() {
            eol_escapes += 1;
        }
    }
    let mut full_when_decommissioned = 0;
    for stored in LifecycleState::ALL {
        for lc in LifecycleState::ALL {
            let view = LedgerView {
                lifecycle: lc,
                status: ChipStatus::Decommissioned,
            };
            full_when_decommissioned += (boot_mode(stored, Some(view)) == BootMode::Full) as usize;
        }
        let eol_full = boot_mode(EndOfLife, None) == BootMode::Full;
        full_when_decommissioned += eol_full as usize;
    }
    Outcome::new(
        wrong_accept + wrong_deny + eol_escapes + full_when_decommissioned == 0 && accepted > 0,
        format!(
            "{LIFECYCLE_FUZZ} tuples: {accepted} accepted, {wrong_accept} wrongly accepted, {wrong_deny} wrongly denied, \
             {eol_escapes} exits from end_of_life, {full_when_decommissioned} full boots when decommissioned"
        ),
    )
}

fn determinism(first: &[ScenarioRun], cfg: &ScenarioConfig) -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let write = |tag: &str, runs: &[ScenarioRun]| -> Vec<Vec<u8>> {
        runs.iter()
            .map(|r| {
                let path = dir.path().join(format!("{tag}-{}.transcript.jsonl", r.verdict.scenario));
                r.transcript.write_jsonl(std::fs::File::create(&path).unwrap()).unwrap();
                std::fs::read(&path).unwrap()
            })
            .collect()
    };
    let second = run_suite(cfg);
    let (a, b) = (write("a", first), write("b", &second));
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    let bytes: usize = a.iter().map(Vec::len).sum();
    Outcome::new(same == a.len() && a.len() == 4, format!("{same}/{} transcript files identical ({bytes} bytes)", a.len()))
}

fn networked(cfg: &ScenarioConfig) -> Outcome {
    let local = run_scenario(ScenarioKind::Honest, cfg, &AmiMode::InProcess).expect("in-process");
    let addr = match server::spawn("127.0.0.1:0", Arc::new(new_ledger(cfg.seed))) {
        Ok(a) => a,
        Err(e) => return Outcome::new(false, format!("could not bind: {e}")),
    };
    let remote = match run_scenario(ScenarioKind::Honest, cfg, &AmiMode::Remote(format!("tcp://{addr}"))) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("remote run failed: {e}")),
    };
    let (a, b) = (
        serde_json::to_string(&local.verdict).unwrap(),
        serde_json::to_string(&remote.verdict).unwrap(),
    );
    Outcome::new(
        a == b && local.verdict.pass,
        format!("verdict JSON {} ({} bytes), via {addr}", if a == b { "identical" } else { "differs" }, a.len()),
    )
}

fn main() -> ExitCode {
    let mut cfg = ScenarioConfig::single_bus();
    cfg.seed = 0;
    cfg.attempts = RE_ATTEMPTS;

    let start = Instant::now();
    let runs = run_suite(&cfg);
    let took = start.elapsed();
    let multi = run_suite(&ScenarioConfig::multi_bus());
    let ids = |c: &ScenarioConfig| c.soc.ips.iter().map(|i| i.id.clone()).collect::<Vec<_>>();
    let (single_ips, multi_ips) = (ids(&cfg), ids(&ScenarioConfig::multi_bus()));

    let results: Vec<(u8, &str, Outcome)> = vec![
        (1, "overhead reproduction", overhead()),
        (2, "PUF gate count", puf_gates()),
        (3, "delay curves", delays()),
        (4, "threat scenario suite", scenarios(&runs, took)),
        (5, "confidentiality", {
            let shipped = [("single-bus", runs.clone(), single_ips), ("multi-bus", multi, multi_ips)];
            confidentiality(&shipped)
        }),
        (6, "ECC oracle equivalence", ecc()),
        (7, "lifecycle fuzz", lifecycle()),
        (8, "determinism", determinism(&runs, &cfg)),
        (9, "networked AMI equivalence", networked(&cfg)),
    ];

    let mut unexpected = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && o.known_deviation { " [known deviation]" } else { "" };
        println!("criterion {n} {name}: {tag}{note}: {}", o.detail);
        if !o.pass && !o.known_deviation {
            unexpected += 1;
        }
    }
    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("acceptance: {passed}/{} pass, {unexpected} unexpected failures", results.len());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
