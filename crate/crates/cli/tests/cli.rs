use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_citadel-sim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn citadel-sim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn verdict(dir: &Path, scenario: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(format!("{scenario}.verdict.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn run_honest_writes_passing_verdict_and_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "honest", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(verdict(dir.path(), "honest")["pass"], true);
    let t = std::fs::read_to_string(dir.path().join("honest.transcript.jsonl")).unwrap();
    assert!(t.lines().count() > 100);
    assert!(t.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}

#[test]
fn run_recycling_shows_truncated_boot() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "threat-recycling", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = verdict(dir.path(), "threat-recycling");
    assert!(v["checks"].as_array().unwrap().iter().any(|c| c["observed"] == "truncated"));
}

#[test]
fn run_all_from_shipped_config_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("multi-bus.json");
    let o = run(&[
        "run", "all", "--config", cfg.to_str().unwrap(), "--seed", "3", "--format", "csv", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    for s in ["honest", "threat-counterfeit", "threat-reverse-engineering", "threat-recycling"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("{s}.verdict.csv"))).unwrap();
        assert!(csv.starts_with("scenario,check,expected,observed,pass,evidence\n"));
        assert!(!csv.contains(",false,"), "{s}: {csv}");
        assert!(dir.path().join(format!("{s}.transcript.jsonl")).exists());
    }
}

#[test]
fn same_seed_same_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(code(&run(&["run", "threat-counterfeit", "--seed", "9", "--out", d.path().to_str().unwrap()])), 0);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("threat-counterfeit.transcript.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn failing_verdict_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("nopuf.json");
    std::fs::write(&cfg, r#"{"soc":{"name":"nopuf","ips":[{"id":"a"},{"id":"b","is_locked":true}]}}"#).unwrap();
    let o = run(&["run", "honest", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("chip_birth"), "{}", stdout(&o));
    assert_eq!(verdict(dir.path(), "honest")["pass"], false);
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["run", "nonsense", "--out", out])), 2);
    assert_eq!(code(&run(&["run", "honest", "--config", "/does/not/exist.json", "--out", out])), 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"soc":{"name":"x","ips":[]},"ber":0.7}"#).unwrap();
    assert_eq!(code(&run(&["run", "honest", "--config", bad.to_str().unwrap(), "--out", out])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["run", "honest", "--ami", "tcp://127.0.0.1:1", "--out", out])), 2);
}

#[test]
fn sweeps_emit_calibrated_rows() {
    let auth = stdout(&run(&["sweep", "auth"]));
    assert!(auth.starts_with("bits,delay_ps\n"));
    assert!(auth.lines().any(|l| l == "256,680"));
    let unlock = stdout(&run(&["sweep", "unlock", "--ip", "aes256"]));
    assert!(unlock.lines().any(|l| l == "512,480"));
    let json: serde_json::Value = serde_json::from_str(&stdout(&run(&["sweep", "unlock", "--ip", "uart", "--format", "json"]))).unwrap();
    assert!(json.as_array().unwrap().iter().any(|r| r["bits"] == 2048 && r["delay_ps"] == 4080.0));
    assert_eq!(code(&run(&["sweep", "unlock", "--ip", "dsp"])), 2);
}

#[test]
fn sweep_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gpio.csv");
    assert_eq!(code(&run(&["sweep", "unlock", "--ip", "gpio", "--step", "1024", "--out", p.to_str().unwrap()])), 0);
    let csv = std::fs::read_to_string(p).unwrap();
    assert!(csv.lines().any(|l| l == "1024,1500"));
}

#[test]
fn overhead_reports_average_against_published() {
    let o = run(&["overhead", "single"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("17.36%"), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&run(&["overhead", "Multi-SoC", "--format", "json"]))).unwrap();
    assert!((v["average_pct"].as_f64().unwrap() - 14.31).abs() < 0.01);
    assert_eq!(v["reported_pct"], 14.0);
    assert_eq!(code(&run(&["overhead", "quantum"])), 2);
    assert_eq!(code(&run(&["overhead", "single", "--tech", "tsmc3"])), 2);
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(extra: &[&str]) -> (Server, String) {
    let mut child = bin()
        .args(["ami-serve", "--port", "0"])
        .args(extra)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit(' ').next().unwrap().to_owned();
    assert!(addr.starts_with("tcp://"), "{line}");
    (Server(child), addr)
}

#[test]
fn remote_ami_gives_same_verdict_as_in_process() {
    let (_server, addr) = serve(&["--seed", "0"]);
    let (local, remote) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&run(&["run", "honest", "--out", local.path().to_str().unwrap()])), 0);
    let o = run(&["run", "honest", "--ami", &addr, "--out", remote.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(verdict(local.path(), "honest"), verdict(remote.path(), "honest"));
}

#[test]
fn ami_serve_persists_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("ledger.json");
    {
        let (_server, addr) = serve(&["--snapshot", snap.to_str().unwrap()]);
        let out = dir.path().join("out");
        assert_eq!(code(&run(&["run", "threat-counterfeit", "--ami", &addr, "--out", out.to_str().unwrap()])), 0);
        std::thread::sleep(std::time::Duration::from_millis(600));
    }
    let state: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&snap).unwrap()).unwrap();
    assert!(!state["records"].as_object().unwrap().is_empty());

    // reloaded ledger already knows the chips, so a rerun is rejected as a duplicate birth
    let (_server, addr) = serve(&["--snapshot", snap.to_str().unwrap()]);
    let out = dir.path().join("again");
    assert_eq!(code(&run(&["run", "threat-counterfeit", "--ami", &addr, "--out", out.to_str().unwrap()])), 1);
}

#[test]
fn ami_serve_bind_failure_exits_two() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    assert_eq!(code(&run(&["ami-serve", "--port", &port])), 2);
}
