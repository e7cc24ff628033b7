//! `citadel-sim` command-line front end.
//!
//! Exit codes: 0 when every verdict passes, 1 when a verdict fails, 2 for
//! usage, configuration and I/O errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use citadel_sim::ami::{server, Ledger};
use citadel_sim::metrics::{self, Calibration, SweepKind};
use citadel_sim::scenarios::{new_ledger, run_scenario, AmiMode, ScenarioConfig, ScenarioKind, Verdict};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "citadel-sim", version, about = "SoC security enclave supply-chain simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sweep {
    Auth,
    Unlock,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, or `all`, and write verdict and transcript files.
    Run {
        scenario: String,
        /// Scenario config JSON; defaults to the built-in single-bus SoC.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed; overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Remote AMI, e.g. tcp://127.0.0.1:7878. In-process when absent.
        #[arg(long)]
        ami: Option<String>,
        /// Verdict file format.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Delay curve as `bits,delay_ps` rows.
    Sweep {
        kind: Sweep,
        /// IP class for unlock sweeps.
        #[arg(long, default_value = "aes256")]
        ip: String,
        #[arg(long, default_value_t = 64)]
        step: u32,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Area overhead per technology and the average, against the reported figure.
    Overhead {
        soc: String,
        /// Restrict to these technologies.
        #[arg(long = "tech")]
        techs: Vec<String>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Serve the AMI ledger over line-delimited JSON.
    AmiServe {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Ledger snapshot: loaded at start if present, rewritten whenever the ledger changes.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Seed for the HSM trust key; must match the scenarios' seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CITADEL_SIM_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            config,
            seed,
            out,
            ami,
            format,
        } => cmd_run(&scenario, config.as_deref(), seed, &out, ami, format),
        Command::Sweep {
            kind,
            ip,
            step,
            out,
            format,
        } => cmd_sweep(kind, &ip, step, out.as_deref(), format),
        Command::Overhead { soc, techs, format } => cmd_overhead(&soc, &techs, format),
        Command::AmiServe {
            port,
            host,
            snapshot,
            seed,
        } => cmd_ami_serve(&host, port, snapshot.as_deref(), seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::from_json(&text).with_context(|| format!("config {}", p.display()))?
        }
        None => ScenarioConfig::single_bus(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(
    scenario: &str,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    ami: Option<String>,
    format: Format,
) -> Result<ExitCode> {
    let kinds = if scenario == "all" {
        ScenarioKind::ALL.to_vec()
    } else {
        match ScenarioKind::from_name(scenario) {
            Some(k) => vec![k],
            None => {
                let names: Vec<_> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
                bail!("unknown scenario {scenario:?}; expected all or one of {}", names.join(", "));
            }
        }
    };
    let cfg = load_config(config, seed)?;
    let mode = match ami {
        Some(addr) => AmiMode::Remote(addr),
        None => AmiMode::InProcess,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut all_pass = true;
    for kind in kinds {
        let run = run_scenario(kind, &cfg, &mode).with_context(|| format!("scenario {kind}"))?;
        let v = &run.verdict;
        let (ext, body) = match format {
            Format::Json => ("json", serde_json::to_string_pretty(v)? + "\n"),
            Format::Csv => ("csv", verdict_csv(v)),
        };
        let verdict_path = out.join(format!("{kind}.verdict.{ext}"));
        fs::write(&verdict_path, body).with_context(|| format!("writing {}", verdict_path.display()))?;
        let t_path = out.join(format!("{kind}.transcript.jsonl"));
        let file = fs::File::create(&t_path).with_context(|| format!("writing {}", t_path.display()))?;
        run.transcript.write_jsonl(std::io::BufWriter::new(file))?;

        println!(
            "{kind}: {} ({} checks, {} events)",
            if v.pass { "PASS" } else { "FAIL" },
            v.checks.len(),
            run.transcript.len()
        );
        for c in v.failing_checks() {
            println!("  {}: expected {}, observed {}, evidence {:?}", c.name, c.expected, c.observed, c.evidence);
        }
        all_pass &= v.pass;
    }
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn verdict_csv(v: &Verdict) -> String {
    let mut out = String::from("scenario,check,expected,observed,pass,evidence\n");
    for c in &v.checks {
        let evidence: Vec<String> = c.evidence.iter().map(usize::to_string).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            v.scenario,
            csv_field(&c.name),
            csv_field(&c.expected),
            csv_field(&c.observed),
            c.pass,
            evidence.join(" ")
        ));
    }
    out
}

fn cmd_sweep(kind: Sweep, ip: &str, step: u32, out: Option<&Path>, format: Format) -> Result<ExitCode> {
    let rows = match kind {
        Sweep::Auth => metrics::sweep(SweepKind::Auth, None, step)?,
        Sweep::Unlock => metrics::sweep(SweepKind::Unlock, Some(ip), step)?,
    };
    let body = match format {
        Format::Csv => metrics::sweep_csv(&rows),
        Format::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|(b, d)| serde_json::json!({ "bits": b, "delay_ps": d }))
                .collect();
            serde_json::to_string_pretty(&v)? + "\n"
        }
    };
    match out {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_overhead(soc: &str, techs: &[String], format: Option<Format>) -> Result<ExitCode> {
    let cal = Calibration::builtin();
    let s = cal.soc(soc)?;
    let selected: Vec<_> = if techs.is_empty() {
        cal.technologies.clone()
    } else {
        techs
            .iter()
            .map(|t| cal.technology(t).cloned().with_context(|| format!("unknown technology {t:?}")))
            .collect::<Result<_>>()?
    };
    let report = metrics::overhead_percentages(&s.baseline_um2, &selected);
    match format {
        Some(Format::Json) => {
            let v = serde_json::json!({
                "soc": s.name,
                "per_technology": report.per_technology,
                "average_pct": report.average_pct,
                "reported_pct": s.reported_area_pct,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Some(Format::Csv) => {
            println!("soc,technology,area_pct");
            for (t, p) in &report.per_technology {
                println!("{},{t},{p:.4}", s.name);
            }
            println!("{},average,{:.4}", s.name, report.average_pct);
        }
        None => {
            println!("{}", s.label);
            for (t, p) in &report.per_technology {
                println!("  {t:<10} {p:6.2}%");
            }
            println!("  {:<10} {:6.2}%  (reported {:.2}%)", "average", report.average_pct, s.reported_area_pct);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_ami_serve(host: &str, port: u16, snapshot: Option<&Path>, seed: u64) -> Result<ExitCode> {
    let ledger = match snapshot {
        Some(p) if p.exists() => {
            Arc::new(Ledger::load(p).with_context(|| format!("loading snapshot {}", p.display()))?)
        }
        _ => Arc::new(new_ledger(seed)),
    };
    let addr = server::spawn(&format!("{host}:{port}"), Arc::clone(&ledger))
        .with_context(|| format!("binding {host}:{port}"))?;
    println!("AMI listening on tcp://{addr}");
    std::io::stdout().flush()?;

    let mut saved = ledger.snapshot();
    if let Some(p) = snapshot {
        ledger.save(p).with_context(|| format!("writing snapshot {}", p.display()))?;
    }
    loop {
        std::thread::sleep(Duration::from_millis(200));
        let Some(p) = snapshot else { continue };
        let now = ledger.snapshot();
        if now != saved {
            if let Err(e) = ledger.save(p) {
                log::warn!("snapshot {}: {e}", p.display());
            }
            saved = now;
        }
    }
}
