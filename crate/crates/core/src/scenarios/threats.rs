//! Adversary case studies: counterfeiting, reverse engineering, recycling.
//!
//! The adversary observes every network byte, replays captured messages
//! and builds clones from the netlist. It cannot tamper with the HSM or
//! physically probe a vault.

use rand::{Rng, RngCore};

use crate::ami::{AmiClient, AmiMessage};
use crate::bits::BitVector;
use crate::enclave::envelope::{open_envelope, seal_asset};
use crate::enclave::vault::{AssetKey, AssetKind};
use crate::enclave::{orchestrate_chip_id, BootOutcome};
use crate::lifecycle::{Actor, LifecycleState::*};
use crate::obfuscation::LockMode;
use crate::transcript::{contains_asset, Channel, Endpoint};

use super::{label, status_label, Ctx, ScenarioConfig, ScenarioKind, ScenarioRun};

/// Index of the last request with `label` sent by the enclave.
fn captured(ctx: &Ctx<'_>, label: &str) -> Option<usize> {
    ctx.t
        .indices_where(|e| e.channel == Channel::AmiNet && e.from == Endpoint::Enclave && e.label == label)
        .last()
        .copied()
}

fn replay(ctx: &mut Ctx<'_>, idx: usize) -> Result<(AmiMessage, usize), String> {
    let line = String::from_utf8(ctx.t.events()[idx].payload.clone()).map_err(|e| e.to_string())?;
    ctx.ami
        .call_raw(&mut ctx.t, Endpoint::Adversary, &line)
        .map_err(|e| e.to_string())
}

pub fn run_threat_counterfeit_with(cfg: &ScenarioConfig, ami: AmiClient) -> ScenarioRun {
    let mut ctx = Ctx::new(ScenarioKind::Counterfeit, cfg, ami);
    counterfeit(&mut ctx);
    ctx.finish("defended")
}

fn counterfeit(ctx: &mut Ctx<'_>) {
    let Some(mut unit) = ctx.born_unit("chip") else {
        return;
    };

    // (a) replay the snooped registration
    match captured(ctx, "register") {
        Some(idx) => match replay(ctx, idx) {
            Ok((reply, at)) => {
                ctx.check("replayed_registration", "register_reject(duplicate)", reply_label(&reply), vec![idx, at]);
            }
            Err(e) => ctx.abort("replayed_registration", e),
        },
        None => ctx.abort("replayed_registration", "no registration captured"),
    }

    // (b) recover the ChipID from everything seen on the network
    let chip_id = unit.chip.enclave.vault.fetch(&AssetKey::chip(AssetKind::ChipId)).map(<[u8]>::to_vec).unwrap_or_default();
    let exposed: Vec<usize> = ctx
        .t
        .indices_where(|e| e.channel == Channel::AmiNet && !chip_id.is_empty() && contains_asset(&e.payload, &chip_id));
    let ami_events = ctx.t.indices_where(|e| e.channel == Channel::AmiNet);
    ctx.check(
        "chip_id_on_network",
        "0 exposures",
        format!("{} exposures", exposed.len()),
        if exposed.is_empty() { ami_events.last().copied().into_iter().collect() } else { exposed },
    );

    // (c) open a session of its own without the HSM trust key
    let mut rng = ctx.rng("adversary");
    let (mut key, mut forged_trust, mut session) = ([0u8; 32], [0u8; 32], [0u8; 16]);
    rng.fill_bytes(&mut key);
    rng.fill_bytes(&mut forged_trust);
    rng.fill_bytes(&mut session);
    let envelope = seal_asset(&key, &forged_trust, rng.gen());
    match ctx.ami.call(&mut ctx.t, Endpoint::Adversary, &AmiMessage::OpenSession { session, envelope }) {
        Ok(reply) => {
            let ev = ctx.last_event();
            ctx.check("forged_session", "error", reply.type_name(), ev);
        }
        Err(e) => ctx.abort("forged_session", e),
    }

    // the genuine chip carries on
    let (status, ev) = ctx.ledger_status(unit.session);
    ctx.check("honest_chip_ledger", status_label(PackagingOem, crate::lifecycle::ChipStatus::Active), status, ev);
    ctx.expect_full_boot(&mut unit, "honest_chip_boot");
}

fn reply_label(reply: &AmiMessage) -> String {
    match reply {
        AmiMessage::RegisterReject { reason } => format!("register_reject({})", label(reason)),
        AmiMessage::AuthResult { accepted, reason } => {
            if *accepted {
                "accepted".into()
            } else {
                format!("denied({})", reason.as_ref().map(label).unwrap_or_default())
            }
        }
        other => other.type_name().to_owned(),
    }
}

pub fn run_threat_reverse_engineering_with(cfg: &ScenarioConfig, attempts: u64, ami: AmiClient) -> ScenarioRun {
    let mut ctx = Ctx::new(ScenarioKind::ReverseEngineering, cfg, ami);
    reverse_engineering(&mut ctx, attempts.max(1));
    ctx.finish("defended")
}

fn reverse_engineering(ctx: &mut Ctx<'_>, attempts: u64) {
    let Some(mut legit) = ctx.born_unit("chip") else {
        return;
    };
    ctx.expect_full_boot(&mut legit, "legit_boot");

    // a clone from the stolen netlist: same locked FSMs, different die, no keys
    let (mut clone, _) = ctx.new_chip("clone");
    let mut rng = ctx.rng("adversary");
    let mut breaks = 0u64;
    let mut guessed = 0usize;
    let mut garbage_ok = 0usize;
    let mut probes = 0usize;
    let mut evidence = vec![];
    for w in &mut clone.soc.wrappers {
        let endpoint = w.endpoint();
        let Some(model) = w.key_applier.as_mut() else {
            continue;
        };
        model.relock();
        for _ in 0..attempts {
            let frame = BitVector::from_bits((0..model.input_width).map(|_| rng.gen::<bool>()));
            match model.apply_frame(&frame) {
                LockMode::Unlocked => breaks += 1,
                LockMode::Transition(n) => guessed = guessed.max(n),
                LockMode::Locked => {}
            }
        }
        let mut differ = 0;
        for _ in 0..1000 {
            let x: u64 = rng.gen();
            if model.step(x) != model.functional.eval(x) {
                differ += 1;
            }
        }
        garbage_ok += usize::from(differ >= 990);
        probes += 1;
        let mut payload = attempts.to_be_bytes().to_vec();
        payload.extend_from_slice(&(differ as u64).to_be_bytes());
        evidence.push(ctx.t.record(Channel::SystemBus, Endpoint::Adversary, endpoint, "adversary_unlock_attempts", payload, false));
    }
    log::info!("longest correct frame prefix guessed by the adversary: {guessed}");
    ctx.check("clone_unlocked", "0 unlocks", format!("{breaks} unlocks"), evidence.clone());
    ctx.check("clone_outputs_garbage", format!("{probes}/{probes} IPs"), format!("{garbage_ok}/{probes} IPs"), evidence);

    // the clone has its own die, hence its own identity
    let clone_seed = ctx.seed("clone/reads");
    let legit_id = legit.chip.enclave.vault.fetch(&AssetKey::chip(AssetKind::ChipId)).map(<[u8]>::to_vec).unwrap_or_default();
    let (n_ips, reads) = (ctx.cfg.soc.n_chip_id_ips, ctx.cfg.golden_reads);
    match orchestrate_chip_id(&mut clone.soc, &mut ctx.t, n_ips, reads, clone_seed) {
        Ok((id, _)) => {
            let ev = ctx.last_event();
            ctx.check("clone_chip_id_differs", true, id.digest.to_vec() != legit_id, ev);
        }
        Err(e) => ctx.abort("clone_chip_id", e),
    }

    // asking the AMI for keys without a session
    let (mut key, mut session) = ([0u8; 32], [0u8; 16]);
    rng.fill_bytes(&mut key);
    rng.fill_bytes(&mut session);
    let mut claim = vec![0u8; 32];
    rng.fill_bytes(&mut claim);
    claim.push(Deployment.code());
    for (name, msg) in [
        ("clone_authentication", AmiMessage::Authenticate { session, envelope: seal_asset(&claim, &key, rng.gen()) }),
        ("clone_provisioning", AmiMessage::Provision { session, envelope: seal_asset(&claim, &key, rng.gen()) }),
    ] {
        match ctx.ami.call(&mut ctx.t, Endpoint::Adversary, &msg) {
            Ok(reply) => {
                let ev = ctx.last_event();
                ctx.check(name, "denied(unknown)", reply_label(&reply), ev);
            }
            Err(e) => ctx.abort(name, e),
        }
    }

    // the clone booted as a deployed part
    clone.enclave.vault.set_lifecycle(Deployment);
    match ctx.boot(&mut clone) {
        Ok(r) => {
            let ev = super::Ctx::boot_evidence(&r);
            ctx.check("clone_boot", label(&BootOutcome::Truncated), label(&r.outcome), ev.clone());
            let unlocked = clone.soc.lock_modes().values().filter(|m| **m == LockMode::Unlocked).count();
            ctx.check("clone_locked_after_boot", 0, unlocked, ev);
        }
        Err(e) => ctx.abort("clone_boot", e),
    }

    // replaying the genuine chip's provisioning request yields only sealed assets
    match captured(ctx, "provision") {
        Some(idx) => match replay(ctx, idx) {
            Ok((AmiMessage::ProvisionResult { assets }, at)) => {
                let opened = assets.iter().filter(|a| open_envelope(&a.envelope, &key).is_ok()).count();
                ctx.check("replayed_provisioning", format!("0/{} opened", assets.len()), format!("{opened}/{} opened", assets.len()), vec![idx, at]);
            }
            Ok((other, at)) => {
                ctx.check("replayed_provisioning", "provision_result", other.type_name(), vec![idx, at]);
            }
            Err(e) => ctx.abort("replayed_provisioning", e),
        },
        None => ctx.abort("replayed_provisioning", "no provisioning captured"),
    }
}

pub fn run_threat_recycling_with(cfg: &ScenarioConfig, ami: AmiClient) -> ScenarioRun {
    let mut ctx = Ctx::new(ScenarioKind::Recycling, cfg, ami);
    recycling(&mut ctx);
    refurbishment(&mut ctx);
    ctx.finish("defended")
}

fn recycling(ctx: &mut Ctx<'_>) {
    let Some(mut unit) = ctx.born_unit("chip") else {
        return;
    };
    ctx.expect_full_boot(&mut unit, "packaging_boot");
    for target in [Deployment, Recall, EndOfLife] {
        if !ctx.expect_transition(&mut unit, target) {
            return;
        }
    }

    // re-marked and re-powered
    match ctx.boot(&mut unit.chip) {
        Ok(r) => {
            let ev = Ctx::boot_evidence(&r);
            ctx.check("recycled_boot", label(&BootOutcome::Truncated), label(&r.outcome), ev.clone());
            ctx.check("recycled_boot_scm", "none", r.scm_events.map_or("none".into(), |(a, b)| format!("{a}..{b}")), ev);
        }
        Err(e) => ctx.abort("recycled_boot", e),
    }

    let mut key = [0u8; 32];
    ctx.rng("adversary").fill_bytes(&mut key);
    let d = ctx.transition(&mut unit, Deployment, &key, Actor::Adversary, "revive");
    let ev = ctx.last_event();
    ctx.check("revive_transition", "denied(no_such_edge)", label(&d), ev);

    match captured(ctx, "register") {
        Some(idx) => match replay(ctx, idx) {
            Ok((reply, at)) => {
                ctx.check("replayed_registration", "register_reject(duplicate)", reply_label(&reply), vec![idx, at]);
            }
            Err(e) => ctx.abort("replayed_registration", e),
        },
        None => ctx.abort("replayed_registration", "no registration captured"),
    }

    // the same die resubmitted to a birth ceremony as a fresh part
    let (mut reborn, _) = ctx.new_chip("chip");
    let (_, keys) = ctx.new_chip("rebirth");
    let mut hsm = ctx.hsm("rebirth", &keys);
    let outcome = match ctx.birth(&mut reborn, &mut hsm) {
        Ok(_) => "registered".to_owned(),
        Err(crate::hsm::HsmError::RegistrationRejected(r)) => format!("registration_rejected({})", label(&r)),
        Err(e) => format!("error: {e}"),
    };
    let ev = ctx.last_event();
    ctx.check("rebirth", "registration_rejected(duplicate)", outcome, ev);
    let state = reborn.lifecycle().map(|s| label(&s)).unwrap_or_default();
    ctx.check("rebirth_rolled_back", "fabrication_test", state, ctx.last_event());

    let (status, ev) = ctx.ledger_status(unit.session);
    ctx.check("ledger_after_recycling", "end_of_life/decommissioned", status, ev);
}

/// The authorised channel: recall back into packaging.
fn refurbishment(ctx: &mut Ctx<'_>) {
    let Some(mut unit) = ctx.born_unit("refurb") else {
        return;
    };
    ctx.expect_full_boot(&mut unit, "refurb_packaging_boot");
    for target in [Deployment, Recall, PackagingOem] {
        if !ctx.expect_transition(&mut unit, target) {
            return;
        }
    }
    ctx.expect_full_boot(&mut unit, "refurb_reenrolled_boot");
    let now = crate::enclave::chip_ref_of(&unit.chip).unwrap_or_default();
    ctx.check("refurb_keeps_chip_id", &unit.chip_ref, now, ctx.last_event());
}
