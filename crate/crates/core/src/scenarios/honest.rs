//! The honest supply chain: birth through end-of-life.

use crate::ami::AmiClient;
use crate::enclave::vault::AssetKind;
use crate::enclave::BootOutcome;
use crate::lifecycle::LifecycleState::*;
use crate::transcript::{Channel, Endpoint};

use super::{label, Ctx, ScenarioConfig, ScenarioKind, ScenarioRun};

pub fn run_honest_lifecycle_with(cfg: &ScenarioConfig, ami: AmiClient) -> ScenarioRun {
    let mut ctx = Ctx::new(ScenarioKind::Honest, cfg, ami);
    walk(&mut ctx);
    ctx.finish("lifecycle_complete")
}

fn walk(ctx: &mut Ctx<'_>) {
    let Some(mut unit) = ctx.born_unit("chip") else {
        return;
    };
    let (status, ev) = ctx.ledger_status(unit.session);
    ctx.check("ledger_after_birth", "packaging_oem/active", status, ev);

    if ctx.expect_full_boot(&mut unit, "packaging_boot").is_none() {
        return;
    }
    ctx.expect_transition(&mut unit, Deployment);
    if ctx.expect_full_boot(&mut unit, "deployment_boot").is_none() {
        return;
    }

    // the HOST now drives the unlocked IPs
    let mut mismatches = 0;
    let mut probes = 0;
    for w in &unit.chip.soc.wrappers {
        if let Some(k) = &w.key_applier {
            for x in [0u64, 1, 0xdead_beef, u64::MAX] {
                probes += 1;
                if k.step(x) != k.functional.eval(x) {
                    mismatches += 1;
                }
            }
        }
    }
    let host_io = unit.chip.soc.wrappers.first_mut().map(|w| {
        let t = &mut ctx.t;
        w.bus_write(t, Endpoint::Host, 4, 0x1234)
            .and_then(|()| w.bus_read(t, Endpoint::Host, 4))
    });
    let ev = ctx.last_event();
    ctx.check("functional_after_unlock", format!("0/{probes} mismatches"), format!("{mismatches}/{probes} mismatches"), ev.clone());
    ctx.check("host_bus_io", "ok(4660)", match host_io {
        Some(Ok(v)) => format!("ok({v})"),
        Some(Err(e)) => format!("error: {e}"),
        None => "no ip".into(),
    }, ev);

    ctx.expect_transition(&mut unit, Recall);
    if let Ok(r) = ctx.boot(&mut unit.chip) {
        let ev = Ctx::boot_evidence(&r);
        ctx.check("recall_boot_outcome", "released", label(&r.outcome), ev.clone());
        let passed = r.attestation.iter().filter(|(_, a)| *a == crate::puf::AuthResult::Pass).count();
        ctx.check("recall_attestation", format!("{0}/{0}", r.attestation.len().max(1)), format!("{passed}/{}", r.attestation.len()), ev);
    } else {
        ctx.abort("recall_boot", "boot failed");
    }

    ctx.expect_transition(&mut unit, EndOfLife);
    let kinds: Vec<String> = unit.chip.enclave.vault.entries().map(|(k, _)| label(&k.kind)).collect();
    let ev = ctx.last_event();
    ctx.check("vault_after_eol", label(&AssetKind::LifecycleState), kinds.join(","), ev);
    let (status, ev) = ctx.ledger_status(unit.session);
    ctx.check("ledger_after_eol", "end_of_life/decommissioned", status, ev);

    match ctx.boot(&mut unit.chip) {
        Ok(r) => {
            let ev = Ctx::boot_evidence(&r);
            ctx.check("eol_boot_outcome", label(&BootOutcome::Truncated), label(&r.outcome), ev.clone());
            let bus = ctx
                .t
                .indices_where(|e| e.channel == Channel::SystemBus)
                .into_iter()
                .filter(|&i| i >= r.first_event && i < r.end_event)
                .count();
            ctx.check("eol_boot_bus_events", 0, bus, ev);
        }
        Err(e) => ctx.abort("eol_boot", e),
    }
}
