use std::path::Path;

use gvc_core::resolve::load_woven;
use gvc_core::vm::{
    gas_report, load_program, parse_script, run_script, validate_tx, Ledger, Outcome, Revert, TxOutcome,
};
use gvc_core::weaver::InstrumentedProgram;

use crate::output::{code, green, read, red, write};
use crate::weave::sidecar_path;
use crate::{EXIT_OK, EXIT_REVERT, EXIT_USAGE};

pub struct RunArgs<'a> {
    pub path: &'a Path,
    pub txs: &'a Path,
    pub ledger: Option<&'a Path>,
    pub gas_limit: u64,
    pub gas_report: Option<&'a Path>,
    pub adversary: Option<&'a Path>,
    pub unchecked: bool,
    pub ledger_out: Option<&'a Path>,
}

pub fn cmd_run(args: RunArgs<'_>) -> u8 {
    code(run(&args))
}

fn usage<E: std::fmt::Display>(what: &Path) -> impl FnOnce(E) -> u8 + '_ {
    move |e| {
        println!("{}: {e}", what.display());
        EXIT_USAGE
    }
}

fn run(a: &RunArgs<'_>) -> Result<u8, u8> {
    let program = load_woven(&read(a.path)?).map_err(usage(a.path))?;
    let sidecar = sidecar_path(a.path);
    let checks = if sidecar.exists() {
        InstrumentedProgram::parse_sidecar(&read(&sidecar)?).map_err(usage(&sidecar))?
    } else {
        Default::default()
    };
    let ip = InstrumentedProgram { program, checks };
    let adversary = match a.adversary {
        Some(p) => Some(read(p)?),
        None => None,
    };
    let mut img = load_program(&ip, adversary.as_deref()).map_err(usage(a.adversary.unwrap_or(a.path)))?;
    if a.unchecked {
        img = img.unchecked();
    }
    let mut ledger = match a.ledger {
        Some(p) => Ledger::from_json(&img.program, &read(p)?).map_err(usage(p))?,
        None => Ledger::zeroed(&img.program),
    };
    let script = parse_script(&read(a.txs)?).map_err(usage(a.txs))?;
    for tx in &script {
        validate_tx(&img, tx).map_err(usage(a.txs))?;
    }

    let outcomes = run_script(&img, &mut ledger, &script, a.gas_limit).map_err(usage(a.txs))?;
    for (i, (tx, o)) in script.iter().zip(&outcomes).enumerate() {
        println!("tx {i} {tx}: {}", describe(o));
        if let Outcome::Committed { deltas, .. } = &o.outcome {
            for d in deltas {
                println!("    {}.{}: {} -> {}", d.contract, d.slot, d.before, d.after);
            }
        }
    }
    let report = gas_report(&script, &outcomes);
    println!(
        "gas: exec {}, check {}",
        report.totals.exec_gas, report.totals.check_gas
    );
    if let Some(out) = a.gas_report {
        write(out, &report.to_json())?;
    }
    if let Some(out) = a.ledger_out {
        write(out, &ledger.to_json())?;
    }
    Ok(if outcomes.iter().all(TxOutcome::committed) {
        EXIT_OK
    } else {
        EXIT_REVERT
    })
}

fn describe(o: &TxOutcome) -> String {
    let gas = format!("exec_gas {}, check_gas {}", o.gas.exec, o.gas.check);
    match &o.outcome {
        Outcome::Committed { result: Some(v), .. } => format!("{} (returned {v}), {gas}", green("committed")),
        Outcome::Committed { result: None, .. } => format!("{}, {gas}", green("committed")),
        Outcome::Reverted(r) => format!("{} {}, {gas}", red("reverted:"), revert_text(r)),
    }
}

pub fn revert_text(r: &Revert) -> String {
    let mut s = r.reason.to_string();
    if let Some(id) = &r.check_id {
        s.push_str(&format!(" at check {id}"));
    }
    if let Some(k) = &r.key {
        s.push_str(&format!(": {} `{}` (source line {}, column {})", k.kind, k.payload, k.line, k.col));
    }
    s
}
