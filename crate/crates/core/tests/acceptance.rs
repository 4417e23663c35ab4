//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use common::*;
use gvc_core::ast::{Program, RelOp, StmtKind};
use gvc_core::corpus::prepare;
use gvc_core::obligation::ObligationKind;
use gvc_core::oracle::{enumerate_equivalence, erosion_suite, ledger_grid, vectors, DEFAULT_BOUND};
use gvc_core::prover::*;
use gvc_core::verifier::MethodStatus;
use gvc_core::vm::*;
use rand::{rngs::StdRng, Rng, SeedableRng};

/// Enumeration bound used by every criterion.
const BOUND: u64 = DEFAULT_BOUND;
/// Minimum corpus size and erosion count.
const MIN_PROGRAMS: usize = 10;
const MIN_EROSIONS: usize = 100;
/// Generated prover systems and the exhaustive search box.
const PROVER_SYSTEMS: usize = 1000;
const PROVER_BOX: i128 = 16;
/// Repetitions for the determinism check.
const REPEATS: usize = 3;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn golden_sell() -> Outcome {
    let p = prepared("sell");
    let m = p.report.method("Counter.sell").ok_or("no Counter.sell")?;
    ensure!(m.status == MethodStatus::VerifiedWithResiduals, "status {:?}", m.status);
    ensure!(m.residuals.len() == 1, "{} residuals", m.residuals.len());
    let r = &m.residuals[0];
    ensure!(r.kind == ObligationKind::UnderflowSafety, "kind {}", r.kind);
    ensure!(r.payload.to_string() == "scratch >= quantity", "payload {}", r.payload);
    let w = p.woven.ok_or("not woven")?;
    ensure!(w.check_count() == 1, "{} woven checks", w.check_count());
    let body = w.program.contracts[0].methods[0].stmts();
    let at = body.iter().position(|s| matches!(s.kind, StmtKind::Check(_))).ok_or("no check")?;
    ensure!(
        matches!(&body[at + 1].kind, StmtKind::Assign { target, .. } if target == "Count"),
        "check is not followed by the write to Count"
    );
    Ok("one residual `scratch >= quantity`, woven before `Count := ...`".into())
}

fn residual_minimization() -> Outcome {
    let p = prepared("sell_precise");
    let residuals = p.report.residuals().count();
    ensure!(residuals == 0, "{residuals} residuals");
    let w = p.woven.as_ref().ok_or("not woven")?;
    ensure!(w.check_count() == 0, "{} woven checks", w.check_count());
    let r = enumerate_equivalence(&p.executable, p.image.as_ref().unwrap(), BOUND);
    // a sale commits exactly when quantity <= Count
    let expected = (0..=BOUND).map(|c| c + 1).sum::<u64>();
    ensure!(r.cases == 81, "{} cases", r.cases);
    ensure!(r.disagreements.is_empty(), "{} disagreements", r.disagreements.len());
    ensure!(r.committed == expected, "{} committed, expected {expected}", r.committed);
    Ok(format!("0 residuals, 0 checks, {} cases ({} committed), 0 disagreements", r.cases, r.committed))
}

fn features(p: &Program) -> [bool; 4] {
    fn walk(s: &[gvc_core::ast::Stmt], f: &mut [bool; 4]) {
        for st in s {
            match &st.kind {
                StmtKind::While { body, .. } => {
                    f[0] = true;
                    walk(body, f);
                }
                StmtKind::If { then_body, else_body, .. } => {
                    walk(then_body, f);
                    walk(else_body, f);
                }
                StmtKind::Call { .. } => f[1] = true,
                _ => {}
            }
        }
    }
    let mut f = [false; 4];
    for c in &p.contracts {
        f[2] |= !c.predicates.is_empty();
        f[3] |= c.is_extern;
        for m in &c.methods {
            walk(m.stmts(), &mut f);
        }
    }
    f
}

fn oracle_equivalence() -> Outcome {
    let entries = corpus();
    ensure!(entries.len() >= MIN_PROGRAMS, "only {} programs", entries.len());
    let mut covered = [false; 4];
    let mut cases = 0;
    for e in &entries {
        let p = prepare(e).map_err(|e| e.to_string())?;
        for (c, f) in covered.iter_mut().zip(features(&p.program)) {
            *c |= f;
        }
        let img = p.image.as_ref().ok_or(format!("{} has a static error", e.name))?;
        let r = enumerate_equivalence(&p.executable, img, BOUND);
        ensure!(r.disagreements.is_empty(), "{}: {}", e.name, r.disagreements_json());
        cases += r.cases;
    }
    ensure!(covered == [true; 4], "corpus lacks loops/calls/predicates/externs: {covered:?}");
    Ok(format!("{} programs, {cases} cases, 0 disagreements", entries.len()))
}

fn gradual_guarantee() -> Outcome {
    let (mut erosions, mut points) = (0, 0);
    for e in corpus() {
        let p = prepare(&e).map_err(|e| e.to_string())?;
        let r = erosion_suite(&p.executable, BOUND);
        ensure!(r.static_regressions.is_empty(), "{}: static {:?}", e.name, r.static_regressions);
        ensure!(r.dynamic_regressions.is_empty(), "{}: dynamic {:?}", e.name, &r.dynamic_regressions[..1]);
        ensure!(r.equivalence_disagreements == 0, "{}: eroded programs disagree", e.name);
        erosions += r.erosions;
        points += r.points_checked;
    }
    ensure!(erosions >= MIN_EROSIONS, "only {erosions} erosions");
    Ok(format!("{erosions} erosions, {points} points re-checked, 0 regressions"))
}

fn reentrancy() -> Outcome {
    let p = prepared("bank");
    let img = p.image.clone().ok_or("bank has a static error")?;
    let (mut attacked, mut corrupted) = (0, 0);
    for start in ledger_grid(&p.program, BOUND) {
        for args in vectors(1, BOUND) {
            let amount = args[0];
            let tx = Transaction::new("Bank", "withdraw", args);
            let balance = start.get("Bank", "Balance");
            // the attacker only calls back for a positive amount, and only
            // once the precondition has let the outer call in
            if amount == 0 || amount > balance {
                continue;
            }
            attacked += 1;
            let mut l = start.clone();
            let o = exec_transaction(&img, &mut l, &tx, 100_000).unwrap();
            let reason = o.revert().map(|r| r.reason);
            ensure!(reason == Some(RevertReason::OwnershipFailure), "{tx} from {}: {:?}", start.to_json(), o.outcome);
            ensure!(l.to_json() == start.to_json(), "{tx}: ledger changed");

            let mut l = start.clone();
            exec_transaction(&img.unchecked(), &mut l, &tx, 100_000).unwrap();
            let total = |l: &Ledger| l.get("Bank", "Balance") + l.get("Bank", "Paid");
            if total(&l) != total(&start) {
                corrupted += 1;
            }
        }
    }
    ensure!(attacked > 0, "attack path never reached");
    ensure!(corrupted > 0, "unchecked mode never corrupted the ledger");
    Ok(format!("{attacked} attacked states all OwnershipFailure; unchecked mode corrupts {corrupted} of them"))
}

fn brute_models(n: usize, sys: &ConstraintSystem) -> Vec<Vec<i128>> {
    let side = PROVER_BOX as usize + 1;
    (0..side.pow(n as u32))
        .map(|mut k| {
            (0..n)
                .map(|_| {
                    let v = (k % side) as i128;
                    k /= side;
                    v
                })
                .collect::<Vec<_>>()
        })
        .filter(|x| {
            sys.constraints.iter().all(|c| {
                let lhs: i128 = c.coeffs.iter().map(|(v, k)| k * x[*v as usize]).sum();
                match c.rel {
                    Rel::Le => lhs <= c.bound,
                    Rel::Eq => lhs == c.bound,
                    Rel::Ne => lhs != c.bound,
                }
            })
        })
        .collect()
}

fn coeffs(rng: &mut StdRng, n: usize) -> BTreeMap<Var, i128> {
    (0..n as u32).map(|v| (v, rng.gen_range(-4..=4))).filter(|(_, k)| *k != 0).collect()
}

fn prover_soundness() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let ops = [RelOp::Eq, RelOp::Ne, RelOp::Le, RelOp::Lt, RelOp::Ge, RelOp::Gt];
    let (mut proved, mut disproved) = (0, 0);
    for i in 0..PROVER_SYSTEMS {
        let n = rng.gen_range(1..=4usize);
        let mut sys = ConstraintSystem::new();
        for v in 0..n as u32 {
            sys.push(LinearConstraint { coeffs: BTreeMap::from([(v, 1)]), rel: Rel::Le, bound: PROVER_BOX });
        }
        for _ in 0..rng.gen_range(1..=4) {
            let c = coeffs(&mut rng, n);
            let rel = [Rel::Le, Rel::Le, Rel::Eq, Rel::Ne][rng.gen_range(0..4)];
            sys.push(LinearConstraint { coeffs: c, rel, bound: rng.gen_range(-20..=40) });
        }
        let diff = LinExpr { coeffs: coeffs(&mut rng, n), constant: rng.gen_range(-20..=40) };
        let goal = LinAtom { diff, op: ops[rng.gen_range(0..ops.len())] };
        let models = brute_models(n, &sys);
        let sat = |x: &Vec<i128>| {
            let v: i128 = goal.diff.coeffs.iter().map(|(v, k)| k * x[*v as usize]).sum::<i128>() + goal.diff.constant;
            match goal.op {
                RelOp::Eq => v == 0,
                RelOp::Ne => v != 0,
                RelOp::Le => v <= 0,
                RelOp::Lt => v < 0,
                RelOp::Ge => v >= 0,
                RelOp::Gt => v > 0,
            }
        };
        match entails(&sys, &goal) {
            ProofResult::Proved => {
                proved += 1;
                ensure!(models.iter().all(sat), "system {i}: Proved but a model violates the goal");
            }
            ProofResult::Disproved => {
                disproved += 1;
                ensure!(!models.is_empty() && !models.iter().any(sat), "system {i}: Disproved is contradicted");
            }
            ProofResult::Unknown => {}
        }
    }
    Ok(format!(
        "{PROVER_SYSTEMS} systems over [0,{PROVER_BOX}]^n, 0 contradictions; Proved rate {:.1}%, Disproved rate {:.1}%",
        100.0 * proved as f64 / PROVER_SYSTEMS as f64,
        100.0 * disproved as f64 / PROVER_SYSTEMS as f64
    ))
}

fn gas_accounting() -> Outcome {
    let script: Vec<Transaction> = [3, 3, 12].iter().map(|&q| Transaction::new("Counter", "sell", vec![q])).collect();
    // (exec, check) per transaction from Count = 10. The precise variant pays
    // for its two boundary atoms; the imprecise one also has two (`quantity >= 0`,
    // `acc(Count)`) plus the woven check. The last sale fails at the boundary
    // (precise) or at the check after one assignment (imprecise).
    let expected = [
        ("sell_precise", [(2, 2), (2, 2), (0, 2)], (4, 6)),
        ("sell", [(2, 3), (2, 3), (1, 3)], (5, 9)),
    ];
    let mut detail = Vec::new();
    for (name, per_tx, totals) in expected {
        let p = prepared(name);
        let img = p.image.clone().ok_or("static error")?;
        let atoms: usize = p.woven.as_ref().unwrap().boundary_table().iter().map(|b| b.entry.len()).sum();
        ensure!(atoms == 2, "{name}: {atoms} boundary atoms");
        let mut l = Ledger::from_json(&img.program, r#"{"Counter": {"Count": 10}}"#).unwrap();
        let outs = run_script(&img, &mut l, &script, 100_000).unwrap();
        let got: Vec<(u64, u64)> = outs.iter().map(|o| (o.gas.exec, o.gas.check)).collect();
        ensure!(got == per_tx, "{name}: per-transaction gas {got:?}, expected {per_tx:?}");
        let t = gas_report(&script, &outs).totals;
        ensure!((t.exec_gas, t.check_gas) == totals, "{name}: totals {t:?}");
        detail.push(format!("{name} exec {} check {}", t.exec_gas, t.check_gas));
    }
    Ok(detail.join(", "))
}

fn corpus_fingerprint() -> Result<String, String> {
    let mut out = String::new();
    for e in corpus() {
        let p = prepare(&e).map_err(|e| e.to_string())?;
        out.push_str(&p.report.to_json());
        if let (Some(w), Some(img)) = (&p.woven, &p.image) {
            out.push_str(&w.render());
            out.push_str(&w.sidecar_json());
            let r = enumerate_equivalence(&p.executable, img, BOUND);
            out.push_str(&serde_json::to_string(&r).unwrap());
        }
    }
    Ok(out)
}

fn determinism_and_atomicity() -> Outcome {
    let first = corpus_fingerprint()?;
    for run in 1..REPEATS {
        ensure!(corpus_fingerprint()? == first, "run {run} differs from run 0");
    }
    let mut reverted = 0;
    for e in corpus() {
        let p = prepare(&e).map_err(|e| e.to_string())?;
        let img = p.image.ok_or("static error")?;
        for (c, m, arity) in gvc_core::oracle::entry_points(&img.program) {
            for args in vectors(arity, BOUND) {
                let tx = Transaction::new(&c, &m, args);
                for start in ledger_grid(&img.program, BOUND) {
                    let mut l = start.clone();
                    let o = exec_transaction(&img, &mut l, &tx, 100_000).unwrap();
                    if o.revert().is_some() {
                        reverted += 1;
                        ensure!(l.to_json() == start.to_json(), "{}: {tx} changed the ledger", e.name);
                    }
                }
            }
        }
    }
    Ok(format!("{REPEATS} identical corpus runs ({} bytes); {reverted} reverts left the ledger untouched", first.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("golden sell", golden_sell),
        ("residual minimization", residual_minimization),
        ("oracle equivalence", oracle_equivalence),
        ("gradual guarantee", gradual_guarantee),
        ("re-entrancy protection", reentrancy),
        ("prover soundness", prover_soundness),
        ("gas accounting", gas_accounting),
        ("determinism and atomicity", determinism_and_atomicity),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
