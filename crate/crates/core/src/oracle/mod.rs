//! Ground truth: a brute-force dynamic verifier over un-instrumented
//! programs, and bounded enumeration comparing it against the VM.

mod erosion;
mod interp;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ast::Program;
use crate::obligation::ObligationKey;
use crate::vm::{exec_transaction, Ledger, Outcome, RevertReason, Transaction, TxOutcome, VmImage};

pub use erosion::{erode, erosion_suite, Erosion, ErosionReport};

use interp::{Interp, Stop};

/// Statement budget for one oracle run.
pub const ORACLE_FUEL: u64 = 1_000_000;
/// Gas limit given to the VM during enumeration.
pub const ENUMERATION_GAS: u64 = 1_000_000;
pub const DEFAULT_BOUND: u64 = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    AllObligationsHeld {
        final_state: Ledger,
        result: Option<u64>,
    },
    FirstViolation {
        obligation: ObligationKey,
        state: Ledger,
        locals: BTreeMap<String, u64>,
    },
    /// The run exhausted its fuel or the predicate depth cap.
    Inconclusive(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceJudgment {
    pub transaction: Transaction,
    pub verdict: Verdict,
}

impl TraceJudgment {
    pub fn held(&self) -> bool {
        matches!(self.verdict, Verdict::AllObligationsHeld { .. })
    }

    pub fn violated(&self) -> Option<&ObligationKey> {
        match &self.verdict {
            Verdict::FirstViolation { obligation, .. } => Some(obligation),
            _ => None,
        }
    }
}

/// Runs `tx` on `p`, checking every obligation at its site.
pub fn dynamic_verify_trace(p: &Program, ledger: &Ledger, tx: &Transaction) -> TraceJudgment {
    let mut it = Interp::new(p, ledger.clone(), ORACLE_FUEL);
    let verdict = match it.run(&tx.contract, &tx.method, &tx.args) {
        Ok(result) => Verdict::AllObligationsHeld {
            final_state: it.store.clone(),
            result,
        },
        Err(Stop::Violation(obligation)) => Verdict::FirstViolation {
            obligation,
            locals: it.locals(),
            state: it.store.clone(),
        },
        Err(Stop::Resource(what)) => Verdict::Inconclusive(what.to_string()),
    };
    TraceJudgment {
        transaction: tx.clone(),
        verdict,
    }
}

/// Whether the VM outcome and the oracle verdict tell the same story.
pub fn agrees(vm: &TxOutcome, oracle: &Verdict, before: &Ledger) -> bool {
    match (&vm.outcome, oracle) {
        (
            Outcome::Committed { deltas, result },
            Verdict::AllObligationsHeld {
                final_state,
                result: r,
            },
        ) => {
            let mut after = before.clone();
            for d in deltas {
                after.set(&d.contract, &d.slot, d.after);
            }
            &after == final_state && result == r
        }
        (Outcome::Reverted(rev), Verdict::FirstViolation { obligation, .. }) => {
            rev.key.as_ref() == Some(obligation)
        }
        (Outcome::Reverted(rev), Verdict::Inconclusive(_)) => matches!(
            rev.reason,
            RevertReason::GasExhausted | RevertReason::PredicateDepthExceeded
        ),
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Disagreement {
    pub initial_state: Ledger,
    pub method: String,
    pub args: Vec<u64>,
    pub vm_outcome: TxOutcome,
    pub oracle_verdict: Verdict,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EquivalenceReport {
    pub cases: u64,
    pub committed: u64,
    pub reverted: u64,
    pub disagreements: Vec<Disagreement>,
}

impl EquivalenceReport {
    pub fn disagreements_json(&self) -> String {
        serde_json::to_string_pretty(&self.disagreements).expect("disagreements serialize")
    }
}

/// Every ledger over the program's storage slots with values in `[0, bound]`.
pub fn ledger_grid(p: &Program, bound: u64) -> Vec<Ledger> {
    let slots: Vec<(&str, &str)> = p
        .contracts
        .iter()
        .filter(|c| !c.is_extern)
        .flat_map(|c| c.globals.iter().map(move |g| (c.name.as_str(), g.as_str())))
        .collect();
    vectors(slots.len(), bound)
        .into_iter()
        .map(|vals| {
            let mut l = Ledger::zeroed(p);
            for ((c, g), v) in slots.iter().zip(vals) {
                l.set(c, g, v);
            }
            l
        })
        .collect()
}

/// All vectors of length `n` over `[0, bound]`, in lexicographic order.
pub fn vectors(n: usize, bound: u64) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..=bound).map(move |x| {
                    let mut w = v.clone();
                    w.push(x);
                    w
                })
            })
            .collect();
    }
    out
}

/// The single-method transactions enumeration draws from.
pub fn entry_points(p: &Program) -> Vec<(String, String, usize)> {
    p.contracts
        .iter()
        .filter(|c| !c.is_extern)
        .flat_map(|c| c.methods.iter().map(move |m| (c.name.clone(), m.name.clone(), m.params.len())))
        .collect()
}

/// Compares the instrumented VM on `img` with the oracle on `p` over the
/// whole bounded grid. `p` and `img` must carry the same adversaries.
pub fn enumerate_equivalence(p: &Program, img: &VmImage, bound: u64) -> EquivalenceReport {
    let mut report = EquivalenceReport::default();
    let grid = ledger_grid(p, bound);
    for (c, m, arity) in entry_points(p) {
        for args in vectors(arity, bound) {
            let tx = Transaction::new(&c, &m, args.clone());
            for start in &grid {
                report.cases += 1;
                let mut ledger = start.clone();
                let vm = exec_transaction(img, &mut ledger, &tx, ENUMERATION_GAS).expect("well-typed transaction");
                if vm.committed() {
                    report.committed += 1;
                } else {
                    report.reverted += 1;
                }
                let judgment = dynamic_verify_trace(p, start, &tx);
                if !agrees(&vm, &judgment.verdict, start) {
                    report.disagreements.push(Disagreement {
                        initial_state: start.clone(),
                        method: format!("{c}.{m}"),
                        args: args.clone(),
                        vm_outcome: vm,
                        oracle_verdict: judgment.verdict,
                    });
                }
            }
        }
    }
    report
}
