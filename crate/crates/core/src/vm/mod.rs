//! Deterministic ledger VM for woven programs.

mod machine;
mod script;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::*;
use crate::error::FrontendError;
use crate::infer::infer_types;
use crate::lexer::lex;
use crate::obligation::ObligationKey;
use crate::parser::parse_program;
use crate::resolve::resolve_stage;
use crate::weaver::{CheckInfo, InstrumentedProgram};
use crate::wf::Stage;

pub use machine::PREDICATE_DEPTH_LIMIT;
pub use script::{gas_report, parse_script, GasReport, GasTotals, ScriptError, TxGasLine};

/// Persistent storage: contract → slot → value.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ledger {
    pub slots: BTreeMap<String, BTreeMap<String, u64>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("ledger file is not valid JSON: {0}")]
    Json(String),
    #[error("ledger names unknown slot `{contract}.{slot}`")]
    UnknownSlot { contract: String, slot: String },
}

impl Ledger {
    /// Every declared slot at zero.
    pub fn zeroed(p: &Program) -> Ledger {
        let mut slots = BTreeMap::new();
        for c in p.contracts.iter().filter(|c| !c.globals.is_empty()) {
            slots.insert(
                c.name.clone(),
                c.globals.iter().map(|g| (g.clone(), 0)).collect(),
            );
        }
        Ledger { slots }
    }

    /// Reads `{contract: {slot: value}}`; missing slots default to 0.
    pub fn from_json(p: &Program, text: &str) -> Result<Ledger, LedgerError> {
        let given: BTreeMap<String, BTreeMap<String, u64>> =
            serde_json::from_str(text).map_err(|e| LedgerError::Json(e.to_string()))?;
        let mut ledger = Ledger::zeroed(p);
        for (c, slots) in given {
            for (g, v) in slots {
                let declared = p.contract(&c).is_some_and(|k| k.is_global(&g));
                if !declared {
                    return Err(LedgerError::UnknownSlot { contract: c, slot: g });
                }
                ledger.set(&c, &g, v);
            }
        }
        Ok(ledger)
    }

    pub fn get(&self, contract: &str, slot: &str) -> u64 {
        self.slots
            .get(contract)
            .and_then(|s| s.get(slot))
            .copied()
            .unwrap_or(0)
    }

    pub fn set(&mut self, contract: &str, slot: &str, v: u64) {
        self.slots
            .entry(contract.to_string())
            .or_default()
            .insert(slot.to_string(), v);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ledger serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub contract: String,
    pub method: String,
    pub args: Vec<u64>,
    #[serde(default = "external")]
    pub sender: String,
}

fn external() -> String {
    "external".to_string()
}

impl Transaction {
    pub fn new(contract: &str, method: &str, args: Vec<u64>) -> Self {
        Transaction {
            contract: contract.to_string(),
            method: method.to_string(),
            args,
            sender: external(),
        }
    }
}

impl fmt::Display for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(|a| a.to_string()).collect();
        write!(f, "{}.{}({})", self.contract, self.method, args.join(", "))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gas {
    pub exec: u64,
    pub check: u64,
}

impl Gas {
    pub fn total(&self) -> u64 {
        self.exec + self.check
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RevertReason {
    CheckFailure,
    OwnershipFailure,
    ArithmeticPanic,
    GasExhausted,
    PredicateDepthExceeded,
}

impl fmt::Display for RevertReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Revert {
    pub reason: RevertReason,
    pub check_id: Option<String>,
    /// The obligation that failed, when there is one.
    pub key: Option<ObligationKey>,
}

impl fmt::Display for Revert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.reason)?;
        if let Some(id) = &self.check_id {
            write!(f, " @{id}")?;
        }
        if let Some(k) = &self.key {
            write!(f, ": {k}")?;
        }
        Ok(())
    }
}

/// One slot that a committed transaction changed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotDelta {
    pub contract: String,
    pub slot: String,
    pub before: u64,
    pub after: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Committed {
        deltas: Vec<SlotDelta>,
        result: Option<u64>,
    },
    Reverted(Revert),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TxOutcome {
    pub outcome: Outcome,
    pub gas: Gas,
}

impl TxOutcome {
    pub fn committed(&self) -> bool {
        matches!(self.outcome, Outcome::Committed { .. })
    }

    pub fn revert(&self) -> Option<&Revert> {
        match &self.outcome {
            Outcome::Reverted(r) => Some(r),
            Outcome::Committed { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Checked,
    /// Debug mode: no checks, no boundary enforcement, no ownership tracking.
    Unchecked,
}

#[derive(Clone, Debug)]
pub struct VmImage {
    pub program: Program,
    pub checks: BTreeMap<String, CheckInfo>,
    pub mode: Mode,
}

impl VmImage {
    pub fn unchecked(&self) -> VmImage {
        VmImage {
            mode: Mode::Unchecked,
            ..self.clone()
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("adversary source: {0}")]
    Frontend(#[from] FrontendError),
    #[error("adversary implements `{0}`, which is not an extern contract of the program")]
    NotExtern(String),
    #[error("adversary method `{contract}.{method}` is not declared by the extern contract")]
    UnknownMethod { contract: String, method: String },
    #[error("adversary method `{contract}.{method}` does not match its declared signature")]
    Signature { contract: String, method: String },
}

/// Fills `opaque` extern bodies with adversary implementations. The bodies
/// are type-checked and resolved against the program but not verified.
pub fn attach_adversaries(p: &Program, adversary_src: &str) -> Result<Program, LoadError> {
    let tokens = lex(adversary_src).map_err(FrontendError::from)?;
    let adv = parse_program(&tokens).map_err(FrontendError::from)?;
    let mut out = p.clone();
    for a in &adv.contracts {
        let Some(target) = out.contracts.iter_mut().find(|c| c.name == a.name && c.is_extern) else {
            return Err(LoadError::NotExtern(a.name.clone()));
        };
        for am in &a.methods {
            let Some(tm) = target.methods.iter_mut().find(|m| m.name == am.name) else {
                return Err(LoadError::UnknownMethod {
                    contract: a.name.clone(),
                    method: am.name.clone(),
                });
            };
            if tm.params.len() != am.params.len() || tm.returns != am.returns {
                return Err(LoadError::Signature {
                    contract: a.name.clone(),
                    method: am.name.clone(),
                });
            }
            // keep the declared parameter names so the declared spec still binds
            let rename: BTreeMap<&str, &str> = am
                .params
                .iter()
                .map(String::as_str)
                .zip(tm.params.iter().map(String::as_str))
                .collect();
            let mut body = am.body.clone();
            if let MethodBody::Stmts(stmts) = &mut body {
                rename_block(stmts, &rename);
            }
            tm.body = body;
        }
    }
    infer_types(&out).map_err(FrontendError::from)?;
    Ok(resolve_stage(out, Stage::Woven)?)
}

fn rename_block(stmts: &mut [Stmt], map: &BTreeMap<&str, &str>) {
    let f = |n: &str| map.get(n).map(|m| Expr::name(*m));
    for s in stmts {
        match &mut s.kind {
            StmtKind::Assign { value, .. } => *value = value.substitute(&f),
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                *cond = cond.substitute(&f);
                rename_block(then_body, map);
                rename_block(else_body, map);
            }
            StmtKind::While { cond, body, .. } => {
                *cond = cond.substitute(&f);
                rename_block(body, map);
            }
            StmtKind::Call { args, .. } => {
                for a in args {
                    *a = a.substitute(&f);
                }
            }
            StmtKind::Return(e) => *e = e.substitute(&f),
            StmtKind::Assert(_) | StmtKind::Check(_) => {}
        }
    }
}

pub fn load_program(ip: &InstrumentedProgram, adversaries: Option<&str>) -> Result<VmImage, LoadError> {
    let program = match adversaries {
        Some(src) => attach_adversaries(&ip.program, src)?,
        None => ip.program.clone(),
    };
    Ok(VmImage {
        program,
        checks: ip.checks.clone(),
        mode: Mode::Checked,
    })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TxError {
    #[error("no method `{0}`")]
    UnknownMethod(String),
    #[error("`{method}` takes {expected} arguments, got {found}")]
    Arity {
        method: String,
        expected: usize,
        found: usize,
    },
}

pub fn validate_tx(img: &VmImage, tx: &Transaction) -> Result<(), TxError> {
    let Some((_, m)) = img.program.method(&tx.contract, &tx.method) else {
        return Err(TxError::UnknownMethod(format!("{}.{}", tx.contract, tx.method)));
    };
    if m.params.len() != tx.args.len() {
        return Err(TxError::Arity {
            method: format!("{}.{}", tx.contract, tx.method),
            expected: m.params.len(),
            found: tx.args.len(),
        });
    }
    Ok(())
}

/// Runs one transaction. On revert the ledger is left untouched.
pub fn exec_transaction(
    img: &VmImage,
    ledger: &mut Ledger,
    tx: &Transaction,
    gas_limit: u64,
) -> Result<TxOutcome, TxError> {
    validate_tx(img, tx)?;
    let mut vm = machine::Vm::new(img, ledger.clone(), gas_limit);
    let result = vm.transaction(tx);
    let gas = vm.gas;
    let outcome = match result {
        Ok(result) => {
            let after = vm.into_ledger();
            let mut deltas = Vec::new();
            for (c, slots) in &after.slots {
                for (g, v) in slots {
                    let before = ledger.get(c, g);
                    if before != *v {
                        deltas.push(SlotDelta {
                            contract: c.clone(),
                            slot: g.clone(),
                            before,
                            after: *v,
                        });
                    }
                }
            }
            *ledger = after;
            Outcome::Committed { deltas, result }
        }
        Err(r) => Outcome::Reverted(r),
    };
    Ok(TxOutcome { outcome, gas })
}

pub fn run_script(
    img: &VmImage,
    ledger: &mut Ledger,
    script: &[Transaction],
    gas_limit: u64,
) -> Result<Vec<TxOutcome>, TxError> {
    script
        .iter()
        .map(|tx| exec_transaction(img, ledger, tx, gas_limit))
        .collect()
}
