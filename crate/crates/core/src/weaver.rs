//! Weaving residual checks into a program, and stripping them again.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::*;
use crate::obligation::{Insertion, ObligationKey, ObligationKind};
use crate::pretty::pretty_print;
use crate::verifier::{program_digest, MethodStatus, ResidualCheck, VerificationReport};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeaveError {
    #[error("report is stale: it was produced for digest {found}, the program has {expected}")]
    StaleReport { expected: String, found: String },
    #[error("refusing to weave: {0} has static errors")]
    StaticError(String),
    #[error("residual {id} has no statement at {site}")]
    Unplaced { id: String, site: SourceLoc },
}

/// Where a woven check came from, for error reporting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckInfo {
    pub id: String,
    pub kind: ObligationKind,
    pub line: u32,
    pub col: u32,
    pub insertion: Insertion,
    pub payload_text: String,
}

impl CheckInfo {
    pub fn key(&self) -> ObligationKey {
        ObligationKey::new(self.kind, SourceLoc::new(self.line, self.col), self.payload_text.clone())
    }
}

/// Entry and exit enforcement for one method.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundaryEntry {
    pub method: String,
    /// Precondition atoms checked when entered from unverified code or the top level.
    pub entry: Vec<String>,
    /// Ids of the postcondition checks run at every exit.
    pub exit: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstrumentedProgram {
    pub program: Program,
    pub checks: BTreeMap<String, CheckInfo>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    checks: Vec<CheckInfo>,
}

impl InstrumentedProgram {
    /// A program run as-is, with no check metadata.
    pub fn unwoven(program: Program) -> Self {
        InstrumentedProgram {
            program,
            checks: BTreeMap::new(),
        }
    }

    pub fn render(&self) -> String {
        pretty_print(&self.program)
    }

    pub fn sidecar_json(&self) -> String {
        let s = Sidecar {
            checks: self.checks.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&s).expect("sidecar serializes")
    }

    pub fn parse_sidecar(text: &str) -> Result<BTreeMap<String, CheckInfo>, serde_json::Error> {
        let s: Sidecar = serde_json::from_str(text)?;
        Ok(s.checks.into_iter().map(|c| (c.id.clone(), c)).collect())
    }

    /// Woven checks, in bodies and at exits.
    pub fn check_count(&self) -> usize {
        let mut n = 0;
        for c in &self.program.contracts {
            for m in &c.methods {
                n += count_checks(m.stmts()) + m.exit_checks.len();
            }
        }
        n
    }

    pub fn boundary_table(&self) -> Vec<BoundaryEntry> {
        let mut out = Vec::new();
        for c in self.program.contracts.iter().filter(|c| !c.is_extern) {
            for m in &c.methods {
                out.push(BoundaryEntry {
                    method: format!("{}.{}", c.name, m.name),
                    entry: m.requires.formula.atoms().map(|a| a.to_string()).collect(),
                    exit: m.exit_checks.iter().map(|k| k.id.clone()).collect(),
                });
            }
        }
        out
    }
}

fn count_checks(stmts: &[Stmt]) -> usize {
    stmts
        .iter()
        .map(|s| match &s.kind {
            StmtKind::Check(_) => 1,
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => count_checks(then_body) + count_checks(else_body),
            StmtKind::While { body, .. } => count_checks(body),
            _ => 0,
        })
        .sum()
}

pub fn weave(p: &Program, r: &VerificationReport) -> Result<InstrumentedProgram, WeaveError> {
    let expected = program_digest(p);
    if r.digest != expected {
        return Err(WeaveError::StaleReport {
            expected,
            found: r.digest.clone(),
        });
    }
    if let Some(m) = r.methods.iter().find(|m| m.status == MethodStatus::StaticError) {
        return Err(WeaveError::StaticError(m.name.clone()));
    }

    let mut out = p.clone();
    let mut checks = BTreeMap::new();
    for c in out.contracts.iter_mut().filter(|c| !c.is_extern) {
        for m in &mut c.methods {
            let name = format!("{}.{}", c.name, m.name);
            let Some(report) = r.method(&name) else {
                continue;
            };
            let mut sorted: Vec<&ResidualCheck> = report.residuals.iter().collect();
            sorted.sort_by_key(|x| x.ordinal);
            let mut before: BTreeMap<SourceLoc, Vec<Check>> = BTreeMap::new();
            let mut loop_end: BTreeMap<SourceLoc, Vec<Check>> = BTreeMap::new();
            for res in &sorted {
                let check = Check {
                    id: res.id.clone(),
                    payload: res.payload.clone(),
                };
                match res.insertion {
                    Insertion::BeforeStatement => before.entry(res.site()).or_default().push(check),
                    Insertion::LoopEnd => loop_end.entry(res.site()).or_default().push(check),
                    Insertion::AtExit | Insertion::AtEntry => m.exit_checks.push(check),
                }
                checks.insert(
                    res.id.clone(),
                    CheckInfo {
                        id: res.id.clone(),
                        kind: res.kind,
                        line: res.line,
                        col: res.col,
                        insertion: res.insertion,
                        payload_text: res.payload.to_string(),
                    },
                );
            }
            if let MethodBody::Stmts(body) = &mut m.body {
                *body = weave_block(std::mem::take(body), &mut before, &mut loop_end);
            }
            if let Some((site, left)) = before.into_iter().chain(loop_end).find(|(_, v)| !v.is_empty()) {
                return Err(WeaveError::Unplaced {
                    id: left[0].id.clone(),
                    site,
                });
            }
        }
    }
    Ok(InstrumentedProgram {
        program: out,
        checks,
    })
}

fn weave_block(
    stmts: Vec<Stmt>,
    before: &mut BTreeMap<SourceLoc, Vec<Check>>,
    loop_end: &mut BTreeMap<SourceLoc, Vec<Check>>,
) -> Vec<Stmt> {
    let mut out = Vec::new();
    for mut s in stmts {
        if let Some(cs) = before.remove(&s.loc) {
            for c in cs {
                out.push(Stmt::new(StmtKind::Check(c), s.loc));
            }
        }
        match &mut s.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                *then_body = weave_block(std::mem::take(then_body), before, loop_end);
                *else_body = weave_block(std::mem::take(else_body), before, loop_end);
            }
            StmtKind::While { body, .. } => {
                let mut b = weave_block(std::mem::take(body), before, loop_end);
                if let Some(cs) = loop_end.remove(&s.loc) {
                    for c in cs {
                        b.push(Stmt::new(StmtKind::Check(c), s.loc));
                    }
                }
                *body = b;
            }
            _ => {}
        }
        out.push(s);
    }
    out
}

/// Removes every woven check.
pub fn strip(p: &Program) -> Program {
    let mut out = p.clone();
    for c in &mut out.contracts {
        for m in &mut c.methods {
            m.exit_checks.clear();
            if let MethodBody::Stmts(body) = &mut m.body {
                strip_block(body);
            }
        }
    }
    out
}

fn strip_block(stmts: &mut Vec<Stmt>) {
    stmts.retain(|s| !matches!(s.kind, StmtKind::Check(_)));
    for s in stmts {
        match &mut s.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                strip_block(then_body);
                strip_block(else_body);
            }
            StmtKind::While { body, .. } => strip_block(body),
            _ => {}
        }
    }
}
