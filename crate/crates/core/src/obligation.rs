//! Obligation vocabulary shared by the verifier, the VM and the oracle.
//!
//! Only data lives here. Each consumer derives obligations on its own.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::SourceLoc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObligationKind {
    Precondition,
    PreconditionAtCall,
    Postcondition,
    LoopInvariant,
    LoopInvariantPreserved,
    UnderflowSafety,
    DivisionSafety,
    /// Never generated statically; only the VM and the oracle see it.
    Overflow,
    Assert,
    Access,
}

impl ObligationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObligationKind::Precondition => "precondition",
            ObligationKind::PreconditionAtCall => "precondition-at-call",
            ObligationKind::Postcondition => "postcondition",
            ObligationKind::LoopInvariant => "loop-invariant",
            ObligationKind::LoopInvariantPreserved => "loop-invariant-preserved",
            ObligationKind::UnderflowSafety => "underflow-safety",
            ObligationKind::DivisionSafety => "division-safety",
            ObligationKind::Overflow => "overflow",
            ObligationKind::Assert => "assert",
            ObligationKind::Access => "access",
        }
    }
}

impl fmt::Display for ObligationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a residual check runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Insertion {
    BeforeStatement,
    /// Appended to the end of a loop body, before the condition is re-evaluated.
    LoopEnd,
    AtEntry,
    AtExit,
}

impl Insertion {
    pub fn as_str(self) -> &'static str {
        match self {
            Insertion::BeforeStatement => "before-statement",
            Insertion::LoopEnd => "loop-end",
            Insertion::AtEntry => "at-entry",
            Insertion::AtExit => "at-exit",
        }
    }
}

impl fmt::Display for Insertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of an obligation across tools: kind, site and payload text.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObligationKey {
    pub kind: ObligationKind,
    pub line: u32,
    pub col: u32,
    pub payload: String,
}

impl ObligationKey {
    pub fn new(kind: ObligationKind, site: SourceLoc, payload: impl Into<String>) -> Self {
        ObligationKey {
            kind,
            line: site.line,
            col: site.col,
            payload: payload.into(),
        }
    }

    pub fn site(&self) -> SourceLoc {
        SourceLoc::new(self.line, self.col)
    }
}

impl fmt::Display for ObligationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} `{}` at {}:{}", self.kind, self.payload, self.line, self.col)
    }
}

/// Text of the overflow obligation for `lhs op rhs`.
pub fn overflow_text(expr: &crate::ast::Expr) -> String {
    format!("{expr} <= {}", u64::MAX)
}
