use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{BinOp, Expr, RelOp};
use crate::prover::{to_linear, ConstraintSystem, Term, Var, U64_MAX};

/// Symbolic state of one path through a method.
#[derive(Clone, Debug, Default)]
pub struct SymState {
    pub store: BTreeMap<String, Term>,
    pub perms: BTreeSet<String>,
    /// Values of owned slots; keys are always a subset of `perms`.
    pub heap: BTreeMap<String, Term>,
    pub path: ConstraintSystem,
    /// Predicate instances assumed to hold.
    pub preds: Vec<(String, Vec<Term>)>,
    pub imprecise: bool,
    pub old: BTreeMap<String, Term>,
}

impl SymState {
    /// Adds `lhs op rhs` to the path condition; non-linear facts are dropped.
    pub fn assume(&mut self, lhs: &Term, op: RelOp, rhs: &Term) {
        if let Ok(cs) = to_linear(lhs, op, rhs) {
            self.path.extend(cs);
        }
    }

    pub fn grant(&mut self, slot: &str, value: Term) {
        self.perms.insert(slot.to_string());
        self.heap.insert(slot.to_string(), value);
    }

    pub fn revoke(&mut self, slot: &str) {
        self.perms.remove(slot);
        self.heap.remove(slot);
    }
}

/// Hands out fresh uint64 variables.
#[derive(Debug, Default)]
pub struct Fresh {
    next: Var,
}

impl Fresh {
    pub fn var(&mut self) -> Term {
        let v = self.next;
        self.next += 1;
        Term::Var(v)
    }
}

/// Leaves of a specification expression.
pub enum Leaf<'a> {
    Name(&'a str),
    Old(&'a str),
    Result,
}

/// Translates `e` into a term, or `None` when some leaf has no value.
pub fn spec_term(e: &Expr, leaf: &mut dyn FnMut(Leaf<'_>) -> Option<Term>) -> Option<Term> {
    Some(match e {
        Expr::Int(v) => Term::Const(*v),
        Expr::Name(n) => leaf(Leaf::Name(n))?,
        Expr::Old(g) => leaf(Leaf::Old(g))?,
        Expr::Result => leaf(Leaf::Result)?,
        Expr::Bin(op, l, r) => {
            let a = spec_term(l, leaf)?;
            let b = spec_term(r, leaf)?;
            Term::bin(*op, a, b)
        }
    })
}

/// `t <= 2^64-1` when `t` is a sum or product, recorded after it is computed.
pub fn no_overflow_fact(st: &mut SymState, t: &Term) {
    if let Term::Bin(BinOp::Add | BinOp::Mul, ..) = t {
        st.assume(t, RelOp::Le, &Term::Const(U64_MAX as u64));
    }
}
