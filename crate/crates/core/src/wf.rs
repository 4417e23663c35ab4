//! Well-formedness rules shared by every downstream stage.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::ast::*;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub loc: SourceLoc,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.loc, self.message)
    }
}

/// Which kinds of statements the checked program may contain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Source,
    Woven,
}

pub fn well_formed_program(p: &Program) -> Vec<Diagnostic> {
    well_formed(p, Stage::Source)
}

pub fn well_formed(p: &Program, stage: Stage) -> Vec<Diagnostic> {
    let mut cx = Wf {
        program: p,
        stage,
        out: Vec::new(),
    };
    let mut names = BTreeSet::new();
    for c in &p.contracts {
        if !names.insert(&c.name) {
            cx.diag(c.loc, format!("duplicate contract `{}`", c.name));
        }
        cx.contract(c);
    }
    cx.out
}

struct Wf<'a> {
    program: &'a Program,
    stage: Stage,
    out: Vec<Diagnostic>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Position {
    Requires,
    Ensures,
}

impl<'a> Wf<'a> {
    fn diag(&mut self, loc: SourceLoc, message: String) {
        self.out.push(Diagnostic { loc, message });
    }

    fn contract(&mut self, c: &'a Contract) {
        let mut seen = BTreeSet::new();
        for g in &c.globals {
            if !seen.insert(g) {
                self.diag(c.loc, format!("duplicate global `{g}` in `{}`", c.name));
            }
        }
        if c.is_extern && !c.globals.is_empty() {
            self.diag(c.loc, format!("extern contract `{}` cannot declare globals", c.name));
        }
        if c.is_extern && !c.predicates.is_empty() {
            self.diag(c.loc, format!("extern contract `{}` cannot declare predicates", c.name));
        }
        let mut seen = BTreeSet::new();
        for pred in &c.predicates {
            if !seen.insert(&pred.name) {
                self.diag(pred.loc, format!("duplicate predicate `{}`", pred.name));
            }
            self.predicate(c, pred);
        }
        let mut seen = BTreeSet::new();
        for m in &c.methods {
            if !seen.insert(&m.name) {
                self.diag(m.loc, format!("duplicate method `{}`", m.name));
            }
            self.method(c, m);
        }
    }

    fn predicate(&mut self, c: &Contract, pred: &Predicate) {
        let mut has_unknown = false;
        let mut bad_special = false;
        let mut has_acc = false;
        collect_bool(&pred.body, &mut |b| match b {
            BoolExpr::Unknown => has_unknown = true,
            BoolExpr::Truthy(_) => bad_special = true,
            BoolExpr::Acc(_) => has_acc = true,
            _ => {}
        });
        if has_acc {
            self.diag(pred.loc, format!("predicate `{}` cannot mention `acc`", pred.name));
        }
        if has_unknown {
            self.diag(
                pred.loc,
                format!("predicate `{}` must be precise (no `?` in its body)", pred.name),
            );
        }
        if bad_special {
            self.diag(pred.loc, format!("predicate `{}` uses a number as a condition", pred.name));
        }
        let mut exprs = Vec::new();
        pred.body.exprs(&mut exprs);
        for e in exprs {
            let (old, result) = e.mentions_old_or_result();
            if old || result {
                self.diag(pred.loc, "`old`/`result` are not allowed in predicate bodies".into());
            }
        }
        for p in &pred.params {
            if c.is_global(p) {
                self.diag(pred.loc, format!("predicate parameter `{p}` shadows a global"));
            }
        }
    }

    fn method(&mut self, c: &Contract, m: &Method) {
        for p in &m.params {
            if c.is_global(p) {
                self.diag(m.loc, format!("parameter `{p}` shadows a global"));
            }
        }
        if !c.is_extern && m.body == MethodBody::Opaque {
            self.diag(m.loc, format!("only extern methods may be `opaque` (`{}`)", m.name));
        }
        if m.stmts().is_empty() && m.body != MethodBody::Opaque {
            self.diag(m.loc, format!("method `{}` has an empty body", m.name));
        }

        self.formula_positions(&m.requires.formula, m, m.requires.loc, Position::Requires);
        self.formula_positions(&m.ensures.formula, m, m.ensures.loc, Position::Ensures);

        if c.is_extern {
            if m.requires.formula.atoms().any(|a| a.is_acc()) {
                self.diag(m.requires.loc, "extern methods cannot require `acc`".into());
            }
            if m.ensures.formula.atoms().next().is_some() || !m.ensures.formula.is_imprecise() {
                self.diag(
                    m.ensures.loc,
                    "unverified extern methods can only promise `ensures ?`".into(),
                );
            }
        } else {
            self.framing(c, m);
        }

        // an imprecise precondition may grant any slot
        let requires_acc: BTreeSet<String> = if m.requires.formula.is_imprecise() {
            c.globals.iter().cloned().collect()
        } else {
            m.requires.formula.acc_slots().into_iter().map(String::from).collect()
        };
        for a in m.ensures.formula.atoms() {
            for e in a.exprs() {
                self.old_slots(e, c, &requires_acc, m.ensures.loc);
            }
        }

        if self.stage == Stage::Source && !m.exit_checks.is_empty() {
            self.diag(m.loc, "source programs cannot contain woven checks".into());
        }

        self.block(c, m, m.stmts());
        if m.returns && m.body != MethodBody::Opaque && !block_returns(m.stmts()) {
            self.diag(m.loc, format!("method `{}` may finish without returning a value", m.name));
        }
    }

    fn old_slots(&mut self, e: &Expr, c: &Contract, requires_acc: &BTreeSet<String>, loc: SourceLoc) {
        match e {
            Expr::Old(g) => {
                if !c.is_global(g) {
                    self.diag(loc, format!("`old({g})` must name a global slot"));
                } else if !requires_acc.contains(g) {
                    self.diag(loc, format!("`old({g})` needs `acc({g})` in the precondition"));
                }
            }
            Expr::Bin(_, l, r) => {
                self.old_slots(l, c, requires_acc, loc);
                self.old_slots(r, c, requires_acc, loc);
            }
            _ => {}
        }
    }

    fn formula_positions(&mut self, f: &Formula, m: &Method, loc: SourceLoc, pos: Position) {
        for a in f.atoms() {
            for e in a.exprs() {
                let (old, result) = e.mentions_old_or_result();
                if old && pos != Position::Ensures {
                    self.diag(loc, "`old(...)` is only allowed in `ensures`".into());
                }
                if result {
                    if pos != Position::Ensures {
                        self.diag(loc, "`result` is only allowed in `ensures`".into());
                    } else if !m.returns {
                        self.diag(
                            loc,
                            format!("`result` used but `{}` returns nothing", m.name),
                        );
                    }
                }
            }
        }
    }

    fn framing(&mut self, c: &Contract, m: &Method) {
        let pre = &m.requires;
        if !pre.formula.is_imprecise() && !is_self_framed(&pre.formula, c).unwrap_or(true) {
            self.diag(pre.loc, format!("`{}` is not self-framed", pre.formula));
        }
        // postconditions may read slots the precondition grants
        let granted: BTreeSet<String> = m
            .requires
            .formula
            .acc_slots()
            .into_iter()
            .map(String::from)
            .collect();
        let f = &m.ensures.formula;
        if !f.is_imprecise() && !pre.formula.is_imprecise() && !framed_by(f, c, &granted).unwrap_or(true) {
            self.diag(
                m.ensures.loc,
                format!("`{f}` reads slots neither it nor the precondition grants"),
            );
        }
    }

    fn cond(&mut self, b: &BoolExpr, loc: SourceLoc) {
        let mut bad = false;
        collect_bool(b, &mut |n| {
            if matches!(n, BoolExpr::Acc(_) | BoolExpr::Pred(..) | BoolExpr::Unknown) {
                bad = true;
            }
        });
        if bad {
            self.diag(loc, format!("condition `{b}` may only combine comparisons"));
        }
        let mut exprs = Vec::new();
        b.exprs(&mut exprs);
        for e in exprs {
            self.plain_expr(e, loc);
        }
    }

    fn plain_expr(&mut self, e: &Expr, loc: SourceLoc) {
        let (old, result) = e.mentions_old_or_result();
        if old || result {
            self.diag(loc, "`old`/`result` are only allowed in `ensures`".into());
        }
    }

    fn block(&mut self, c: &Contract, m: &Method, stmts: &[Stmt]) {
        for s in stmts {
            match &s.kind {
                StmtKind::Assign { target, value } => {
                    self.plain_expr(value, s.loc);
                    if m.params.contains(target) {
                        self.diag(s.loc, format!("cannot assign to parameter `{target}`"));
                    }
                }
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    self.cond(cond, s.loc);
                    self.block(c, m, then_body);
                    self.block(c, m, else_body);
                }
                StmtKind::While {
                    cond,
                    invariant,
                    body,
                } => {
                    self.cond(cond, s.loc);
                    self.ghost_formula(c, invariant, s.loc, "loop invariant");
                    self.block(c, m, body);
                }
                StmtKind::Call {
                    target,
                    contract,
                    method,
                    args,
                } => {
                    for a in args {
                        self.plain_expr(a, s.loc);
                    }
                    if let Some(t) = target {
                        if c.is_global(t) {
                            self.diag(s.loc, format!("call results must be bound to a local, not `{t}`"));
                        }
                        if let Some((_, callee)) = self.program.method(contract, method) {
                            if !callee.returns {
                                self.diag(
                                    s.loc,
                                    format!("`{contract}.{method}` returns nothing to bind"),
                                );
                            }
                        }
                    }
                }
                StmtKind::Return(e) => {
                    self.plain_expr(e, s.loc);
                    if !m.returns {
                        self.diag(s.loc, format!("`{}` does not return a value", m.name));
                    }
                }
                StmtKind::Assert(f) => self.ghost_formula(c, f, s.loc, "assertion"),
                StmtKind::Check(_) => {
                    if self.stage == Stage::Source {
                        self.diag(s.loc, "source programs cannot contain woven checks".into());
                    }
                }
            }
        }
    }

    fn ghost_formula(&mut self, c: &Contract, f: &Formula, loc: SourceLoc, what: &str) {
        for a in f.atoms() {
            for e in a.exprs() {
                self.plain_expr(e, loc);
            }
        }
        if !c.is_extern && !f.is_imprecise() && !is_self_framed(f, c).unwrap_or(true) {
            self.diag(loc, format!("{what} `{f}` is not self-framed"));
        }
    }
}

/// True iff every path through `stmts` ends in `return`.
pub fn block_returns(stmts: &[Stmt]) -> bool {
    stmts.iter().any(|s| match &s.kind {
        StmtKind::Return(_) => true,
        StmtKind::If {
            then_body,
            else_body,
            ..
        } => block_returns(then_body) && block_returns(else_body),
        _ => false,
    })
}
