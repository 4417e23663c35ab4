use std::collections::{BTreeMap, BTreeSet};

use crate::ast::*;
use crate::obligation::{Insertion, ObligationKind};
use crate::prover::{check_sat, entails, LinAtom, ProofResult, Term};

use super::state::{no_overflow_fact, spec_term, Fresh, Leaf, SymState};
use super::{
    MethodReport, MethodStatus, ProverStats, Reason, ResidualCheck, Severity, StaticDiagnostic,
};

/// Disjuncts allowed when splitting a condition into paths.
const MAX_DISJUNCTS: usize = 32;

pub(super) struct MethodOutcome {
    pub report: MethodReport,
    pub stats: ProverStats,
    pub dump: String,
}

/// Why a path stopped early. Diagnostics are recorded when the stop happens.
enum Stop {
    Doomed,
    Error,
}

type Flow<T> = Result<T, Stop>;

enum Goal {
    Access(String),
    Cmp(Term, RelOp, Term),
    Pred(String, Vec<Term>),
    /// Some value the goal depends on is unknown.
    Opaque,
}

/// Boolean condition over terms.
enum BTerm {
    Cmp(Term, RelOp, Term),
    And(Box<BTerm>, Box<BTerm>),
    Or(Box<BTerm>, Box<BTerm>),
    Not(Box<BTerm>),
    Opaque,
}

type Conj = Vec<(Term, RelOp, Term)>;

/// How the leaves of a specification formula get their values.
struct SpecEnv {
    vars: BTreeMap<String, Term>,
    old: BTreeMap<String, Term>,
    result: Option<Term>,
    /// Whether bare names may refer to the verified contract's globals.
    globals: bool,
}

impl SpecEnv {
    fn locals(st: &SymState) -> SpecEnv {
        SpecEnv {
            vars: st.store.clone(),
            old: st.old.clone(),
            result: None,
            globals: true,
        }
    }
}

struct Verifier<'p> {
    contract: &'p Contract,
    program: &'p Program,
    method: &'p Method,
    fresh: Fresh,
    stats: ProverStats,
    residuals: BTreeMap<(Insertion, ObligationKind, SourceLoc, String), ResidualCheck>,
    diags: Vec<StaticDiagnostic>,
    errors: bool,
    paths_ok: usize,
    paths_doomed: usize,
    site: SourceLoc,
    insertion: Insertion,
    ordinal: u32,
    dump_on: bool,
    dump: String,
}

pub(super) fn verify_method(p: &Program, c: &Contract, m: &Method, dump_on: bool) -> MethodOutcome {
    let mut v = Verifier {
        contract: c,
        program: p,
        method: m,
        fresh: Fresh::default(),
        stats: ProverStats::default(),
        residuals: BTreeMap::new(),
        diags: Vec::new(),
        errors: false,
        paths_ok: 0,
        paths_doomed: 0,
        site: m.requires.loc,
        insertion: Insertion::AtEntry,
        ordinal: 0,
        dump_on,
        dump: String::new(),
    };
    v.run();
    let residuals: Vec<ResidualCheck> = v.residuals.into_values().collect();
    let all_doomed = v.paths_doomed > 0 && v.paths_ok == 0;
    let status = if v.errors || all_doomed {
        MethodStatus::StaticError
    } else if residuals.is_empty() {
        MethodStatus::Verified
    } else {
        MethodStatus::VerifiedWithResiduals
    };
    let mut diags = v.diags;
    if all_doomed {
        for d in &mut diags {
            if d.reason == Reason::AlwaysFails {
                d.severity = Severity::Error;
            }
        }
    }
    MethodOutcome {
        report: MethodReport {
            name: format!("{}.{}", c.name, m.name),
            status,
            residuals,
            diagnostics: diags,
        },
        stats: v.stats,
        dump: v.dump,
    }
}

impl<'p> Verifier<'p> {
    fn run(&mut self) {
        let m = self.method;
        let mut st = SymState::default();
        for p in &m.params {
            let t = self.fresh.var();
            st.store.insert(p.clone(), t);
        }
        let env = SpecEnv::locals(&st);
        self.produce(&mut st, &m.requires.formula, &env, true);
        if check_sat(&st.path).is_unsat() {
            self.diag(
                Severity::Warning,
                Reason::VacuousPrecondition,
                None,
                None,
                m.requires.loc,
                format!("precondition of `{}` is unsatisfiable; the method verifies vacuously", m.name),
            );
            return;
        }
        st.old = st.heap.clone();
        for end in self.block(st, m.stmts()) {
            self.exit(end, None);
        }
    }

    fn diag(
        &mut self,
        severity: Severity,
        reason: Reason,
        kind: Option<ObligationKind>,
        payload: Option<String>,
        loc: SourceLoc,
        message: String,
    ) {
        let d = StaticDiagnostic {
            severity,
            reason,
            kind,
            payload,
            line: loc.line,
            col: loc.col,
            message,
        };
        if !self.diags.contains(&d) {
            self.diags.push(d);
        }
    }

    fn begin(&mut self, site: SourceLoc, insertion: Insertion) {
        self.site = site;
        self.insertion = insertion;
        self.ordinal = 0;
    }

    // ---- obligations -------------------------------------------------------

    fn oblige(&mut self, st: &mut SymState, kind: ObligationKind, payload: Atom, goal: Goal) -> Flow<()> {
        let ordinal = self.ordinal;
        self.ordinal += 1;
        let verdict = match &goal {
            Goal::Access(g) if st.perms.contains(g) => ProofResult::Proved,
            Goal::Access(_) | Goal::Opaque => ProofResult::Unknown,
            Goal::Cmp(l, op, r) => self.query(st, l, *op, r, kind, &payload),
            Goal::Pred(name, args) => self.pred_verdict(st, name, args),
        };
        if verdict == ProofResult::Proved {
            return Ok(());
        }
        let text = payload.to_string();
        if st.imprecise {
            let key = (self.insertion, kind, self.site, text.clone());
            self.residuals.entry(key).or_insert(ResidualCheck {
                id: String::new(),
                kind,
                payload,
                line: self.site.line,
                col: self.site.col,
                insertion: self.insertion,
                ordinal,
            });
            if verdict == ProofResult::Disproved {
                self.diag(
                    Severity::Warning,
                    Reason::AlwaysFails,
                    Some(kind),
                    Some(text.clone()),
                    self.site,
                    format!("{kind} `{text}` is false on this path; its run-time check always fails"),
                );
                self.paths_doomed += 1;
                return Err(Stop::Doomed);
            }
            self.assume_goal(st, goal);
            return Ok(());
        }
        let (reason, what) = match (&goal, verdict) {
            (_, ProofResult::Disproved) => (Reason::Violated, "is violated"),
            (Goal::Access(_), _) => (Reason::Unprovable, "needs a permission the method does not hold"),
            _ => (Reason::Unprovable, "cannot be proved"),
        };
        self.diag(
            Severity::Error,
            reason,
            Some(kind),
            Some(text.clone()),
            self.site,
            format!("{kind} `{text}` {what}"),
        );
        self.errors = true;
        Err(Stop::Error)
    }

    fn query(
        &mut self,
        st: &SymState,
        l: &Term,
        op: RelOp,
        r: &Term,
        kind: ObligationKind,
        payload: &Atom,
    ) -> ProofResult {
        self.stats.queries += 1;
        let verdict = match LinAtom::new(l, op, r) {
            Ok(goal) => entails(&st.path, &goal),
            Err(_) => ProofResult::Unknown,
        };
        match verdict {
            ProofResult::Proved => self.stats.proved += 1,
            ProofResult::Disproved => self.stats.disproved += 1,
            ProofResult::Unknown => self.stats.unknown += 1,
        }
        if self.dump_on {
            self.dump.push_str(&format!(
                "# {}.{} {kind} `{payload}` at {}: {l} {} {r} => {verdict:?}\n",
                self.contract.name,
                self.method.name,
                self.site,
                op.symbol()
            ));
            self.dump.push_str(&st.path.dump());
        }
        verdict
    }

    fn pred_verdict(&mut self, st: &SymState, name: &str, args: &[Term]) -> ProofResult {
        if st.preds.iter().any(|(p, a)| p == name && a == args) {
            return ProofResult::Proved;
        }
        let Some(facts) = self.unfold(st, name, args) else {
            return ProofResult::Unknown;
        };
        let payload = Atom::Pred(name.to_string(), Vec::new());
        for fact in facts {
            let Some((l, op, r)) = fact else {
                return ProofResult::Unknown;
            };
            if self.query(st, &l, op, &r, ObligationKind::Assert, &payload) != ProofResult::Proved {
                return ProofResult::Unknown;
            }
        }
        ProofResult::Proved
    }

    /// One-level unfolding of a predicate whose body is a conjunction of
    /// comparisons. Inner `None`s mark comparisons over unknown values.
    fn unfold(&self, st: &SymState, name: &str, args: &[Term]) -> Option<Vec<Option<(Term, RelOp, Term)>>> {
        let pred = self.contract.predicate(name)?;
        let mut cmps = Vec::new();
        if !conjunction(&pred.body, &mut cmps) {
            return None;
        }
        let binding: BTreeMap<&str, &Term> =
            pred.params.iter().map(String::as_str).zip(args.iter()).collect();
        let contract = self.contract;
        let mut leaf = |l: Leaf<'_>| match l {
            Leaf::Name(n) => match binding.get(n) {
                Some(t) => Some((*t).clone()),
                None if contract.is_global(n) => st.heap.get(n).cloned(),
                None => None,
            },
            _ => None,
        };
        Some(
            cmps.into_iter()
                .map(|(l, op, r)| Some((spec_term(l, &mut leaf)?, op, spec_term(r, &mut leaf)?)))
                .collect(),
        )
    }

    fn assume_goal(&mut self, st: &mut SymState, goal: Goal) {
        match goal {
            Goal::Access(g) => {
                let t = self.fresh.var();
                st.grant(&g, t);
            }
            Goal::Cmp(l, op, r) => st.assume(&l, op, &r),
            Goal::Pred(name, args) => self.assume_pred(st, name, args),
            Goal::Opaque => {}
        }
    }

    fn assume_pred(&mut self, st: &mut SymState, name: String, args: Vec<Term>) {
        if let Some(facts) = self.unfold(st, &name, &args) {
            for (l, op, r) in facts.into_iter().flatten() {
                st.assume(&l, op, &r);
            }
        }
        st.preds.push((name, args));
    }

    // ---- formulas ----------------------------------------------------------

    fn spec_value(&self, st: &SymState, env: &SpecEnv, e: &Expr) -> Option<Term> {
        let contract = self.contract;
        spec_term(e, &mut |l| match l {
            Leaf::Name(n) => match env.vars.get(n) {
                Some(t) => Some(t.clone()),
                None if env.globals && contract.is_global(n) => st.heap.get(n).cloned(),
                None => None,
            },
            Leaf::Old(g) => env.old.get(g).cloned(),
            Leaf::Result => env.result.clone(),
        })
    }

    fn produce(&mut self, st: &mut SymState, f: &Formula, env: &SpecEnv, warn_dup: bool) {
        for g in f.acc_slots() {
            if st.perms.contains(g) {
                if warn_dup {
                    self.diag(
                        Severity::Warning,
                        Reason::DuplicatePermission,
                        None,
                        Some(format!("acc({g})")),
                        self.site,
                        format!("`acc({g})` is produced while already held"),
                    );
                    let t = self.fresh.var();
                    st.grant(g, t);
                }
            } else {
                let t = self.fresh.var();
                st.grant(g, t);
            }
        }
        for a in f.value_atoms() {
            match a {
                Atom::Cmp(l, op, r) => {
                    if let (Some(x), Some(y)) = (self.spec_value(st, env, l), self.spec_value(st, env, r)) {
                        st.assume(&x, *op, &y);
                    }
                }
                Atom::Pred(p, args) if env.globals => {
                    let terms: Option<Vec<Term>> =
                        args.iter().map(|e| self.spec_value(st, env, e)).collect();
                    let readable = atom_reads(a, self.contract).iter().all(|g| st.perms.contains(g));
                    if let (Some(terms), true) = (terms, readable) {
                        self.assume_pred(st, p.clone(), terms);
                    }
                }
                _ => {}
            }
        }
        if f.is_imprecise() {
            st.imprecise = true;
        }
    }

    /// Consumes `f`: `acc` atoms first, then each value atom preceded by
    /// access obligations for the slots it reads. `shown` maps an atom to the
    /// text used as its run-time payload.
    fn consume(
        &mut self,
        st: &mut SymState,
        f: &Formula,
        env: &SpecEnv,
        kind: ObligationKind,
        remove_acc: bool,
        shown: &dyn Fn(&Atom) -> Atom,
    ) -> Flow<()> {
        for g in f.acc_slots() {
            let atom = Atom::Acc(g.to_string());
            self.oblige(st, kind, atom, Goal::Access(g.to_string()))?;
        }
        for a in f.value_atoms() {
            let payload = shown(a);
            for g in atom_reads(&payload, self.contract) {
                self.oblige(st, ObligationKind::Access, Atom::Acc(g.clone()), Goal::Access(g))?;
            }
            let goal = match a {
                Atom::Cmp(l, op, r) => match (self.spec_value(st, env, l), self.spec_value(st, env, r)) {
                    (Some(x), Some(y)) => Goal::Cmp(x, *op, y),
                    _ => Goal::Opaque,
                },
                Atom::Pred(p, args) => {
                    let terms: Option<Vec<Term>> =
                        args.iter().map(|e| self.spec_value(st, env, e)).collect();
                    match terms {
                        Some(t) => Goal::Pred(p.clone(), t),
                        None => Goal::Opaque,
                    }
                }
                Atom::Acc(_) => unreachable!("value atoms exclude acc"),
            };
            self.oblige(st, kind, payload, goal)?;
        }
        if remove_acc {
            for g in f.acc_slots() {
                st.revoke(g);
            }
        }
        if f.is_imprecise() {
            st.imprecise = true;
        }
        Ok(())
    }

    // ---- expressions -------------------------------------------------------

    /// Post-order evaluation raising access, underflow and division
    /// obligations. Sums and products are queued in `pending` so their
    /// no-overflow facts are assumed once the statement has run.
    fn eval(&mut self, st: &mut SymState, e: &Expr, pending: &mut Vec<Term>) -> Flow<Term> {
        Ok(match e {
            Expr::Int(v) => Term::Const(*v),
            Expr::Name(n) if self.contract.is_global(n) => {
                self.oblige(st, ObligationKind::Access, Atom::Acc(n.clone()), Goal::Access(n.clone()))?;
                match st.heap.get(n) {
                    Some(t) => t.clone(),
                    None => self.fresh.var(),
                }
            }
            Expr::Name(n) => match st.store.get(n) {
                Some(t) => t.clone(),
                None => self.fresh.var(),
            },
            Expr::Old(_) | Expr::Result => self.fresh.var(),
            Expr::Bin(op, l, r) => {
                let a = self.eval(st, l, pending)?;
                let b = self.eval(st, r, pending)?;
                match op {
                    BinOp::Sub => {
                        let payload = Atom::cmp((**l).clone(), RelOp::Ge, (**r).clone());
                        let goal = Goal::Cmp(a.clone(), RelOp::Ge, b.clone());
                        self.oblige(st, ObligationKind::UnderflowSafety, payload, goal)?;
                    }
                    BinOp::Div | BinOp::Mod => {
                        let payload = Atom::cmp((**r).clone(), RelOp::Ne, Expr::Int(0));
                        let goal = Goal::Cmp(b.clone(), RelOp::Ne, Term::Const(0));
                        self.oblige(st, ObligationKind::DivisionSafety, payload, goal)?;
                    }
                    BinOp::Add | BinOp::Mul => {}
                }
                let t = Term::bin(*op, a, b);
                if matches!(op, BinOp::Add | BinOp::Mul) {
                    pending.push(t.clone());
                }
                t
            }
        })
    }

    fn cond(&mut self, st: &mut SymState, b: &BoolExpr, pending: &mut Vec<Term>) -> Flow<BTerm> {
        Ok(match b {
            BoolExpr::Cmp(l, op, r) => {
                let x = self.eval(st, l, pending)?;
                let y = self.eval(st, r, pending)?;
                BTerm::Cmp(x, *op, y)
            }
            BoolExpr::And(x, y) => {
                let a = self.cond(st, x, pending)?;
                BTerm::And(Box::new(a), Box::new(self.cond(st, y, pending)?))
            }
            BoolExpr::Or(x, y) => {
                let a = self.cond(st, x, pending)?;
                BTerm::Or(Box::new(a), Box::new(self.cond(st, y, pending)?))
            }
            BoolExpr::Not(x) => BTerm::Not(Box::new(self.cond(st, x, pending)?)),
            _ => BTerm::Opaque,
        })
    }

    /// Condition terms in `st` without raising obligations.
    fn cond_pure(&mut self, st: &SymState, b: &BoolExpr) -> BTerm {
        match b {
            BoolExpr::Cmp(l, op, r) => BTerm::Cmp(self.pure(st, l), *op, self.pure(st, r)),
            BoolExpr::And(x, y) => BTerm::And(Box::new(self.cond_pure(st, x)), Box::new(self.cond_pure(st, y))),
            BoolExpr::Or(x, y) => BTerm::Or(Box::new(self.cond_pure(st, x)), Box::new(self.cond_pure(st, y))),
            BoolExpr::Not(x) => BTerm::Not(Box::new(self.cond_pure(st, x))),
            _ => BTerm::Opaque,
        }
    }

    fn pure(&mut self, st: &SymState, e: &Expr) -> Term {
        match e {
            Expr::Int(v) => Term::Const(*v),
            Expr::Name(n) => match st.store.get(n).or_else(|| st.heap.get(n)) {
                Some(t) => t.clone(),
                None => self.fresh.var(),
            },
            Expr::Bin(op, l, r) => {
                let a = self.pure(st, l);
                let b = self.pure(st, r);
                Term::bin(*op, a, b)
            }
            Expr::Old(_) | Expr::Result => self.fresh.var(),
        }
    }

    /// Feasible successors of `st` where `b` evaluates to `positive`.
    fn fork(&self, st: &SymState, b: &BTerm, positive: bool) -> Vec<SymState> {
        let mut out = Vec::new();
        for conj in dnf(b, positive) {
            let mut next = st.clone();
            for (l, op, r) in &conj {
                next.assume(l, *op, r);
            }
            if !check_sat(&next.path).is_unsat() {
                out.push(next);
            }
        }
        out
    }

    // ---- statements --------------------------------------------------------

    fn block(&mut self, st: SymState, stmts: &[Stmt]) -> Vec<SymState> {
        let mut live = vec![st];
        for s in stmts {
            let mut next = Vec::new();
            for st in live {
                if let Ok(out) = self.stmt(st, s) {
                    next.extend(out);
                }
            }
            live = next;
            if live.is_empty() {
                break;
            }
        }
        live
    }

    fn stmt(&mut self, mut st: SymState, s: &Stmt) -> Flow<Vec<SymState>> {
        self.begin(s.loc, Insertion::BeforeStatement);
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let mut pending = Vec::new();
                let t = self.eval(&mut st, value, &mut pending)?;
                if self.contract.is_global(target) {
                    let atom = Atom::Acc(target.clone());
                    self.oblige(&mut st, ObligationKind::Access, atom, Goal::Access(target.clone()))?;
                    st.heap.insert(target.clone(), t);
                    self.forget_global_preds(&mut st);
                } else {
                    st.store.insert(target.clone(), t);
                }
                for t in &pending {
                    no_overflow_fact(&mut st, t);
                }
                Ok(vec![st])
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let mut pending = Vec::new();
                let b = self.cond(&mut st, cond, &mut pending)?;
                for t in &pending {
                    no_overflow_fact(&mut st, t);
                }
                let mut out = Vec::new();
                for branch in self.fork(&st, &b, true) {
                    out.extend(self.block(branch, then_body));
                }
                for branch in self.fork(&st, &b, false) {
                    out.extend(self.block(branch, else_body));
                }
                Ok(out)
            }
            StmtKind::While {
                cond,
                invariant,
                body,
            } => self.while_loop(st, s.loc, cond, invariant, body),
            StmtKind::Call {
                target,
                contract,
                method,
                args,
            } => {
                self.call(&mut st, target.as_deref(), contract, method, args)?;
                Ok(vec![st])
            }
            StmtKind::Return(e) => {
                let mut pending = Vec::new();
                let t = self.eval(&mut st, e, &mut pending)?;
                for p in &pending {
                    no_overflow_fact(&mut st, p);
                }
                self.exit(st, Some(t));
                Ok(Vec::new())
            }
            StmtKind::Assert(f) => {
                let env = SpecEnv::locals(&st);
                self.consume(&mut st, f, &env, ObligationKind::Assert, false, &|a| a.clone())?;
                Ok(vec![st])
            }
            StmtKind::Check(_) => Ok(vec![st]),
        }
    }

    fn forget_global_preds(&self, st: &mut SymState) {
        let c = self.contract;
        st.preds.retain(|(p, _)| predicate_reads(p, c).is_empty());
    }

    fn exit(&mut self, mut st: SymState, result: Option<Term>) {
        let m = self.method;
        self.begin(m.ensures.loc, Insertion::AtExit);
        let env = SpecEnv {
            vars: st.store.clone(),
            old: st.old.clone(),
            result,
            globals: true,
        };
        let kind = ObligationKind::Postcondition;
        if self.consume(&mut st, &m.ensures.formula, &env, kind, true, &|a| a.clone()).is_ok() {
            self.paths_ok += 1;
        }
    }

    fn call(
        &mut self,
        st: &mut SymState,
        target: Option<&str>,
        contract: &str,
        method: &str,
        args: &[Expr],
    ) -> Flow<()> {
        let mut pending = Vec::new();
        let mut terms = Vec::new();
        for a in args {
            terms.push(self.eval(st, a, &mut pending)?);
        }
        let Some((cc, callee)) = self.program.method(contract, method) else {
            return Ok(());
        };
        let same = !cc.is_extern && cc.name == self.contract.name;
        let bound: BTreeMap<String, Term> =
            callee.params.iter().cloned().zip(terms.iter().cloned()).collect();
        if same || cc.is_extern {
            let env = SpecEnv {
                vars: bound.clone(),
                old: BTreeMap::new(),
                result: None,
                globals: same,
            };
            let by_arg: BTreeMap<&str, &Expr> =
                callee.params.iter().map(String::as_str).zip(args.iter()).collect();
            let shown = |a: &Atom| a.substitute(&|n| by_arg.get(n).map(|e| (*e).clone()));
            let kind = ObligationKind::PreconditionAtCall;
            self.consume(st, &callee.requires.formula, &env, kind, same, &shown)?;
        }
        for t in &pending {
            no_overflow_fact(st, t);
        }

        // the callee may re-enter and change any slot
        let before = st.heap.clone();
        for g in st.perms.clone() {
            let t = self.fresh.var();
            st.heap.insert(g, t);
        }
        self.forget_global_preds(st);
        let result = self.fresh.var();
        if let Some(t) = target {
            st.store.insert(t.to_string(), result.clone());
        }

        if cc.is_extern {
            st.imprecise = true;
            return Ok(());
        }
        if same {
            let mut old = BTreeMap::new();
            for g in &cc.globals {
                let t = match before.get(g) {
                    Some(t) => t.clone(),
                    None => self.fresh.var(),
                };
                old.insert(g.clone(), t);
            }
            let env = SpecEnv {
                vars: bound,
                old,
                result: Some(result),
                globals: true,
            };
            self.produce(st, &callee.ensures.formula, &env, true);
        } else {
            // facts about another contract's storage are meaningless here
            let env = SpecEnv {
                vars: bound,
                old: BTreeMap::new(),
                result: Some(result),
                globals: false,
            };
            let atoms: Vec<Atom> = callee
                .ensures
                .formula
                .value_atoms()
                .filter(|a| matches!(a, Atom::Cmp(..)))
                .cloned()
                .collect();
            self.produce(st, &Formula::precise(atoms), &env, false);
            if callee.requires.formula.is_imprecise() || callee.ensures.formula.is_imprecise() {
                st.imprecise = true;
            }
        }
        Ok(())
    }

    fn while_loop(
        &mut self,
        mut st: SymState,
        loc: SourceLoc,
        cond: &BoolExpr,
        inv: &Formula,
        body: &[Stmt],
    ) -> Flow<Vec<SymState>> {
        let env = SpecEnv::locals(&st);
        let id = |a: &Atom| a.clone();
        self.consume(&mut st, inv, &env, ObligationKind::LoopInvariant, false, &id)?;
        let mut pending = Vec::new();
        self.cond(&mut st, cond, &mut pending)?;

        let base = self.loop_base(&st, inv, body);

        for entry in {
            let b = self.cond_pure(&base, cond);
            self.fork(&base, &b, true)
        } {
            for mut end in self.block(entry, body) {
                self.begin(loc, Insertion::LoopEnd);
                let env = SpecEnv::locals(&end);
                let kind = ObligationKind::LoopInvariantPreserved;
                if self.consume(&mut end, inv, &env, kind, false, &id).is_err() {
                    continue;
                }
                let mut pending = Vec::new();
                if self.cond(&mut end, cond, &mut pending).is_ok() {
                    self.paths_ok += 1;
                }
            }
        }

        let b = self.cond_pure(&base, cond);
        Ok(self.fork(&base, &b, false))
    }

    /// State at the loop head of an arbitrary iteration.
    fn loop_base(&mut self, st: &SymState, inv: &Formula, body: &[Stmt]) -> SymState {
        let mut scan = LoopScan::default();
        scan.block(self.program, self.contract, body);
        let mut base = st.clone();
        for g in &scan.call_consumed {
            base.revoke(g);
        }
        for g in base.perms.clone() {
            if scan.has_call || scan.globals.contains(&g) {
                let t = self.fresh.var();
                base.heap.insert(g, t);
            }
        }
        for l in &scan.locals {
            let t = self.fresh.var();
            base.store.insert(l.clone(), t);
        }
        if scan.has_call || !scan.globals.is_empty() {
            self.forget_global_preds(&mut base);
        }
        let env = SpecEnv::locals(&base);
        self.produce(&mut base, inv, &env, false);
        base
    }
}

#[derive(Default)]
struct LoopScan {
    locals: BTreeSet<String>,
    globals: BTreeSet<String>,
    has_call: bool,
    call_consumed: BTreeSet<String>,
}

impl LoopScan {
    fn block(&mut self, p: &Program, c: &Contract, stmts: &[Stmt]) {
        for s in stmts {
            match &s.kind {
                StmtKind::Assign { target, .. } => {
                    if c.is_global(target) {
                        self.globals.insert(target.clone());
                    } else {
                        self.locals.insert(target.clone());
                    }
                }
                StmtKind::Call {
                    target,
                    contract,
                    method,
                    ..
                } => {
                    self.has_call = true;
                    if let Some(t) = target {
                        self.locals.insert(t.clone());
                    }
                    if let Some((cc, callee)) = p.method(contract, method) {
                        if !cc.is_extern && cc.name == c.name {
                            self.call_consumed
                                .extend(callee.requires.formula.acc_slots().into_iter().map(String::from));
                        }
                    }
                }
                StmtKind::If {
                    then_body,
                    else_body,
                    ..
                } => {
                    self.block(p, c, then_body);
                    self.block(p, c, else_body);
                }
                StmtKind::While { body, .. } => self.block(p, c, body),
                _ => {}
            }
        }
    }
}

/// Collects the comparisons of a pure conjunction; false for anything else.
fn conjunction<'b>(b: &'b BoolExpr, out: &mut Vec<(&'b Expr, RelOp, &'b Expr)>) -> bool {
    match b {
        BoolExpr::Cmp(l, op, r) => {
            out.push((l, *op, r));
            true
        }
        BoolExpr::And(x, y) => conjunction(x, out) && conjunction(y, out),
        _ => false,
    }
}

/// Disjunctive normal form of `b` (or of its negation). An empty conjunction
/// means "no information".
fn dnf(b: &BTerm, positive: bool) -> Vec<Conj> {
    let out = match (b, positive) {
        (BTerm::Cmp(l, op, r), true) => vec![vec![(l.clone(), *op, r.clone())]],
        (BTerm::Cmp(l, op, r), false) => vec![vec![(l.clone(), op.negate(), r.clone())]],
        (BTerm::Not(x), p) => dnf(x, !p),
        (BTerm::And(x, y), true) | (BTerm::Or(x, y), false) => {
            let left = dnf(x, positive);
            let right = dnf(y, positive);
            let mut out = Vec::new();
            for a in &left {
                for b in &right {
                    let mut c = a.clone();
                    c.extend(b.iter().cloned());
                    out.push(c);
                }
            }
            out
        }
        (BTerm::Or(x, y), true) | (BTerm::And(x, y), false) => {
            let mut out = dnf(x, positive);
            out.extend(dnf(y, positive));
            out
        }
        (BTerm::Opaque, _) => vec![Vec::new()],
    };
    if out.len() > MAX_DISJUNCTS {
        vec![Vec::new()]
    } else {
        out
    }
}
