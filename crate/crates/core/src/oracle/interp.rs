//! Brute-force reference interpreter. Every obligation the static verifier
//! could raise is generated afresh for each statement and checked against
//! the concrete state before the statement runs.

use std::collections::BTreeMap;

use crate::ast::*;
use crate::obligation::{overflow_text, ObligationKey, ObligationKind};
use crate::vm::Ledger;

pub(super) const DEPTH_CAP: u32 = 1024;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(super) enum Stop {
    Violation(ObligationKey),
    /// Fuel or predicate depth ran out.
    Resource(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tenure {
    Fresh,
    Handed,
    Lent,
}

struct Activation<'p> {
    serial: usize,
    contract: &'p Contract,
    method: &'p Method,
    vars: BTreeMap<String, u64>,
    old: BTreeMap<String, u64>,
    result: Option<u64>,
    optimistic: bool,
}

enum Test {
    Own(String),
    Holds(Atom),
}

struct Ob {
    key: ObligationKey,
    test: Test,
}

enum Flow {
    Go,
    Ret(u64),
}

pub(super) struct Interp<'p> {
    prog: &'p Program,
    pub(super) store: Ledger,
    /// Per slot, the chain of holders; the last entry holds it now.
    owners: BTreeMap<(String, String), Vec<(usize, Tenure)>>,
    stack: Vec<Activation<'p>>,
    serial: usize,
    fuel: u64,
}

fn violation(kind: ObligationKind, site: SourceLoc, payload: String) -> Stop {
    Stop::Violation(ObligationKey::new(kind, site, payload))
}

impl<'p> Interp<'p> {
    pub(super) fn new(prog: &'p Program, store: Ledger, fuel: u64) -> Self {
        Interp {
            prog,
            store,
            owners: BTreeMap::new(),
            stack: Vec::new(),
            serial: 0,
            fuel,
        }
    }

    pub(super) fn locals(&self) -> BTreeMap<String, u64> {
        self.stack.last().map(|a| a.vars.clone()).unwrap_or_default()
    }

    pub(super) fn run(&mut self, contract: &str, method: &str, args: &[u64]) -> Result<Option<u64>, Stop> {
        let (c, m) = self.prog.method(contract, method).expect("known method");
        self.activate(c, m, args.to_vec())
    }

    fn top(&self) -> &Activation<'p> {
        &self.stack[self.stack.len() - 1]
    }

    fn lender(&self) -> Option<usize> {
        let n = self.stack.len();
        if n < 2 {
            None
        } else {
            Some(self.stack[n - 2].serial)
        }
    }

    fn burn(&mut self) -> Result<(), Stop> {
        if self.fuel == 0 {
            return Err(Stop::Resource("fuel"));
        }
        self.fuel -= 1;
        Ok(())
    }

    fn owner_key(&self, g: &str) -> (String, String) {
        (self.top().contract.name.clone(), g.to_string())
    }

    /// `acc(g)` in the current activation, taking the slot if optimism allows.
    fn own(&mut self, g: &str) -> bool {
        let key = self.owner_key(g);
        let me = self.top().serial;
        let optimistic = self.top().optimistic;
        let lender = self.lender();
        let chain = self.owners.entry(key).or_default();
        match chain.last() {
            Some((s, _)) if *s == me => true,
            _ if !optimistic => false,
            None => {
                chain.push((me, Tenure::Fresh));
                true
            }
            Some((s, _)) if Some(*s) == lender => {
                chain.push((me, Tenure::Lent));
                true
            }
            Some(_) => false,
        }
    }

    // ---- activations -------------------------------------------------------

    fn activate(&mut self, c: &'p Contract, m: &'p Method, args: Vec<u64>) -> Result<Option<u64>, Stop> {
        let outside = match self.stack.last() {
            Some(a) => a.contract.is_extern || a.contract.name != c.name,
            None => true,
        };
        self.serial += 1;
        let serial = self.serial;
        self.stack.push(Activation {
            serial,
            contract: c,
            method: m,
            vars: m.params.iter().cloned().zip(args).collect(),
            old: BTreeMap::new(),
            result: None,
            optimistic: c.is_extern || m.requires.formula.is_imprecise(),
        });
        if !c.is_extern {
            self.admit(m, outside)?;
        }
        let snapshot: BTreeMap<String, u64> = c
            .globals
            .iter()
            .map(|g| (g.clone(), self.store.get(&c.name, g)))
            .collect();
        self.stack.last_mut().unwrap().old = snapshot;

        let result = match &m.body {
            MethodBody::Opaque => {
                if m.returns {
                    Some(0)
                } else {
                    None
                }
            }
            MethodBody::Stmts(body) => match self.run_block(body)? {
                Flow::Ret(v) => Some(v),
                Flow::Go => None,
            },
        };
        self.stack.last_mut().unwrap().result = result;
        if !c.is_extern {
            let mut obs = Vec::new();
            self.formula_obs(&m.ensures.formula, ObligationKind::Postcondition, m.ensures.loc, &|a| a.clone(), &mut obs);
            self.discharge(&obs)?;
        }
        self.hand_back();
        self.stack.pop();
        if let Some(caller) = self.stack.last_mut() {
            let f = |x: &Formula| x.is_imprecise();
            if c.is_extern || f(&m.requires.formula) || f(&m.ensures.formula) {
                caller.optimistic = true;
            }
        }
        Ok(result)
    }

    fn admit(&mut self, m: &'p Method, outside: bool) -> Result<(), Stop> {
        let me = self.top().serial;
        let lender = self.lender();
        let loc = m.requires.loc;
        for g in m.requires.formula.acc_slots() {
            let key = self.owner_key(g);
            let chain = self.owners.entry(key).or_default();
            match chain.last() {
                None => chain.push((me, Tenure::Fresh)),
                Some((s, _)) if Some(*s) == lender => chain.push((me, Tenure::Handed)),
                Some(_) => {
                    return Err(violation(ObligationKind::Precondition, loc, format!("acc({g})")));
                }
            }
        }
        if outside {
            let mut obs = Vec::new();
            for a in m.requires.formula.value_atoms() {
                for g in atom_reads(a, self.top().contract) {
                    obs.push(Ob {
                        key: ObligationKey::new(ObligationKind::Access, loc, format!("acc({g})")),
                        test: Test::Own(g),
                    });
                }
                obs.push(Ob {
                    key: ObligationKey::new(ObligationKind::Precondition, loc, a.to_string()),
                    test: Test::Holds(a.clone()),
                });
            }
            self.discharge(&obs)?;
        }
        Ok(())
    }

    fn hand_back(&mut self) {
        let act = self.top();
        let me = act.serial;
        let keep: Vec<String> = if act.contract.is_extern {
            vec![]
        } else {
            act.method.ensures.formula.acc_slots().into_iter().map(String::from).collect()
        };
        let up = self.lender();
        for ((_, g), chain) in self.owners.iter_mut() {
            let Some(&(s, tenure)) = chain.last() else {
                continue;
            };
            if s != me {
                continue;
            }
            chain.pop();
            let listed = keep.contains(g);
            match (up, tenure) {
                (None, _) => chain.clear(),
                (Some(_), Tenure::Lent) => {}
                (Some(_), Tenure::Handed) if listed => {}
                (Some(caller), Tenure::Fresh) if listed => *chain = vec![(caller, Tenure::Fresh)],
                _ => chain.clear(),
            }
        }
    }

    // ---- obligations -------------------------------------------------------

    fn discharge(&mut self, obs: &[Ob]) -> Result<(), Stop> {
        for ob in obs {
            let ok = match &ob.test {
                Test::Own(g) => self.own(g),
                Test::Holds(a) => self.holds(a)?,
            };
            if !ok {
                return Err(Stop::Violation(ob.key.clone()));
            }
        }
        Ok(())
    }

    fn expr_obs(&self, e: &Expr, site: SourceLoc, out: &mut Vec<Ob>) {
        match e {
            Expr::Name(n) if self.top().contract.is_global(n) => out.push(Ob {
                key: ObligationKey::new(ObligationKind::Access, site, format!("acc({n})")),
                test: Test::Own(n.clone()),
            }),
            Expr::Bin(op, l, r) => {
                self.expr_obs(l, site, out);
                self.expr_obs(r, site, out);
                let (kind, atom) = match op {
                    BinOp::Sub => (
                        ObligationKind::UnderflowSafety,
                        Atom::Cmp((**l).clone(), RelOp::Ge, (**r).clone()),
                    ),
                    BinOp::Div | BinOp::Mod => (
                        ObligationKind::DivisionSafety,
                        Atom::Cmp((**r).clone(), RelOp::Ne, Expr::Int(0)),
                    ),
                    BinOp::Add | BinOp::Mul => return,
                };
                out.push(Ob {
                    key: ObligationKey::new(kind, site, atom.to_string()),
                    test: Test::Holds(atom),
                });
            }
            _ => {}
        }
    }

    fn cond_obs(&self, b: &BoolExpr, site: SourceLoc, out: &mut Vec<Ob>) {
        let mut es = Vec::new();
        b.exprs(&mut es);
        for e in es {
            self.expr_obs(e, site, out);
        }
    }

    fn formula_obs(
        &self,
        f: &Formula,
        kind: ObligationKind,
        site: SourceLoc,
        shown: &dyn Fn(&Atom) -> Atom,
        out: &mut Vec<Ob>,
    ) {
        for g in f.acc_slots() {
            out.push(Ob {
                key: ObligationKey::new(kind, site, format!("acc({g})")),
                test: Test::Own(g.to_string()),
            });
        }
        for a in f.value_atoms() {
            let payload = shown(a);
            for g in atom_reads(&payload, self.top().contract) {
                out.push(Ob {
                    key: ObligationKey::new(ObligationKind::Access, site, format!("acc({g})")),
                    test: Test::Own(g),
                });
            }
            out.push(Ob {
                key: ObligationKey::new(kind, site, payload.to_string()),
                test: Test::Holds(payload),
            });
        }
    }

    fn holds(&mut self, a: &Atom) -> Result<bool, Stop> {
        match a {
            Atom::Acc(g) => Ok(self.own(g)),
            Atom::Cmp(l, op, r) => Ok(compare(self.value(l), *op, self.value(r))),
            Atom::Pred(p, args) => {
                let vals: Vec<Option<i128>> = args.iter().map(|e| self.value(e)).collect();
                let c = self.top().contract;
                predicate(c, &self.store, p, &vals, 0)
            }
        }
    }

    /// Mathematical value over the integers.
    fn value(&self, e: &Expr) -> Option<i128> {
        let act = self.top();
        match e {
            Expr::Int(v) => Some(i128::from(*v)),
            Expr::Name(n) => Some(i128::from(match act.vars.get(n) {
                Some(v) => *v,
                None => self.store.get(&act.contract.name, n),
            })),
            Expr::Old(g) => act.old.get(g).map(|v| i128::from(*v)),
            Expr::Result => act.result.map(i128::from),
            Expr::Bin(op, l, r) => arith(*op, self.value(l)?, self.value(r)?),
        }
    }

    // ---- statements --------------------------------------------------------

    fn run_block(&mut self, body: &'p [Stmt]) -> Result<Flow, Stop> {
        for s in body {
            if let Flow::Ret(v) = self.run_stmt(s)? {
                return Ok(Flow::Ret(v));
            }
        }
        Ok(Flow::Go)
    }

    fn checked(&self) -> bool {
        !self.top().contract.is_extern
    }

    fn run_stmt(&mut self, s: &'p Stmt) -> Result<Flow, Stop> {
        let site = s.loc;
        match &s.kind {
            StmtKind::Assign { target, value } => {
                self.burn()?;
                if self.checked() {
                    let mut obs = Vec::new();
                    self.expr_obs(value, site, &mut obs);
                    if self.top().contract.is_global(target) {
                        obs.push(Ob {
                            key: ObligationKey::new(ObligationKind::Access, site, format!("acc({target})")),
                            test: Test::Own(target.clone()),
                        });
                    }
                    self.discharge(&obs)?;
                }
                let v = self.compute(value, site)?;
                let act = self.stack.last_mut().unwrap();
                if act.contract.is_global(target) {
                    let c = act.contract.name.clone();
                    self.store.set(&c, target, v);
                } else {
                    act.vars.insert(target.clone(), v);
                }
                Ok(Flow::Go)
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                self.burn()?;
                if self.checked() {
                    let mut obs = Vec::new();
                    self.cond_obs(cond, site, &mut obs);
                    self.discharge(&obs)?;
                }
                if self.test(cond, site)? {
                    self.run_block(then_body)
                } else {
                    self.run_block(else_body)
                }
            }
            StmtKind::While {
                cond,
                invariant,
                body,
            } => {
                let checked = self.checked();
                let id = |a: &Atom| a.clone();
                if checked {
                    let mut obs = Vec::new();
                    self.formula_obs(invariant, ObligationKind::LoopInvariant, site, &id, &mut obs);
                    self.cond_obs(cond, site, &mut obs);
                    self.discharge(&obs)?;
                }
                if invariant.is_imprecise() {
                    self.stack.last_mut().unwrap().optimistic = true;
                }
                loop {
                    self.burn()?;
                    if !self.test(cond, site)? {
                        return Ok(Flow::Go);
                    }
                    if let Flow::Ret(v) = self.run_block(body)? {
                        return Ok(Flow::Ret(v));
                    }
                    if checked {
                        let mut obs = Vec::new();
                        let kind = ObligationKind::LoopInvariantPreserved;
                        self.formula_obs(invariant, kind, site, &id, &mut obs);
                        self.cond_obs(cond, site, &mut obs);
                        self.discharge(&obs)?;
                    }
                }
            }
            StmtKind::Call {
                target,
                contract,
                method,
                args,
            } => {
                self.burn()?;
                let (cc, callee) = self.prog.method(contract, method).expect("resolved call");
                if self.checked() {
                    let mut obs = Vec::new();
                    for a in args {
                        self.expr_obs(a, site, &mut obs);
                    }
                    let here = self.top().contract;
                    if cc.is_extern || cc.name == here.name {
                        let subst: BTreeMap<&str, &Expr> =
                            callee.params.iter().map(String::as_str).zip(args).collect();
                        let shown = |a: &Atom| a.substitute(&|n| subst.get(n).map(|e| (*e).clone()));
                        let kind = ObligationKind::PreconditionAtCall;
                        self.formula_obs(&callee.requires.formula, kind, site, &shown, &mut obs);
                    }
                    self.discharge(&obs)?;
                }
                let mut vals = Vec::new();
                for a in args {
                    vals.push(self.compute(a, site)?);
                }
                let r = self.activate(cc, callee, vals)?;
                if let Some(t) = target {
                    self.stack.last_mut().unwrap().vars.insert(t.clone(), r.unwrap_or(0));
                }
                Ok(Flow::Go)
            }
            StmtKind::Return(e) => {
                self.burn()?;
                if self.checked() {
                    let mut obs = Vec::new();
                    self.expr_obs(e, site, &mut obs);
                    self.discharge(&obs)?;
                }
                Ok(Flow::Ret(self.compute(e, site)?))
            }
            StmtKind::Assert(f) => {
                if self.checked() {
                    let mut obs = Vec::new();
                    self.formula_obs(f, ObligationKind::Assert, site, &|a| a.clone(), &mut obs);
                    self.discharge(&obs)?;
                }
                if f.is_imprecise() {
                    self.stack.last_mut().unwrap().optimistic = true;
                }
                Ok(Flow::Go)
            }
            StmtKind::Check(_) => Ok(Flow::Go),
        }
    }

    /// Machine evaluation with uint64 panics.
    fn compute(&self, e: &Expr, site: SourceLoc) -> Result<u64, Stop> {
        match e {
            Expr::Int(v) => Ok(*v),
            Expr::Name(n) => {
                let act = self.top();
                Ok(match act.vars.get(n) {
                    Some(v) => *v,
                    None => self.store.get(&act.contract.name, n),
                })
            }
            Expr::Old(_) | Expr::Result => unreachable!("not an expression of code"),
            Expr::Bin(op, l, r) => {
                let a = self.compute(l, site)?;
                let b = self.compute(r, site)?;
                let out = match op {
                    BinOp::Add => a.checked_add(b),
                    BinOp::Mul => a.checked_mul(b),
                    BinOp::Sub => a.checked_sub(b),
                    BinOp::Div => a.checked_div(b),
                    BinOp::Mod => a.checked_rem(b),
                };
                out.ok_or_else(|| match op {
                    BinOp::Add | BinOp::Mul => violation(ObligationKind::Overflow, site, overflow_text(e)),
                    BinOp::Sub => violation(ObligationKind::UnderflowSafety, site, format!("{l} >= {r}")),
                    BinOp::Div | BinOp::Mod => violation(ObligationKind::DivisionSafety, site, format!("{r} != 0")),
                })
            }
        }
    }

    fn test(&self, b: &BoolExpr, site: SourceLoc) -> Result<bool, Stop> {
        match b {
            BoolExpr::Cmp(l, op, r) => {
                let x = self.compute(l, site)?;
                let y = self.compute(r, site)?;
                Ok(compare(Some(i128::from(x)), *op, Some(i128::from(y))))
            }
            BoolExpr::And(x, y) => {
                let (p, q) = (self.test(x, site)?, self.test(y, site)?);
                Ok(p && q)
            }
            BoolExpr::Or(x, y) => {
                let (p, q) = (self.test(x, site)?, self.test(y, site)?);
                Ok(p || q)
            }
            BoolExpr::Not(x) => Ok(!self.test(x, site)?),
            _ => unreachable!("not a condition"),
        }
    }
}

fn predicate(c: &Contract, store: &Ledger, name: &str, args: &[Option<i128>], depth: u32) -> Result<bool, Stop> {
    if depth >= DEPTH_CAP {
        return Err(Stop::Resource("predicate depth"));
    }
    let pred = c.predicate(name).expect("resolved predicate");
    let env: BTreeMap<&str, Option<i128>> = pred.params.iter().map(String::as_str).zip(args.iter().copied()).collect();
    stacker::maybe_grow(64 * 1024, 1024 * 1024, || pred_holds(c, store, &pred.body, &env, depth))
}

fn pred_holds(
    c: &Contract,
    store: &Ledger,
    b: &BoolExpr,
    env: &BTreeMap<&str, Option<i128>>,
    depth: u32,
) -> Result<bool, Stop> {
    let val = |e: &Expr| pred_value(c, store, e, env);
    match b {
        BoolExpr::Cmp(l, op, r) => Ok(compare(val(l), *op, val(r))),
        BoolExpr::Pred(p, args) => {
            let vals: Vec<Option<i128>> = args.iter().map(val).collect();
            predicate(c, store, p, &vals, depth + 1)
        }
        BoolExpr::And(x, y) => Ok(pred_holds(c, store, x, env, depth)? && pred_holds(c, store, y, env, depth)?),
        BoolExpr::Or(x, y) => Ok(pred_holds(c, store, x, env, depth)? || pred_holds(c, store, y, env, depth)?),
        BoolExpr::Not(x) => Ok(!pred_holds(c, store, x, env, depth)?),
        _ => unreachable!("not a predicate body"),
    }
}

fn pred_value(c: &Contract, store: &Ledger, e: &Expr, env: &BTreeMap<&str, Option<i128>>) -> Option<i128> {
    match e {
        Expr::Int(v) => Some(i128::from(*v)),
        Expr::Name(n) => match env.get(n.as_str()) {
            Some(v) => *v,
            None => Some(i128::from(store.get(&c.name, n))),
        },
        Expr::Bin(op, l, r) => arith(*op, pred_value(c, store, l, env)?, pred_value(c, store, r, env)?),
        Expr::Old(_) | Expr::Result => None,
    }
}

fn arith(op: BinOp, a: i128, b: i128) -> Option<i128> {
    match op {
        BinOp::Add => a.checked_add(b),
        BinOp::Sub => a.checked_sub(b),
        BinOp::Mul => a.checked_mul(b),
        BinOp::Div if b != 0 => Some(a.div_euclid(b)),
        BinOp::Mod if b != 0 => Some(a.rem_euclid(b)),
        BinOp::Div | BinOp::Mod => None,
    }
}

fn compare(a: Option<i128>, op: RelOp, b: Option<i128>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => match op {
            RelOp::Eq => x == y,
            RelOp::Ne => x != y,
            RelOp::Lt => x < y,
            RelOp::Le => x <= y,
            RelOp::Gt => x > y,
            RelOp::Ge => x >= y,
        },
        _ => false,
    }
}
