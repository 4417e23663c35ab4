use std::collections::BTreeMap;

use crate::ast::*;
use crate::obligation::{overflow_text, ObligationKey, ObligationKind};

use super::{Gas, Ledger, Mode, Revert, RevertReason, Transaction, VmImage};

pub const PREDICATE_DEPTH_LIMIT: u32 = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Origin {
    /// Taken from the free pool, or handed over by a returning callee.
    Acquired,
    /// Transferred by the caller at entry.
    Caller,
    /// Lazily borrowed from the caller; always goes back to it.
    Borrowed,
}

/// Who holds a permission, and who held it before the current holder.
#[derive(Clone, Debug)]
struct Holder {
    frame: u32,
    origin: Origin,
    prior: Option<Box<Holder>>,
}

struct Frame<'i> {
    id: u32,
    contract: &'i Contract,
    method: &'i Method,
    locals: BTreeMap<String, u64>,
    old: BTreeMap<String, u64>,
    result: Option<u64>,
    imprecise: bool,
}

enum Ctl {
    Next,
    Return(u64),
}

type Exec<T> = Result<T, Revert>;

pub struct Vm<'i> {
    img: &'i VmImage,
    ledger: Ledger,
    perms: BTreeMap<(String, String), Holder>,
    frames: Vec<Frame<'i>>,
    next_id: u32,
    limit: u64,
    pub gas: Gas,
}

fn revert(reason: RevertReason, check_id: Option<String>, key: Option<ObligationKey>) -> Revert {
    Revert {
        reason,
        check_id,
        key,
    }
}

fn access_key(site: SourceLoc, g: &str) -> ObligationKey {
    ObligationKey::new(ObligationKind::Access, site, format!("acc({g})"))
}

impl<'i> Vm<'i> {
    pub fn new(img: &'i VmImage, ledger: Ledger, limit: u64) -> Self {
        Vm {
            img,
            ledger,
            perms: BTreeMap::new(),
            frames: Vec::new(),
            next_id: 0,
            limit,
            gas: Gas::default(),
        }
    }

    pub fn into_ledger(self) -> Ledger {
        self.ledger
    }

    fn checked(&self) -> bool {
        self.img.mode == Mode::Checked
    }

    pub fn transaction(&mut self, tx: &Transaction) -> Exec<Option<u64>> {
        let (c, m) = self
            .img
            .program
            .method(&tx.contract, &tx.method)
            .expect("transaction validated");
        self.invoke(c, m, &tx.args)
    }

    fn charge_exec(&mut self, n: u64) -> Exec<()> {
        self.gas.exec += n;
        self.gas_left()
    }

    fn charge_check(&mut self, n: u64) -> Exec<()> {
        self.gas.check += n;
        self.gas_left()
    }

    fn gas_left(&self) -> Exec<()> {
        if self.gas.total() > self.limit {
            Err(revert(RevertReason::GasExhausted, None, None))
        } else {
            Ok(())
        }
    }

    fn cur(&self) -> &Frame<'i> {
        self.frames.last().expect("active frame")
    }

    fn cur_mut(&mut self) -> &mut Frame<'i> {
        self.frames.last_mut().expect("active frame")
    }

    fn caller_id(&self) -> Option<u32> {
        let n = self.frames.len();
        (n >= 2).then(|| self.frames[n - 2].id)
    }

    fn slot(&self, g: &str) -> (String, String) {
        (self.cur().contract.name.clone(), g.to_string())
    }

    /// The current frame owns `g`, or may take it under imprecision.
    fn try_access(&mut self, g: &str) -> bool {
        if !self.checked() {
            return true;
        }
        let key = self.slot(g);
        let me = self.cur().id;
        let holder = self.perms.get(&key).map(|h| h.frame);
        if holder == Some(me) {
            return true;
        }
        if !self.cur().imprecise {
            return false;
        }
        match holder {
            None => {
                self.perms.insert(
                    key,
                    Holder {
                        frame: me,
                        origin: Origin::Acquired,
                        prior: None,
                    },
                );
                true
            }
            Some(h) if Some(h) == self.caller_id() => {
                let prior = self.perms.remove(&key).map(Box::new);
                self.perms.insert(
                    key,
                    Holder {
                        frame: me,
                        origin: Origin::Borrowed,
                        prior,
                    },
                );
                true
            }
            Some(_) => false,
        }
    }

    fn invoke(&mut self, c: &'i Contract, m: &'i Method, args: &[u64]) -> Exec<Option<u64>> {
        let boundary = match self.frames.last() {
            None => true,
            Some(f) => f.contract.is_extern || f.contract.name != c.name,
        };
        let id = self.next_id;
        self.next_id += 1;
        self.frames.push(Frame {
            id,
            contract: c,
            method: m,
            locals: m.params.iter().cloned().zip(args.iter().copied()).collect(),
            old: BTreeMap::new(),
            result: None,
            imprecise: c.is_extern || m.requires.formula.is_imprecise(),
        });
        let result = self.run_frame(boundary);
        if result.is_ok() {
            self.release();
        }
        self.frames.pop();
        let r = result?;
        if let Some(f) = self.frames.last_mut() {
            if c.is_extern || m.requires.formula.is_imprecise() || m.ensures.formula.is_imprecise() {
                f.imprecise = true;
            }
        }
        Ok(r)
    }

    fn run_frame(&mut self, boundary: bool) -> Exec<Option<u64>> {
        let f = self.cur();
        let (c, m) = (f.contract, f.method);
        if !c.is_extern && self.checked() {
            self.enter(m, boundary)?;
        }
        let old: BTreeMap<String, u64> = c
            .globals
            .iter()
            .map(|g| (g.clone(), self.ledger.get(&c.name, g)))
            .collect();
        self.cur_mut().old = old;
        let result = match &m.body {
            MethodBody::Opaque => m.returns.then_some(0),
            MethodBody::Stmts(body) => match self.block(body)? {
                Ctl::Return(v) => Some(v),
                Ctl::Next => None,
            },
        };
        self.cur_mut().result = result;
        if !c.is_extern && self.checked() {
            for chk in &m.exit_checks {
                self.run_check(chk, m.ensures.loc)?;
            }
        }
        Ok(result)
    }

    fn enter(&mut self, m: &'i Method, boundary: bool) -> Exec<()> {
        let loc = m.requires.loc;
        for g in m.requires.formula.acc_slots() {
            self.charge_check(1)?;
            let key = self.slot(g);
            let me = self.cur().id;
            let holder = self.perms.get(&key).map(|h| h.frame);
            let origin = match holder {
                None => Origin::Acquired,
                Some(h) if Some(h) == self.caller_id() => Origin::Caller,
                Some(_) => {
                    let k = ObligationKey::new(ObligationKind::Precondition, loc, format!("acc({g})"));
                    return Err(revert(RevertReason::OwnershipFailure, None, Some(k)));
                }
            };
            let prior = self.perms.remove(&key).map(Box::new);
            self.perms.insert(
                key,
                Holder {
                    frame: me,
                    origin,
                    prior,
                },
            );
        }
        if boundary {
            for a in m.requires.formula.value_atoms() {
                if !self.value_atom(a, loc)? {
                    let k = ObligationKey::new(ObligationKind::Precondition, loc, a.to_string());
                    return Err(revert(RevertReason::CheckFailure, None, Some(k)));
                }
            }
        }
        Ok(())
    }

    /// Hands the exiting frame's permissions on.
    fn release(&mut self) {
        if !self.checked() {
            return;
        }
        let f = self.cur();
        let me = f.id;
        let listed: Vec<String> = if f.contract.is_extern {
            Vec::new()
        } else {
            f.method.ensures.formula.acc_slots().iter().map(|s| s.to_string()).collect()
        };
        let caller = self.caller_id();
        let owned: Vec<(String, String)> = self
            .perms
            .iter()
            .filter(|(_, h)| h.frame == me)
            .map(|(k, _)| k.clone())
            .collect();
        for key in owned {
            let h = self.perms.remove(&key).expect("owned slot");
            let next = match (h.origin, caller) {
                (_, None) => None,
                (Origin::Borrowed, Some(_)) => h.prior.map(|p| *p),
                (Origin::Caller, Some(_)) if listed.contains(&key.1) => h.prior.map(|p| *p),
                (Origin::Acquired, Some(c)) if listed.contains(&key.1) => Some(Holder {
                    frame: c,
                    origin: Origin::Acquired,
                    prior: None,
                }),
                _ => None,
            };
            if let Some(n) = next {
                self.perms.insert(key, n);
            }
        }
    }

    fn block(&mut self, stmts: &'i [Stmt]) -> Exec<Ctl> {
        for s in stmts {
            if let Ctl::Return(v) = self.stmt(s)? {
                return Ok(Ctl::Return(v));
            }
        }
        Ok(Ctl::Next)
    }

    fn stmt(&mut self, s: &'i Stmt) -> Exec<Ctl> {
        match &s.kind {
            StmtKind::Check(chk) => {
                if self.checked() {
                    self.run_check(chk, s.loc)?;
                }
            }
            StmtKind::Assign { target, value } => {
                self.charge_exec(1)?;
                let v = self.eval(value, s.loc)?;
                if self.cur().contract.is_global(target) {
                    if !self.try_access(target) {
                        let k = access_key(s.loc, target);
                        return Err(revert(RevertReason::OwnershipFailure, None, Some(k)));
                    }
                    let c = self.cur().contract.name.clone();
                    self.ledger.set(&c, target, v);
                } else {
                    self.cur_mut().locals.insert(target.clone(), v);
                }
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                self.charge_exec(1)?;
                let branch = if self.cond(cond, s.loc)? {
                    then_body
                } else {
                    else_body
                };
                return self.block(branch);
            }
            StmtKind::While {
                cond,
                invariant,
                body,
            } => {
                if invariant.is_imprecise() {
                    self.cur_mut().imprecise = true;
                }
                loop {
                    self.charge_exec(1)?;
                    if !self.cond(cond, s.loc)? {
                        break;
                    }
                    if let Ctl::Return(v) = self.block(body)? {
                        return Ok(Ctl::Return(v));
                    }
                }
            }
            StmtKind::Call {
                target,
                contract,
                method,
                args,
            } => {
                self.charge_exec(1)?;
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a, s.loc)?);
                }
                let (c, m) = self
                    .img
                    .program
                    .method(contract, method)
                    .expect("resolved call");
                let r = self.invoke(c, m, &vals)?;
                if let Some(t) = target {
                    self.cur_mut().locals.insert(t.clone(), r.unwrap_or(0));
                }
            }
            StmtKind::Return(e) => {
                self.charge_exec(1)?;
                let v = self.eval(e, s.loc)?;
                return Ok(Ctl::Return(v));
            }
            StmtKind::Assert(f) => {
                if f.is_imprecise() {
                    self.cur_mut().imprecise = true;
                }
            }
        }
        Ok(Ctl::Next)
    }

    fn eval(&mut self, e: &Expr, site: SourceLoc) -> Exec<u64> {
        match e {
            Expr::Int(v) => Ok(*v),
            Expr::Name(n) => {
                if let Some(v) = self.cur().locals.get(n) {
                    return Ok(*v);
                }
                if !self.try_access(n) {
                    let k = access_key(site, n);
                    return Err(revert(RevertReason::OwnershipFailure, None, Some(k)));
                }
                Ok(self.ledger.get(&self.cur().contract.name, n))
            }
            Expr::Old(_) | Expr::Result => unreachable!("specification-only expression in code"),
            Expr::Bin(op, l, r) => {
                let a = self.eval(l, site)?;
                let b = self.eval(r, site)?;
                let panic = |kind, payload: String| {
                    let k = ObligationKey::new(kind, site, payload);
                    revert(RevertReason::ArithmeticPanic, None, Some(k))
                };
                match op {
                    BinOp::Add => a
                        .checked_add(b)
                        .ok_or_else(|| panic(ObligationKind::Overflow, overflow_text(e))),
                    BinOp::Mul => a
                        .checked_mul(b)
                        .ok_or_else(|| panic(ObligationKind::Overflow, overflow_text(e))),
                    BinOp::Sub => a.checked_sub(b).ok_or_else(|| {
                        panic(ObligationKind::UnderflowSafety, format!("{l} >= {r}"))
                    }),
                    BinOp::Div | BinOp::Mod => {
                        if b == 0 {
                            return Err(panic(ObligationKind::DivisionSafety, format!("{r} != 0")));
                        }
                        Ok(if *op == BinOp::Div { a / b } else { a % b })
                    }
                }
            }
        }
    }

    /// Conditions evaluate every operand; there is no short-circuit.
    fn cond(&mut self, b: &BoolExpr, site: SourceLoc) -> Exec<bool> {
        Ok(match b {
            BoolExpr::Cmp(l, op, r) => {
                let a = self.eval(l, site)?;
                let c = self.eval(r, site)?;
                op.holds(a, c)
            }
            BoolExpr::And(x, y) => {
                let a = self.cond(x, site)?;
                let c = self.cond(y, site)?;
                a && c
            }
            BoolExpr::Or(x, y) => {
                let a = self.cond(x, site)?;
                let c = self.cond(y, site)?;
                a || c
            }
            BoolExpr::Not(x) => !self.cond(x, site)?,
            BoolExpr::Acc(_) | BoolExpr::Pred(..) | BoolExpr::Unknown | BoolExpr::Truthy(_) => {
                unreachable!("rejected by the front end")
            }
        })
    }

    fn run_check(&mut self, chk: &Check, fallback_site: SourceLoc) -> Exec<()> {
        let key = match self.img.checks.get(&chk.id) {
            Some(info) => info.key(),
            None => ObligationKey::new(ObligationKind::Assert, fallback_site, chk.payload.to_string()),
        };
        let site = key.site();
        let id = Some(chk.id.clone());
        match &chk.payload {
            Atom::Acc(g) => {
                self.charge_check(1)?;
                if !self.try_access(g) {
                    return Err(revert(RevertReason::OwnershipFailure, id, Some(key)));
                }
            }
            atom => match self.value_atom(atom, site) {
                Ok(true) => {}
                Ok(false) => return Err(revert(RevertReason::CheckFailure, id, Some(key))),
                Err(mut r) => {
                    r.check_id = id;
                    return Err(r);
                }
            },
        }
        Ok(())
    }

    /// Evaluates a comparison or predicate atom after securing the slots it reads.
    fn value_atom(&mut self, atom: &Atom, site: SourceLoc) -> Exec<bool> {
        for g in atom_reads(atom, self.cur().contract) {
            if !self.try_access(&g) {
                let k = access_key(site, &g);
                return Err(revert(RevertReason::OwnershipFailure, None, Some(k)));
            }
        }
        match atom {
            Atom::Acc(_) => unreachable!("value atoms only"),
            Atom::Cmp(l, op, r) => {
                self.charge_check(1)?;
                let f = self.cur();
                Ok(cmp_math(self.spec_val(f, l), *op, self.spec_val(f, r)))
            }
            Atom::Pred(p, args) => {
                let f = self.cur();
                let vals: Vec<Option<i128>> = args.iter().map(|a| self.spec_val(f, a)).collect();
                self.predicate(p, &vals, 0)
            }
        }
    }

    /// Mathematical value of a specification expression; `None` if undefined.
    fn spec_val(&self, f: &Frame<'i>, e: &Expr) -> Option<i128> {
        match e {
            Expr::Int(v) => Some(*v as i128),
            Expr::Name(n) => match f.locals.get(n) {
                Some(v) => Some(*v as i128),
                None => Some(self.ledger.get(&f.contract.name, n) as i128),
            },
            Expr::Old(g) => f.old.get(g).map(|v| *v as i128),
            Expr::Result => f.result.map(|v| v as i128),
            Expr::Bin(op, l, r) => math(*op, self.spec_val(f, l)?, self.spec_val(f, r)?),
        }
    }

    fn predicate(&mut self, name: &str, args: &[Option<i128>], depth: u32) -> Exec<bool> {
        if depth >= PREDICATE_DEPTH_LIMIT {
            return Err(revert(RevertReason::PredicateDepthExceeded, None, None));
        }
        self.charge_check(1)?;
        let c = self.cur().contract;
        let pred = c.predicate(name).expect("resolved predicate");
        let env: BTreeMap<&str, Option<i128>> = pred
            .params
            .iter()
            .map(String::as_str)
            .zip(args.iter().copied())
            .collect();
        // deep predicate chains would overflow small thread stacks
        stacker::maybe_grow(64 * 1024, 1024 * 1024, || self.pred_body(&pred.body, &env, depth))
    }

    fn pred_body(&mut self, b: &BoolExpr, env: &BTreeMap<&str, Option<i128>>, depth: u32) -> Exec<bool> {
        Ok(match b {
            BoolExpr::Cmp(l, op, r) => {
                self.charge_check(1)?;
                cmp_math(self.pred_val(l, env), *op, self.pred_val(r, env))
            }
            BoolExpr::Pred(p, args) => {
                let vals: Vec<Option<i128>> = args.iter().map(|a| self.pred_val(a, env)).collect();
                self.predicate(p, &vals, depth + 1)?
            }
            BoolExpr::And(x, y) => self.pred_body(x, env, depth)? && self.pred_body(y, env, depth)?,
            BoolExpr::Or(x, y) => self.pred_body(x, env, depth)? || self.pred_body(y, env, depth)?,
            BoolExpr::Not(x) => !self.pred_body(x, env, depth)?,
            BoolExpr::Acc(_) | BoolExpr::Unknown | BoolExpr::Truthy(_) => {
                unreachable!("rejected by the front end")
            }
        })
    }

    fn pred_val(&self, e: &Expr, env: &BTreeMap<&str, Option<i128>>) -> Option<i128> {
        match e {
            Expr::Int(v) => Some(*v as i128),
            Expr::Name(n) => match env.get(n.as_str()) {
                Some(v) => *v,
                None => Some(self.ledger.get(&self.cur().contract.name, n) as i128),
            },
            Expr::Old(_) | Expr::Result => None,
            Expr::Bin(op, l, r) => math(*op, self.pred_val(l, env)?, self.pred_val(r, env)?),
        }
    }
}

fn math(op: BinOp, a: i128, b: i128) -> Option<i128> {
    match op {
        BinOp::Add => a.checked_add(b),
        BinOp::Sub => a.checked_sub(b),
        BinOp::Mul => a.checked_mul(b),
        BinOp::Div => (b != 0).then(|| a.div_euclid(b)),
        BinOp::Mod => (b != 0).then(|| a.rem_euclid(b)),
    }
}

fn cmp_math(a: Option<i128>, op: RelOp, b: Option<i128>) -> bool {
    let (Some(a), Some(b)) = (a, b) else {
        return false;
    };
    match op {
        RelOp::Eq => a == b,
        RelOp::Ne => a != b,
        RelOp::Le => a <= b,
        RelOp::Lt => a < b,
        RelOp::Ge => a >= b,
        RelOp::Gt => a > b,
    }
}
