//! Decision procedure for conjunctions of linear constraints over uint64
//! variables.
//!
//! Satisfiability uses Fourier–Motzkin elimination over the rationals with
//! gcd-based integer tightening. An infeasible real shadow proves `Unsat`;
//! `Sat` is only reported together with an integer model that has been checked
//! against every constraint. Everything else is `Unknown`, which callers must
//! treat as "no information".

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ast::{BinOp, RelOp};

/// Identifier of a symbolic uint64 variable.
pub type Var = u32;

pub const U64_MAX: i128 = u64::MAX as i128;

/// Disequality case splits allowed per satisfiability query.
pub const SPLIT_BUDGET: u32 = 8;

const MAX_CONSTRAINTS: usize = 4000;

/// Symbolic uint64 value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const(u64),
    Var(Var),
    Bin(BinOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn bin(op: BinOp, l: Term, r: Term) -> Term {
        Term::Bin(op, Box::new(l), Box::new(r))
    }

    pub fn vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Const(_) => {}
            Term::Var(v) => {
                out.insert(*v);
            }
            Term::Bin(_, l, r) => {
                l.vars(out);
                r.vars(out);
            }
        }
    }

    /// Concrete value under `model` with unbounded integer arithmetic, or
    /// `None` when a division by zero occurs.
    pub fn eval(&self, model: &BTreeMap<Var, i128>) -> Option<i128> {
        match self {
            Term::Const(c) => Some(*c as i128),
            Term::Var(v) => Some(*model.get(v).unwrap_or(&0)),
            Term::Bin(op, l, r) => {
                let a = l.eval(model)?;
                let b = r.eval(model)?;
                match op {
                    BinOp::Add => a.checked_add(b),
                    BinOp::Sub => a.checked_sub(b),
                    BinOp::Mul => a.checked_mul(b),
                    BinOp::Div => (b != 0).then(|| a.div_euclid(b)),
                    BinOp::Mod => (b != 0).then(|| a.rem_euclid(b)),
                }
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c}"),
            Term::Var(v) => write!(f, "x{v}"),
            Term::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}

/// `Σ coeffs[v]·v + constant`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinExpr {
    pub coeffs: BTreeMap<Var, i128>,
    pub constant: i128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonLinear;

impl LinExpr {
    pub fn constant(c: i128) -> Self {
        LinExpr {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(v: Var) -> Self {
        LinExpr {
            coeffs: BTreeMap::from([(v, 1)]),
            constant: 0,
        }
    }

    fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn add_scaled(&self, other: &LinExpr, factor: i128) -> Option<LinExpr> {
        let mut out = self.clone();
        for (v, c) in &other.coeffs {
            let e = out.coeffs.entry(*v).or_insert(0);
            *e = e.checked_add(c.checked_mul(factor)?)?;
            if *e == 0 {
                out.coeffs.remove(v);
            }
        }
        out.constant = out
            .constant
            .checked_add(other.constant.checked_mul(factor)?)?;
        Some(out)
    }

    fn scale(&self, factor: i128) -> Option<LinExpr> {
        LinExpr::default().add_scaled(self, factor)
    }

    pub fn from_term(t: &Term) -> Result<LinExpr, NonLinear> {
        match t {
            Term::Const(c) => Ok(LinExpr::constant(*c as i128)),
            Term::Var(v) => Ok(LinExpr::var(*v)),
            Term::Bin(op, l, r) => {
                let a = LinExpr::from_term(l)?;
                let b = LinExpr::from_term(r)?;
                let out = match op {
                    BinOp::Add => a.add_scaled(&b, 1),
                    BinOp::Sub => a.add_scaled(&b, -1),
                    BinOp::Mul if a.is_constant() => b.scale(a.constant),
                    BinOp::Mul if b.is_constant() => a.scale(b.constant),
                    BinOp::Div | BinOp::Mod
                        if a.is_constant() && b.is_constant() && b.constant != 0 =>
                    {
                        Some(LinExpr::constant(if *op == BinOp::Div {
                            a.constant.div_euclid(b.constant)
                        } else {
                            a.constant.rem_euclid(b.constant)
                        }))
                    }
                    _ => None,
                };
                out.ok_or(NonLinear)
            }
        }
    }

    pub fn eval(&self, model: &BTreeMap<Var, i128>) -> Option<i128> {
        let mut acc = self.constant;
        for (v, c) in &self.coeffs {
            acc = acc.checked_add(c.checked_mul(*model.get(v).unwrap_or(&0))?)?;
        }
        Some(acc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Le,
    Eq,
    Ne,
}

/// `Σ coeffs[v]·v  rel  bound`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinearConstraint {
    pub coeffs: BTreeMap<Var, i128>,
    pub rel: Rel,
    pub bound: i128,
}

impl LinearConstraint {
    /// `expr rel 0`, moving the constant to the right-hand side.
    fn from_expr(expr: &LinExpr, rel: Rel) -> Option<Self> {
        Some(LinearConstraint {
            coeffs: expr.coeffs.clone(),
            rel,
            bound: expr.constant.checked_neg()?,
        })
    }

    pub fn holds(&self, model: &BTreeMap<Var, i128>) -> bool {
        let mut lhs: i128 = 0;
        for (v, c) in &self.coeffs {
            match c
                .checked_mul(*model.get(v).unwrap_or(&0))
                .and_then(|x| lhs.checked_add(x))
            {
                Some(x) => lhs = x,
                None => return false,
            }
        }
        match self.rel {
            Rel::Le => lhs <= self.bound,
            Rel::Eq => lhs == self.bound,
            Rel::Ne => lhs != self.bound,
        }
    }
}

impl fmt::Display for LinearConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            write!(f, "0")?;
        }
        for (i, (v, c)) in self.coeffs.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}*x{v}")?;
        }
        let rel = match self.rel {
            Rel::Le => "<=",
            Rel::Eq => "==",
            Rel::Ne => "!=",
        };
        write!(f, " {rel} {}", self.bound)
    }
}

/// `lhs op rhs` as linear constraints over integers (`<`/`>` tightened by one,
/// `==` split into two inequalities).
pub fn to_linear(lhs: &Term, op: RelOp, rhs: &Term) -> Result<Vec<LinearConstraint>, NonLinear> {
    let l = LinExpr::from_term(lhs)?;
    let r = LinExpr::from_term(rhs)?;
    let diff = l.add_scaled(&r, -1).ok_or(NonLinear)?;
    relate(&diff, op).ok_or(NonLinear)
}

/// Constraints expressing `diff op 0`.
fn relate(diff: &LinExpr, op: RelOp) -> Option<Vec<LinearConstraint>> {
    let neg = diff.scale(-1)?;
    let le = |e: &LinExpr, slack: i128| {
        let mut e = e.clone();
        e.constant = e.constant.checked_add(slack)?;
        LinearConstraint::from_expr(&e, Rel::Le)
    };
    Some(match op {
        RelOp::Le => vec![le(diff, 0)?],
        RelOp::Lt => vec![le(diff, 1)?],
        RelOp::Ge => vec![le(&neg, 0)?],
        RelOp::Gt => vec![le(&neg, 1)?],
        RelOp::Eq => vec![le(diff, 0)?, le(&neg, 0)?],
        RelOp::Ne => vec![LinearConstraint::from_expr(diff, Rel::Ne)?],
    })
}

/// A comparison between two linear terms, used as a prover goal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinAtom {
    pub diff: LinExpr,
    pub op: RelOp,
}

impl LinAtom {
    pub fn new(lhs: &Term, op: RelOp, rhs: &Term) -> Result<Self, NonLinear> {
        let l = LinExpr::from_term(lhs)?;
        let r = LinExpr::from_term(rhs)?;
        Ok(LinAtom {
            diff: l.add_scaled(&r, -1).ok_or(NonLinear)?,
            op,
        })
    }

    pub fn constraints(&self) -> Option<Vec<LinearConstraint>> {
        relate(&self.diff, self.op)
    }

    pub fn negated(&self) -> LinAtom {
        LinAtom {
            diff: self.diff.clone(),
            op: self.op.negate(),
        }
    }
}

/// Conjunction of constraints; every variable mentioned is implicitly bounded
/// to `[0, 2^64-1]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSystem {
    pub constraints: Vec<LinearConstraint>,
}

impl ConstraintSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, c: LinearConstraint) {
        self.constraints.push(c);
    }

    pub fn extend(&mut self, cs: impl IntoIterator<Item = LinearConstraint>) {
        self.constraints.extend(cs);
    }

    pub fn with(&self, cs: impl IntoIterator<Item = LinearConstraint>) -> ConstraintSystem {
        let mut out = self.clone();
        out.extend(cs);
        out
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        self.constraints
            .iter()
            .flat_map(|c| c.coeffs.keys().copied())
            .collect()
    }

    /// Line-oriented dump, one constraint per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for c in &self.constraints {
            s.push_str(&c.to_string());
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(BTreeMap<Var, i128>),
    Unsat,
    Unknown,
}

impl SatResult {
    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }

    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProofResult {
    Proved,
    Disproved,
    Unknown,
}

pub fn check_sat(sys: &ConstraintSystem) -> SatResult {
    let mut budget = SPLIT_BUDGET;
    let vars = sys.vars();
    sat_with_splits(&sys.constraints, &vars, &mut budget)
}

fn sat_with_splits(cs: &[LinearConstraint], vars: &BTreeSet<Var>, budget: &mut u32) -> SatResult {
    let mut ineqs: Vec<(BTreeMap<Var, i128>, i128)> = Vec::new();
    let mut diseqs = Vec::new();
    for c in cs {
        match c.rel {
            Rel::Le => ineqs.push((c.coeffs.clone(), c.bound)),
            Rel::Eq => {
                ineqs.push((c.coeffs.clone(), c.bound));
                let Some(neg) = negate_coeffs(&c.coeffs) else {
                    return SatResult::Unknown;
                };
                ineqs.push((neg, -c.bound));
            }
            Rel::Ne => diseqs.push(c),
        }
    }
    for v in vars {
        ineqs.push((BTreeMap::from([(*v, -1)]), 0));
        ineqs.push((BTreeMap::from([(*v, 1)]), U64_MAX));
    }

    let relaxed = fourier_motzkin(ineqs, vars);
    let model = match relaxed {
        FmResult::Unsat => return SatResult::Unsat,
        FmResult::Unknown => None,
        FmResult::Model(m) => Some(m),
    };
    if let Some(m) = &model {
        if cs.iter().all(|c| c.holds(m)) {
            return SatResult::Sat(m.clone());
        }
    }

    // split the first disequality the candidate model violates (or the first one)
    let pick = model
        .as_ref()
        .and_then(|m| diseqs.iter().find(|d| !d.holds(m)))
        .or(diseqs.first());
    let Some(split) = pick else {
        return SatResult::Unknown;
    };
    if *budget == 0 {
        return SatResult::Unknown;
    }
    *budget -= 1;

    let rest: Vec<LinearConstraint> = cs.iter().filter(|c| *c != *split).cloned().collect();
    let Some(neg) = negate_coeffs(&split.coeffs) else {
        return SatResult::Unknown;
    };
    let (Some(below), Some(above)) = (split.bound.checked_sub(1), split.bound.checked_add(1)) else {
        return SatResult::Unknown;
    };
    let branches = [
        LinearConstraint {
            coeffs: split.coeffs.clone(),
            rel: Rel::Le,
            bound: below,
        },
        LinearConstraint {
            coeffs: neg,
            rel: Rel::Le,
            bound: -above,
        },
    ];
    let mut all_unsat = true;
    for b in branches {
        let mut next = rest.clone();
        next.push(b);
        match sat_with_splits(&next, vars, budget) {
            SatResult::Sat(m) => return SatResult::Sat(m),
            SatResult::Unsat => {}
            SatResult::Unknown => all_unsat = false,
        }
    }
    if all_unsat {
        SatResult::Unsat
    } else {
        SatResult::Unknown
    }
}

fn negate_coeffs(c: &BTreeMap<Var, i128>) -> Option<BTreeMap<Var, i128>> {
    c.iter()
        .map(|(v, k)| k.checked_neg().map(|n| (*v, n)))
        .collect()
}

enum FmResult {
    Unsat,
    Unknown,
    /// Rationally feasible; carries an integer candidate when back-substitution
    /// found one.
    Model(BTreeMap<Var, i128>),
}

type Ineq = (BTreeMap<Var, i128>, i128);

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Divides by the coefficient gcd, rounding the bound down (sound over the
/// integers). Returns `Err(())` for a constant contradiction.
fn tighten((coeffs, bound): Ineq) -> Result<Option<Ineq>, ()> {
    let coeffs: BTreeMap<Var, i128> = coeffs.into_iter().filter(|(_, c)| *c != 0).collect();
    if coeffs.is_empty() {
        return if 0 <= bound { Ok(None) } else { Err(()) };
    }
    let g = coeffs.values().fold(0, |g, c| gcd(g, *c));
    if g > 1 {
        let coeffs = coeffs.into_iter().map(|(v, c)| (v, c / g)).collect();
        Ok(Some((coeffs, bound.div_euclid(g))))
    } else {
        Ok(Some((coeffs, bound)))
    }
}

fn simplify(ineqs: Vec<Ineq>) -> Result<Vec<Ineq>, ()> {
    let mut best: BTreeMap<BTreeMap<Var, i128>, i128> = BTreeMap::new();
    for ineq in ineqs {
        if let Some((c, b)) = tighten(ineq)? {
            best.entry(c)
                .and_modify(|old| *old = (*old).min(b))
                .or_insert(b);
        }
    }
    // opposite single-direction pairs detect contradictions early
    for (c, b) in &best {
        if let Some(neg) = negate_coeffs(c) {
            if let Some(nb) = best.get(&neg) {
                if b.checked_add(*nb).is_some_and(|s| s < 0) {
                    return Err(());
                }
            }
        }
    }
    Ok(best.into_iter().collect())
}

fn fourier_motzkin(ineqs: Vec<Ineq>, vars: &BTreeSet<Var>) -> FmResult {
    let mut current = match simplify(ineqs) {
        Ok(s) => s,
        Err(()) => return FmResult::Unsat,
    };
    let mut remaining: BTreeSet<Var> = vars.clone();
    // stage k holds the system just before eliminating `order[k]`
    let mut stages: Vec<(Var, Vec<Ineq>)> = Vec::new();

    while !remaining.is_empty() {
        let var = *remaining
            .iter()
            .min_by_key(|v| {
                let pos = current.iter().filter(|(c, _)| c.get(v).is_some_and(|k| *k > 0)).count();
                let neg = current.iter().filter(|(c, _)| c.get(v).is_some_and(|k| *k < 0)).count();
                pos * neg
            })
            .unwrap();
        remaining.remove(&var);

        let (with, without): (Vec<Ineq>, Vec<Ineq>) =
            current.iter().cloned().partition(|(c, _)| c.contains_key(&var));
        let uppers: Vec<&Ineq> = with.iter().filter(|(c, _)| c[&var] > 0).collect();
        let lowers: Vec<&Ineq> = with.iter().filter(|(c, _)| c[&var] < 0).collect();
        let mut next = without;
        for (uc, ub) in &uppers {
            for (lc, lb) in &lowers {
                let a = uc[&var];
                let b = -lc[&var];
                let mut coeffs = BTreeMap::new();
                let mut overflow = false;
                for v in uc.keys().chain(lc.keys()) {
                    if *v == var || coeffs.contains_key(v) {
                        continue;
                    }
                    let x = uc.get(v).copied().unwrap_or(0).checked_mul(b);
                    let y = lc.get(v).copied().unwrap_or(0).checked_mul(a);
                    match (x, y) {
                        (Some(x), Some(y)) => match x.checked_add(y) {
                            Some(s) => {
                                coeffs.insert(*v, s);
                            }
                            None => overflow = true,
                        },
                        _ => overflow = true,
                    }
                }
                let bound = ub
                    .checked_mul(b)
                    .zip(lb.checked_mul(a))
                    .and_then(|(x, y)| x.checked_add(y));
                match bound {
                    Some(bound) if !overflow => next.push((coeffs, bound)),
                    _ => return FmResult::Unknown,
                }
            }
        }
        stages.push((var, with));
        current = match simplify(next) {
            Ok(s) => s,
            Err(()) => return FmResult::Unsat,
        };
        if current.len() > MAX_CONSTRAINTS {
            return FmResult::Unknown;
        }
    }

    // every variable is gone and no constant contradiction remains
    let mut model: BTreeMap<Var, i128> = BTreeMap::new();
    for (var, with) in stages.iter().rev() {
        let mut lo = i128::MIN;
        let mut hi = i128::MAX;
        for (coeffs, bound) in with {
            let a = coeffs[var];
            let mut rest = *bound;
            for (v, c) in coeffs {
                if v == var {
                    continue;
                }
                let val = *model.get(v).unwrap_or(&0);
                match c.checked_mul(val).and_then(|x| rest.checked_sub(x)) {
                    Some(r) => rest = r,
                    None => return FmResult::Unknown,
                }
            }
            if a > 0 {
                hi = hi.min(rest.div_euclid(a));
            } else {
                // a·x <= rest with a < 0  ⇔  x >= ceil(rest / a)
                let q = -(rest.div_euclid(-a));
                lo = lo.max(q);
            }
        }
        if lo > hi {
            // the real shadow is feasible but the greedy integer choice failed
            return FmResult::Unknown;
        }
        let pick = if lo == i128::MIN { hi.min(0) } else { lo };
        model.insert(*var, pick);
    }
    FmResult::Model(model)
}

/// Does `sys` entail `goal`? `Proved` iff `sys ∧ ¬goal` is unsatisfiable;
/// `Disproved` iff `sys ∧ goal` is unsatisfiable while `sys` is satisfiable.
pub fn entails(sys: &ConstraintSystem, goal: &LinAtom) -> ProofResult {
    let Some(neg) = goal.negated().constraints() else {
        return ProofResult::Unknown;
    };
    if check_sat(&sys.with(neg)).is_unsat() {
        return ProofResult::Proved;
    }
    let Some(pos) = goal.constraints() else {
        return ProofResult::Unknown;
    };
    if check_sat(&sys.with(pos)).is_unsat() && check_sat(sys).is_sat() {
        return ProofResult::Disproved;
    }
    ProofResult::Unknown
}
