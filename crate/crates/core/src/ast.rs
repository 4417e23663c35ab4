//! Abstract syntax for GCL programs and their specification formulas.
//!
//! Names are kept as plain strings. A name inside a method body denotes a
//! global slot exactly when the enclosing contract declares it; well-formedness
//! forbids locals and parameters from shadowing globals, so the contract is
//! always enough to classify a name.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ResolveError;

/// Line/column position (1-based) of a construct in its source file.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SourceLoc {
    pub line: u32,
    pub col: u32,
}

impl SourceLoc {
    pub fn new(line: u32, col: u32) -> Self {
        SourceLoc { line, col }
    }
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Int(u64),
    /// A parameter, local, or global slot of the enclosing contract.
    Name(String),
    /// Value of a global slot at method entry; only legal in `ensures`.
    Old(String),
    /// Return value; only legal in `ensures` of a method returning uint64.
    Result,
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn name(n: impl Into<String>) -> Self {
        Expr::Name(n.into())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    /// Every name referenced, in left-to-right order (duplicates kept).
    pub fn names(&self, out: &mut Vec<String>) {
        match self {
            Expr::Int(_) | Expr::Result | Expr::Old(_) => {}
            Expr::Name(n) => out.push(n.clone()),
            Expr::Bin(_, l, r) => {
                l.names(out);
                r.names(out);
            }
        }
    }

    pub fn mentions_old_or_result(&self) -> (bool, bool) {
        match self {
            Expr::Old(_) => (true, false),
            Expr::Result => (false, true),
            Expr::Int(_) | Expr::Name(_) => (false, false),
            Expr::Bin(_, l, r) => {
                let (a, b) = l.mentions_old_or_result();
                let (c, d) = r.mentions_old_or_result();
                (a || c, b || d)
            }
        }
    }

    /// Simultaneous substitution of names.
    pub fn substitute(&self, map: &dyn Fn(&str) -> Option<Expr>) -> Expr {
        match self {
            Expr::Name(n) => map(n).unwrap_or_else(|| self.clone()),
            Expr::Bin(op, l, r) => Expr::bin(*op, l.substitute(map), r.substitute(map)),
            _ => self.clone(),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Name(n) => write!(f, "{n}"),
            Expr::Old(g) => write!(f, "old({g})"),
            Expr::Result => write!(f, "result"),
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                if p < min {
                    write!(f, "(")?;
                }
                l.fmt_prec(f, p)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_prec(f, p + 1)?;
                if p < min {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelOp {
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
            RelOp::Le => "<=",
            RelOp::Lt => "<",
            RelOp::Ge => ">=",
            RelOp::Gt => ">",
        }
    }

    pub fn negate(self) -> RelOp {
        match self {
            RelOp::Eq => RelOp::Ne,
            RelOp::Ne => RelOp::Eq,
            RelOp::Le => RelOp::Gt,
            RelOp::Lt => RelOp::Ge,
            RelOp::Ge => RelOp::Lt,
            RelOp::Gt => RelOp::Le,
        }
    }

    pub fn holds(self, a: u64, b: u64) -> bool {
        match self {
            RelOp::Eq => a == b,
            RelOp::Ne => a != b,
            RelOp::Le => a <= b,
            RelOp::Lt => a < b,
            RelOp::Ge => a >= b,
            RelOp::Gt => a > b,
        }
    }
}

/// One conjunct of a specification formula.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Cmp(Expr, RelOp, Expr),
    /// Exclusive ownership of a global slot.
    Acc(String),
    /// Instance of a declared (possibly recursive) predicate.
    Pred(String, Vec<Expr>),
}

impl Atom {
    pub fn cmp(lhs: Expr, op: RelOp, rhs: Expr) -> Self {
        Atom::Cmp(lhs, op, rhs)
    }

    pub fn is_acc(&self) -> bool {
        matches!(self, Atom::Acc(_))
    }

    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Atom::Cmp(l, _, r) => vec![l, r],
            Atom::Acc(_) => vec![],
            Atom::Pred(_, args) => args.iter().collect(),
        }
    }

    pub fn substitute(&self, map: &dyn Fn(&str) -> Option<Expr>) -> Atom {
        match self {
            Atom::Cmp(l, op, r) => Atom::Cmp(l.substitute(map), *op, r.substitute(map)),
            Atom::Acc(g) => Atom::Acc(g.clone()),
            Atom::Pred(p, args) => {
                Atom::Pred(p.clone(), args.iter().map(|a| a.substitute(map)).collect())
            }
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Cmp(l, op, r) => write!(f, "{l} {} {r}", op.symbol()),
            Atom::Acc(g) => write!(f, "acc({g})"),
            Atom::Pred(p, args) => {
                write!(f, "{p}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Conjunct {
    /// The imprecision marker `?`.
    Unknown,
    Atom(Atom),
}

/// A conjunction of atoms, optionally imprecise.
///
/// Conjuncts are stored as written; [`normalize_formula`] produces the
/// canonical form with a single leading `?` and no duplicate `acc` atoms.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Formula {
    pub conjuncts: Vec<Conjunct>,
}

impl Formula {
    pub fn imprecise_true() -> Self {
        Formula {
            conjuncts: vec![Conjunct::Unknown],
        }
    }

    pub fn precise(atoms: Vec<Atom>) -> Self {
        Formula {
            conjuncts: atoms.into_iter().map(Conjunct::Atom).collect(),
        }
    }

    pub fn imprecise(atoms: Vec<Atom>) -> Self {
        let mut conjuncts = vec![Conjunct::Unknown];
        conjuncts.extend(atoms.into_iter().map(Conjunct::Atom));
        Formula { conjuncts }
    }

    pub fn is_imprecise(&self) -> bool {
        self.conjuncts.iter().any(|c| matches!(c, Conjunct::Unknown))
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.conjuncts.iter().filter_map(|c| match c {
            Conjunct::Atom(a) => Some(a),
            Conjunct::Unknown => None,
        })
    }

    /// Slots named by `acc` atoms, in order.
    pub fn acc_slots(&self) -> Vec<&str> {
        self.atoms()
            .filter_map(|a| match a {
                Atom::Acc(g) => Some(g.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Non-`acc` atoms, in order.
    pub fn value_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.atoms().filter(|a| !a.is_acc())
    }

    pub fn is_bare_unknown(&self) -> bool {
        self.is_imprecise() && self.atoms().next().is_none()
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conjuncts.is_empty() {
            return write!(f, "true");
        }
        for (i, c) in self.conjuncts.iter().enumerate() {
            if i > 0 {
                write!(f, " and ")?;
            }
            match c {
                Conjunct::Unknown => write!(f, "?")?,
                Conjunct::Atom(a) => write!(f, "{a}")?,
            }
        }
        Ok(())
    }
}

/// Hoists imprecision to the front and drops repeated `acc` atoms; the
/// relative order of the remaining atoms is preserved.
pub fn normalize_formula(f: &Formula) -> Formula {
    let mut out = Vec::with_capacity(f.conjuncts.len());
    if f.is_imprecise() {
        out.push(Conjunct::Unknown);
    }
    let mut seen_acc = BTreeSet::new();
    for atom in f.atoms() {
        if let Atom::Acc(g) = atom {
            if !seen_acc.insert(g.clone()) {
                continue;
            }
        }
        out.push(Conjunct::Atom(atom.clone()));
    }
    Formula { conjuncts: out }
}

/// Boolean conditions (`if`, `while`) and predicate bodies.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    Cmp(Expr, RelOp, Expr),
    /// Only legal inside predicate bodies.
    Acc(String),
    /// Only legal inside predicate bodies.
    Pred(String, Vec<Expr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Not(Box<BoolExpr>),
    /// `?` written inside a predicate body; rejected by well-formedness.
    Unknown,
    /// A bare arithmetic expression in condition position; rejected by type
    /// inference because uint64 values are not truthy.
    Truthy(Expr),
}

impl BoolExpr {
    pub fn exprs<'a>(&'a self, out: &mut Vec<&'a Expr>) {
        match self {
            BoolExpr::Cmp(l, _, r) => {
                out.push(l);
                out.push(r);
            }
            BoolExpr::Pred(_, args) => out.extend(args.iter()),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => {
                a.exprs(out);
                b.exprs(out);
            }
            BoolExpr::Not(a) => a.exprs(out),
            BoolExpr::Truthy(e) => out.push(e),
            BoolExpr::Acc(_) | BoolExpr::Unknown => {}
        }
    }

    pub fn substitute(&self, map: &dyn Fn(&str) -> Option<Expr>) -> BoolExpr {
        match self {
            BoolExpr::Cmp(l, op, r) => BoolExpr::Cmp(l.substitute(map), *op, r.substitute(map)),
            BoolExpr::Pred(p, args) => {
                BoolExpr::Pred(p.clone(), args.iter().map(|a| a.substitute(map)).collect())
            }
            BoolExpr::And(a, b) => {
                BoolExpr::And(Box::new(a.substitute(map)), Box::new(b.substitute(map)))
            }
            BoolExpr::Or(a, b) => {
                BoolExpr::Or(Box::new(a.substitute(map)), Box::new(b.substitute(map)))
            }
            BoolExpr::Not(a) => BoolExpr::Not(Box::new(a.substitute(map))),
            BoolExpr::Truthy(e) => BoolExpr::Truthy(e.substitute(map)),
            BoolExpr::Acc(_) | BoolExpr::Unknown => self.clone(),
        }
    }

    fn level(&self) -> u8 {
        match self {
            BoolExpr::Or(..) => 0,
            BoolExpr::And(..) => 1,
            BoolExpr::Not(..) => 2,
            _ => 3,
        }
    }

    fn fmt_level(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let lvl = self.level();
        if lvl < min {
            write!(f, "(")?;
        }
        match self {
            BoolExpr::Cmp(l, op, r) => write!(f, "{l} {} {r}", op.symbol())?,
            BoolExpr::Acc(g) => write!(f, "acc({g})")?,
            BoolExpr::Pred(p, args) => write!(f, "{}", Atom::Pred(p.clone(), args.clone()))?,
            BoolExpr::Or(a, b) => {
                a.fmt_level(f, 0)?;
                write!(f, " or ")?;
                b.fmt_level(f, 1)?;
            }
            BoolExpr::And(a, b) => {
                a.fmt_level(f, 1)?;
                write!(f, " and ")?;
                b.fmt_level(f, 2)?;
            }
            BoolExpr::Not(a) => {
                write!(f, "not ")?;
                a.fmt_level(f, 2)?;
            }
            BoolExpr::Unknown => write!(f, "?")?,
            BoolExpr::Truthy(e) => write!(f, "{e}")?,
        }
        if lvl < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_level(f, 0)
    }
}

/// A run-time check woven in by the weaver.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Check {
    pub id: String,
    pub payload: Atom,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub loc: SourceLoc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    /// `x := e;` for a local or a global slot.
    Assign { target: String, value: Expr },
    If {
        cond: BoolExpr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    While {
        cond: BoolExpr,
        invariant: Formula,
        body: Vec<Stmt>,
    },
    Call {
        target: Option<String>,
        contract: String,
        method: String,
        args: Vec<Expr>,
    },
    Return(Expr),
    /// Ghost assertion; statically checked, erased at run time.
    Assert(Formula),
    Check(Check),
}

impl Stmt {
    pub fn new(kind: StmtKind, loc: SourceLoc) -> Self {
        Stmt { kind, loc }
    }
}

/// A `requires` or `ensures` clause. Missing clauses default to `?`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub formula: Formula,
    pub loc: SourceLoc,
    pub explicit: bool,
}

impl Clause {
    pub fn implicit(loc: SourceLoc) -> Self {
        Clause {
            formula: Formula::imprecise_true(),
            loc,
            explicit: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MethodBody {
    Stmts(Vec<Stmt>),
    Opaque,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Method {
    pub name: String,
    pub params: Vec<String>,
    pub returns: bool,
    pub requires: Clause,
    pub ensures: Clause,
    pub body: MethodBody,
    /// Postcondition checks evaluated at every exit (woven programs only).
    pub exit_checks: Vec<Check>,
    pub loc: SourceLoc,
}

impl Method {
    pub fn stmts(&self) -> &[Stmt] {
        match &self.body {
            MethodBody::Stmts(s) => s,
            MethodBody::Opaque => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Predicate {
    pub name: String,
    pub params: Vec<String>,
    pub body: BoolExpr,
    pub loc: SourceLoc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contract {
    pub name: String,
    pub is_extern: bool,
    pub globals: Vec<String>,
    pub predicates: Vec<Predicate>,
    pub methods: Vec<Method>,
    pub loc: SourceLoc,
}

impl Contract {
    pub fn is_global(&self, name: &str) -> bool {
        self.globals.iter().any(|g| g == name)
    }

    pub fn method(&self, name: &str) -> Option<&Method> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn predicate(&self, name: &str) -> Option<&Predicate> {
        self.predicates.iter().find(|p| p.name == name)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub contracts: Vec<Contract>,
}

impl Program {
    pub fn contract(&self, name: &str) -> Option<&Contract> {
        self.contracts.iter().find(|c| c.name == name)
    }

    pub fn method(&self, contract: &str, method: &str) -> Option<(&Contract, &Method)> {
        let c = self.contract(contract)?;
        Some((c, c.method(method)?))
    }

    /// Copy of the program with every source location zeroed, for structural
    /// comparison across pretty-print/re-parse.
    pub fn erase_locs(&self) -> Program {
        let mut p = self.clone();
        for c in &mut p.contracts {
            c.loc = SourceLoc::default();
            for pred in &mut c.predicates {
                pred.loc = SourceLoc::default();
            }
            for m in &mut c.methods {
                m.loc = SourceLoc::default();
                m.requires.loc = SourceLoc::default();
                m.ensures.loc = SourceLoc::default();
                if let MethodBody::Stmts(body) = &mut m.body {
                    erase_block(body);
                }
            }
        }
        p
    }
}

fn erase_block(body: &mut [Stmt]) {
    for s in body {
        s.loc = SourceLoc::default();
        match &mut s.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                erase_block(then_body);
                erase_block(else_body);
            }
            StmtKind::While { body, .. } => erase_block(body),
            _ => {}
        }
    }
}

fn expr_globals(e: &Expr, ctx: &Contract, out: &mut BTreeSet<String>) {
    match e {
        Expr::Name(n) if ctx.is_global(n) => {
            out.insert(n.clone());
        }
        Expr::Old(g) => {
            out.insert(g.clone());
        }
        Expr::Bin(_, l, r) => {
            expr_globals(l, ctx, out);
            expr_globals(r, ctx, out);
        }
        _ => {}
    }
}

/// Globals read (in the current state) by an expression; `old(G)` excluded.
pub fn expr_reads(e: &Expr, ctx: &Contract, out: &mut BTreeSet<String>) {
    match e {
        Expr::Name(n) if ctx.is_global(n) => {
            out.insert(n.clone());
        }
        Expr::Bin(_, l, r) => {
            expr_reads(l, ctx, out);
            expr_reads(r, ctx, out);
        }
        _ => {}
    }
}

/// Globals a predicate reads directly or through the predicates it calls.
pub fn predicate_reads(name: &str, ctx: &Contract) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut visited = BTreeSet::new();
    let mut stack = vec![name.to_string()];
    while let Some(p) = stack.pop() {
        if !visited.insert(p.clone()) {
            continue;
        }
        let Some(pred) = ctx.predicate(&p) else {
            continue;
        };
        let mut exprs = Vec::new();
        pred.body.exprs(&mut exprs);
        for e in exprs {
            // parameters shadow nothing: globals cannot share names with params
            expr_reads(e, ctx, &mut out);
        }
        collect_bool(&pred.body, &mut |b| match b {
            BoolExpr::Pred(q, _) => stack.push(q.clone()),
            BoolExpr::Acc(g) => {
                out.insert(g.clone());
            }
            _ => {}
        });
    }
    out
}

pub(crate) fn collect_bool(b: &BoolExpr, visit: &mut dyn FnMut(&BoolExpr)) {
    visit(b);
    match b {
        BoolExpr::And(x, y) | BoolExpr::Or(x, y) => {
            collect_bool(x, visit);
            collect_bool(y, visit);
        }
        BoolExpr::Not(x) => collect_bool(x, visit),
        _ => {}
    }
}

/// Globals read by the precise atoms of `f` together with those under `acc`.
pub fn free_globals(f: &Formula, ctx: &Contract) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for atom in f.atoms() {
        match atom {
            Atom::Acc(g) => {
                out.insert(g.clone());
            }
            Atom::Cmp(l, _, r) => {
                expr_globals(l, ctx, &mut out);
                expr_globals(r, ctx, &mut out);
            }
            Atom::Pred(p, args) => {
                for a in args {
                    expr_globals(a, ctx, &mut out);
                }
                out.extend(predicate_reads(p, ctx));
            }
        }
    }
    out
}

/// Globals whose current value the atom reads.
pub fn atom_reads(atom: &Atom, ctx: &Contract) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    match atom {
        Atom::Acc(_) => {}
        Atom::Cmp(l, _, r) => {
            expr_reads(l, ctx, &mut out);
            expr_reads(r, ctx, &mut out);
        }
        Atom::Pred(p, args) => {
            for a in args {
                expr_reads(a, ctx, &mut out);
            }
            out.extend(predicate_reads(p, ctx));
        }
    }
    out
}

fn check_names(atom: &Atom, ctx: &Contract) -> Result<(), ResolveError> {
    match atom {
        Atom::Acc(g) if !ctx.is_global(g) => Err(ResolveError::UnknownGlobal(g.clone())),
        Atom::Pred(p, args) => match ctx.predicate(p) {
            None => Err(ResolveError::UnknownPredicate(p.clone())),
            Some(pred) if pred.params.len() != args.len() => Err(ResolveError::Arity {
                name: p.clone(),
                expected: pred.params.len(),
                found: args.len(),
            }),
            Some(_) => Ok(()),
        },
        _ => Ok(()),
    }
}

/// True iff every global read by a precise atom is covered by an `acc` atom of
/// the same formula.
pub fn is_self_framed(f: &Formula, ctx: &Contract) -> Result<bool, ResolveError> {
    framed_by(f, ctx, &BTreeSet::new())
}

/// Like [`is_self_framed`], with `extra` slots also counting as framed.
pub fn framed_by(
    f: &Formula,
    ctx: &Contract,
    extra: &BTreeSet<String>,
) -> Result<bool, ResolveError> {
    let mut owned: BTreeSet<String> = extra.clone();
    for atom in f.atoms() {
        check_names(atom, ctx)?;
        if let Atom::Acc(g) = atom {
            owned.insert(g.clone());
        }
    }
    Ok(f.atoms().all(|a| atom_reads(a, ctx).is_subset(&owned)))
}
