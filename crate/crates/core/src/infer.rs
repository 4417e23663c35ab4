//! Local type inference and definite-assignment checking.
//!
//! Every value is a uint64, so inference mostly amounts to seeding each local
//! at its first assignment and rejecting uses that precede any assignment or
//! that put a bare number where a condition is expected.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::*;
use crate::error::InferError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Type {
    Uint64,
    /// Condition-only temporaries. The surface grammar cannot bind them
    /// today, so no local is ever inferred to this type.
    Bool,
}

/// Inferred local types of one method, with the location that seeded each.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeEnv {
    pub locals: BTreeMap<String, (Type, SourceLoc)>,
}

impl TypeEnv {
    pub fn get(&self, name: &str) -> Option<Type> {
        self.locals.get(name).map(|(t, _)| *t)
    }

    pub fn is_empty(&self) -> bool {
        self.locals.is_empty()
    }
}

/// Method environments keyed by `(contract, method)`.
pub type TypeEnvs = BTreeMap<(String, String), TypeEnv>;

pub fn infer_types(program: &Program) -> Result<TypeEnvs, InferError> {
    let mut envs = BTreeMap::new();
    for c in &program.contracts {
        for m in &c.methods {
            let env = infer_method(c, m)?;
            envs.insert((c.name.clone(), m.name.clone()), env);
        }
    }
    Ok(envs)
}

pub fn infer_method(c: &Contract, m: &Method) -> Result<TypeEnv, InferError> {
    let mut cx = Infer {
        contract: c,
        params: m.params.iter().cloned().collect(),
        env: TypeEnv::default(),
        assigned_anywhere: BTreeSet::new(),
    };
    collect_assigned(m.stmts(), c, &mut cx.assigned_anywhere);
    let mut defined = BTreeSet::new();
    cx.block(m.stmts(), &mut defined)?;
    Ok(cx.env)
}

fn collect_assigned(stmts: &[Stmt], c: &Contract, out: &mut BTreeSet<String>) {
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { target, .. }
            | StmtKind::Call {
                target: Some(target),
                ..
            } if !c.is_global(target) => {
                out.insert(target.clone());
            }
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                collect_assigned(then_body, c, out);
                collect_assigned(else_body, c, out);
            }
            StmtKind::While { body, .. } => collect_assigned(body, c, out),
            _ => {}
        }
    }
}

struct Infer<'a> {
    contract: &'a Contract,
    params: BTreeSet<String>,
    env: TypeEnv,
    assigned_anywhere: BTreeSet<String>,
}

impl Infer<'_> {
    fn block(&mut self, stmts: &[Stmt], defined: &mut BTreeSet<String>) -> Result<(), InferError> {
        for s in stmts {
            self.stmt(s, defined)?;
        }
        Ok(())
    }

    fn use_expr(&self, e: &Expr, defined: &BTreeSet<String>, loc: SourceLoc) -> Result<(), InferError> {
        let mut names = Vec::new();
        e.names(&mut names);
        for n in names {
            if self.params.contains(&n) || self.contract.is_global(&n) || defined.contains(&n) {
                continue;
            }
            if self.assigned_anywhere.contains(&n) {
                return Err(InferError::UseBeforeAssign { name: n, loc });
            }
            // never assigned at all: left for name resolution to report
        }
        Ok(())
    }

    fn assign(&mut self, target: &str, defined: &mut BTreeSet<String>, loc: SourceLoc) -> Result<(), InferError> {
        if self.params.contains(target) {
            return Err(InferError::AssignToParam {
                name: target.to_string(),
                loc,
            });
        }
        if self.contract.is_global(target) {
            return Ok(());
        }
        self.env
            .locals
            .entry(target.to_string())
            .or_insert((Type::Uint64, loc));
        defined.insert(target.to_string());
        Ok(())
    }

    fn cond(&self, b: &BoolExpr, defined: &BTreeSet<String>, loc: SourceLoc) -> Result<(), InferError> {
        let mut bad = None;
        collect_bool(b, &mut |node| {
            if let BoolExpr::Truthy(e) = node {
                bad.get_or_insert(e.clone());
            }
        });
        if let Some(e) = bad {
            let first = match &e {
                Expr::Name(n) => self.env.locals.get(n).map(|(_, l)| *l).unwrap_or(loc),
                _ => loc,
            };
            return Err(InferError::NotACondition {
                expr: e.to_string(),
                loc,
                first,
            });
        }
        let mut exprs = Vec::new();
        b.exprs(&mut exprs);
        for e in exprs {
            self.use_expr(e, defined, loc)?;
        }
        Ok(())
    }

    fn formula(&self, f: &Formula, defined: &BTreeSet<String>, loc: SourceLoc) -> Result<(), InferError> {
        for a in f.atoms() {
            for e in a.exprs() {
                self.use_expr(e, defined, loc)?;
            }
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt, defined: &mut BTreeSet<String>) -> Result<(), InferError> {
        match &s.kind {
            StmtKind::Assign { target, value } => {
                self.use_expr(value, defined, s.loc)?;
                self.assign(target, defined, s.loc)
            }
            StmtKind::Call { target, args, .. } => {
                for a in args {
                    self.use_expr(a, defined, s.loc)?;
                }
                if let Some(t) = target {
                    self.assign(t, defined, s.loc)?;
                }
                Ok(())
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                self.cond(cond, defined, s.loc)?;
                let mut then_defs = defined.clone();
                self.block(then_body, &mut then_defs)?;
                let mut else_defs = defined.clone();
                self.block(else_body, &mut else_defs)?;
                *defined = then_defs.intersection(&else_defs).cloned().collect();
                Ok(())
            }
            StmtKind::While {
                cond,
                invariant,
                body,
            } => {
                self.cond(cond, defined, s.loc)?;
                self.formula(invariant, defined, s.loc)?;
                let mut body_defs = defined.clone();
                self.block(body, &mut body_defs)
            }
            StmtKind::Return(e) => self.use_expr(e, defined, s.loc),
            StmtKind::Assert(f) => self.formula(f, defined, s.loc),
            StmtKind::Check(c) => {
                for e in c.payload.exprs() {
                    self.use_expr(e, defined, s.loc)?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::lex;
    use crate::parser::parse_program;

    fn infer(src: &str) -> Result<TypeEnvs, InferError> {
        infer_types(&parse_program(&lex(src).unwrap()).unwrap())
    }

    #[test]
    fn scratch_local_is_uint64() {
        let envs = infer("contract Counter:\n  #@ global Count;\n  method sell(quantity: uint64):\n    scratch := Count;\n    Count := scratch - quantity;\n").unwrap();
        let env = &envs[&("Counter".to_string(), "sell".to_string())];
        assert_eq!(env.get("scratch"), Some(Type::Uint64));
        assert_eq!(env.locals.len(), 1);
    }

    #[test]
    fn uint64_in_condition_position_is_rejected() {
        let err = infer("contract A:\n  method m():\n    x := 1;\n    if x:\n      x := 2;\n").unwrap_err();
        match err {
            InferError::NotACondition { first, loc, .. } => {
                assert_eq!(first.line, 3);
                assert_eq!(loc.line, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn no_locals_means_empty_env() {
        let envs = infer("contract A:\n  #@ global G;\n  method m(x: uint64):\n    G := x;\n").unwrap();
        assert!(envs.values().all(|e| e.is_empty()));
    }

    #[test]
    fn use_before_assign_is_flow_sensitive() {
        let err = infer("contract A:\n  method m(x: uint64):\n    if x > 1:\n      y := 1;\n    z := y;\n").unwrap_err();
        assert!(matches!(err, InferError::UseBeforeAssign { ref name, .. } if name == "y"));
        infer("contract A:\n  method m(x: uint64):\n    if x > 1:\n      y := 1;\n    else:\n      y := 2;\n    z := y;\n").unwrap();
    }

    #[test]
    fn parameters_are_read_only() {
        let err = infer("contract A:\n  method m(x: uint64):\n    x := 1;\n").unwrap_err();
        assert!(matches!(err, InferError::AssignToParam { .. }));
    }
}
