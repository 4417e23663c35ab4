//! Name resolution, formula normalization and the front-end entry points.

use std::collections::BTreeSet;

use crate::ast::*;
use crate::error::{FrontendError, ResolveError};
use crate::infer::{infer_types, TypeEnvs};
use crate::lexer::lex;
use crate::parser::parse_program;
use crate::wf::{well_formed, Stage};

/// Resolves a parsed source program: every name must bind, formulas are
/// normalized, and the well-formedness rules must hold.
pub fn resolve(ast: Program) -> Result<Program, FrontendError> {
    resolve_stage(ast, Stage::Source)
}

pub fn resolve_stage(ast: Program, stage: Stage) -> Result<Program, FrontendError> {
    for c in &ast.contracts {
        check_contract(&ast, c)?;
    }
    let program = normalize_program(ast);
    let diags = well_formed(&program, stage);
    if !diags.is_empty() {
        return Err(FrontendError::IllFormed(diags));
    }
    Ok(program)
}

/// Lex, parse, infer and resolve a source file.
pub fn load_source(text: &str) -> Result<Program, FrontendError> {
    load_stage(text, Stage::Source).map(|(p, _)| p)
}

/// Like [`load_source`], accepting woven `check` statements.
pub fn load_woven(text: &str) -> Result<Program, FrontendError> {
    load_stage(text, Stage::Woven).map(|(p, _)| p)
}

pub fn load_stage(text: &str, stage: Stage) -> Result<(Program, TypeEnvs), FrontendError> {
    let tokens = lex(text)?;
    let ast = parse_program(&tokens)?;
    let envs = infer_types(&ast)?;
    let program = resolve_stage(ast, stage)?;
    Ok((program, envs))
}

fn normalize_program(mut p: Program) -> Program {
    for c in &mut p.contracts {
        for m in &mut c.methods {
            m.requires.formula = normalize_formula(&m.requires.formula);
            m.ensures.formula = normalize_formula(&m.ensures.formula);
            if let MethodBody::Stmts(body) = &mut m.body {
                normalize_block(body);
            }
        }
    }
    p
}

fn normalize_block(stmts: &mut [Stmt]) {
    for s in stmts {
        match &mut s.kind {
            StmtKind::While {
                invariant, body, ..
            } => {
                *invariant = normalize_formula(invariant);
                normalize_block(body);
            }
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                normalize_block(then_body);
                normalize_block(else_body);
            }
            StmtKind::Assert(f) => *f = normalize_formula(f),
            _ => {}
        }
    }
}

fn err(loc: SourceLoc, error: ResolveError) -> FrontendError {
    FrontendError::Resolve { loc, error }
}

struct Scope<'a> {
    contract: &'a Contract,
    names: BTreeSet<String>,
}

impl Scope<'_> {
    fn expr(&self, e: &Expr, loc: SourceLoc) -> Result<(), FrontendError> {
        match e {
            Expr::Name(n) => {
                if self.names.contains(n) || self.contract.is_global(n) {
                    Ok(())
                } else {
                    Err(err(loc, ResolveError::UnknownName(n.clone())))
                }
            }
            Expr::Old(g) if !self.contract.is_global(g) => {
                Err(err(loc, ResolveError::UnknownGlobal(g.clone())))
            }
            Expr::Bin(_, l, r) => {
                self.expr(l, loc)?;
                self.expr(r, loc)
            }
            _ => Ok(()),
        }
    }

    fn pred(&self, name: &str, args: &[Expr], loc: SourceLoc) -> Result<(), FrontendError> {
        let Some(p) = self.contract.predicate(name) else {
            return Err(err(loc, ResolveError::UnknownPredicate(name.to_string())));
        };
        if p.params.len() != args.len() {
            return Err(err(
                loc,
                ResolveError::Arity {
                    name: name.to_string(),
                    expected: p.params.len(),
                    found: args.len(),
                },
            ));
        }
        args.iter().try_for_each(|a| self.expr(a, loc))
    }

    fn atom(&self, a: &Atom, loc: SourceLoc) -> Result<(), FrontendError> {
        match a {
            Atom::Acc(g) if !self.contract.is_global(g) => {
                Err(err(loc, ResolveError::UnknownGlobal(g.clone())))
            }
            Atom::Acc(_) => Ok(()),
            Atom::Cmp(l, _, r) => {
                self.expr(l, loc)?;
                self.expr(r, loc)
            }
            Atom::Pred(p, args) => self.pred(p, args, loc),
        }
    }

    fn formula(&self, f: &Formula, loc: SourceLoc) -> Result<(), FrontendError> {
        f.atoms().try_for_each(|a| self.atom(a, loc))
    }

    fn bool_expr(&self, b: &BoolExpr, loc: SourceLoc) -> Result<(), FrontendError> {
        match b {
            BoolExpr::Cmp(l, _, r) => {
                self.expr(l, loc)?;
                self.expr(r, loc)
            }
            BoolExpr::Acc(g) if !self.contract.is_global(g) => {
                Err(err(loc, ResolveError::UnknownGlobal(g.clone())))
            }
            BoolExpr::Pred(p, args) => self.pred(p, args, loc),
            BoolExpr::And(x, y) | BoolExpr::Or(x, y) => {
                self.bool_expr(x, loc)?;
                self.bool_expr(y, loc)
            }
            BoolExpr::Not(x) => self.bool_expr(x, loc),
            BoolExpr::Truthy(e) => self.expr(e, loc),
            BoolExpr::Acc(_) | BoolExpr::Unknown => Ok(()),
        }
    }
}

fn check_contract(p: &Program, c: &Contract) -> Result<(), FrontendError> {
    for pred in &c.predicates {
        let scope = Scope {
            contract: c,
            names: pred.params.iter().cloned().collect(),
        };
        scope.bool_expr(&pred.body, pred.loc)?;
    }
    for m in &c.methods {
        let params: BTreeSet<String> = m.params.iter().cloned().collect();
        let spec_scope = Scope {
            contract: c,
            names: params.clone(),
        };
        spec_scope.formula(&m.requires.formula, m.requires.loc)?;
        spec_scope.formula(&m.ensures.formula, m.ensures.loc)?;
        for chk in &m.exit_checks {
            spec_scope.atom(&chk.payload, m.ensures.loc)?;
        }
        let mut locals = params;
        collect_locals(m.stmts(), c, &mut locals);
        let body_scope = Scope {
            contract: c,
            names: locals,
        };
        check_block(p, &body_scope, m.stmts())?;
    }
    Ok(())
}

fn collect_locals(stmts: &[Stmt], c: &Contract, out: &mut BTreeSet<String>) {
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
                collect_locals(then_body, c, out);
                collect_locals(else_body, c, out);
            }
            StmtKind::While { body, .. } => collect_locals(body, c, out),
            _ => {}
        }
    }
}

fn check_block(p: &Program, scope: &Scope<'_>, stmts: &[Stmt]) -> Result<(), FrontendError> {
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { value, .. } => scope.expr(value, s.loc)?,
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                scope.bool_expr(cond, s.loc)?;
                check_block(p, scope, then_body)?;
                check_block(p, scope, else_body)?;
            }
            StmtKind::While {
                cond,
                invariant,
                body,
            } => {
                scope.bool_expr(cond, s.loc)?;
                scope.formula(invariant, s.loc)?;
                check_block(p, scope, body)?;
            }
            StmtKind::Call {
                contract,
                method,
                args,
                ..
            } => {
                let Some(callee_contract) = p.contract(contract) else {
                    return Err(err(s.loc, ResolveError::UnknownContract(contract.clone())));
                };
                let Some(callee) = callee_contract.method(method) else {
                    return Err(err(
                        s.loc,
                        ResolveError::UnknownMethod {
                            contract: contract.clone(),
                            method: method.clone(),
                        },
                    ));
                };
                if callee.params.len() != args.len() {
                    return Err(err(
                        s.loc,
                        ResolveError::Arity {
                            name: format!("{contract}.{method}"),
                            expected: callee.params.len(),
                            found: args.len(),
                        },
                    ));
                }
                for a in args {
                    scope.expr(a, s.loc)?;
                }
            }
            StmtKind::Return(e) => scope.expr(e, s.loc)?,
            StmtKind::Assert(f) => scope.formula(f, s.loc)?,
            StmtKind::Check(c) => scope.atom(&c.payload, s.loc)?,
        }
    }
    Ok(())
}
