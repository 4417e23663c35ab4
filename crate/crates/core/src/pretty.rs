//! Source rendering for plain and woven programs.

use std::fmt::Write;

use crate::ast::*;

const INDENT: &str = "  ";

pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    for (i, c) in p.contracts.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_contract(c, &mut out);
    }
    out
}

fn print_contract(c: &Contract, out: &mut String) {
    if c.is_extern {
        out.push_str("extern ");
    }
    writeln!(out, "contract {}:", c.name).unwrap();
    for g in &c.globals {
        writeln!(out, "{INDENT}#@ global {g};").unwrap();
    }
    for p in &c.predicates {
        writeln!(
            out,
            "{INDENT}#@ predicate {}({}) = {};",
            p.name,
            p.params.join(", "),
            p.body
        )
        .unwrap();
    }
    for m in &c.methods {
        print_method(m, out);
    }
}

fn print_method(m: &Method, out: &mut String) {
    let params: Vec<String> = m.params.iter().map(|p| format!("{p}: uint64")).collect();
    let ret = if m.returns { " -> uint64" } else { "" };
    writeln!(out, "{INDENT}method {}({}){ret}:", m.name, params.join(", ")).unwrap();
    let ind = INDENT.repeat(2);
    if m.requires.explicit {
        writeln!(out, "{ind}#@ requires {};", m.requires.formula).unwrap();
    }
    if m.ensures.explicit {
        writeln!(out, "{ind}#@ ensures {};", m.ensures.formula).unwrap();
    }
    for c in &m.exit_checks {
        writeln!(out, "{ind}#! check_exit {} @{};", c.payload, c.id).unwrap();
    }
    match &m.body {
        MethodBody::Opaque => writeln!(out, "{ind}opaque;").unwrap(),
        MethodBody::Stmts(stmts) => print_block(stmts, 2, out),
    }
}

fn print_block(stmts: &[Stmt], depth: usize, out: &mut String) {
    for s in stmts {
        print_stmt(s, depth, out);
    }
}

fn print_stmt(s: &Stmt, depth: usize, out: &mut String) {
    let ind = INDENT.repeat(depth);
    match &s.kind {
        StmtKind::Assign { target, value } => writeln!(out, "{ind}{target} := {value};").unwrap(),
        StmtKind::If {
            cond,
            then_body,
            else_body,
        } => {
            writeln!(out, "{ind}if {cond}:").unwrap();
            print_block(then_body, depth + 1, out);
            if !else_body.is_empty() {
                writeln!(out, "{ind}else:").unwrap();
                print_block(else_body, depth + 1, out);
            }
        }
        StmtKind::While {
            cond,
            invariant,
            body,
        } => {
            writeln!(out, "{ind}while {cond}:").unwrap();
            if !invariant.is_bare_unknown() {
                writeln!(out, "{ind}{INDENT}#@ invariant {invariant};").unwrap();
            }
            print_block(body, depth + 1, out);
        }
        StmtKind::Call {
            target,
            contract,
            method,
            args,
        } => {
            let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
            match target {
                Some(t) => writeln!(
                    out,
                    "{ind}{t} := call {contract}.{method}({});",
                    args.join(", ")
                )
                .unwrap(),
                None => writeln!(out, "{ind}call {contract}.{method}({});", args.join(", ")).unwrap(),
            }
        }
        StmtKind::Return(e) => writeln!(out, "{ind}return {e};").unwrap(),
        StmtKind::Assert(f) => writeln!(out, "{ind}#@ assert {f};").unwrap(),
        StmtKind::Check(c) => writeln!(out, "{ind}#! check {} @{};", c.payload, c.id).unwrap(),
    }
}
