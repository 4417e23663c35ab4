//! Spec erosion: replacing a precise formula by `? and <subset of its atoms>`.

use serde::Serialize;

use crate::ast::*;
use crate::resolve::resolve_stage;
use crate::verifier::verify_program;
use crate::wf::Stage;

use super::{dynamic_verify_trace, entry_points, enumerate_equivalence, ledger_grid, vectors};
use crate::vm::{load_program, Transaction};
use crate::weaver::weave;

#[derive(Clone, Debug)]
pub struct Erosion {
    /// Which formula was eroded and what was kept, e.g. `Counter.sell requires [0]`.
    pub label: String,
    pub program: Program,
}

/// Visits every formula a specifier writes, in source order.
fn formulas(p: &mut Program, visit: &mut dyn FnMut(String, &mut Formula)) {
    for c in p.contracts.iter_mut().filter(|c| !c.is_extern) {
        for m in &mut c.methods {
            let name = format!("{}.{}", c.name, m.name);
            visit(format!("{name} requires"), &mut m.requires.formula);
            visit(format!("{name} ensures"), &mut m.ensures.formula);
            if let MethodBody::Stmts(body) = &mut m.body {
                block_formulas(&name, body, visit);
            }
        }
    }
}

fn block_formulas(name: &str, stmts: &mut [Stmt], visit: &mut dyn FnMut(String, &mut Formula)) {
    for s in stmts {
        let at = s.loc;
        match &mut s.kind {
            StmtKind::While { invariant, body, .. } => {
                visit(format!("{name} invariant@{at}"), invariant);
                block_formulas(name, body, visit);
            }
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                block_formulas(name, then_body, visit);
                block_formulas(name, else_body, visit);
            }
            StmtKind::Assert(f) => visit(format!("{name} assert@{at}"), f),
            _ => {}
        }
    }
}

/// Index sets kept by the erosions of a formula with `k` atoms: every subset
/// when `k <= 4`, otherwise the empty set, singletons, leave-one-out and all.
fn kept_subsets(k: usize) -> Vec<Vec<usize>> {
    if k <= 4 {
        return (0..1u32 << k)
            .map(|mask| (0..k).filter(|i| mask & (1 << i) != 0).collect())
            .collect();
    }
    let mut out = vec![vec![]];
    out.extend((0..k).map(|i| vec![i]));
    out.extend((0..k).map(|skip| (0..k).filter(|&i| i != skip).collect()));
    out.push((0..k).collect());
    out
}

/// All well-formed erosions of `p`. Ill-formed candidates are dropped.
pub fn erode(p: &Program) -> Vec<Erosion> {
    let mut targets = Vec::new();
    formulas(&mut p.clone(), &mut |label, f| {
        if !f.is_imprecise() {
            targets.push((label, f.atoms().count()));
        }
    });
    let mut out = Vec::new();
    for (label, k) in targets {
        for keep in kept_subsets(k) {
            let mut q = p.clone();
            formulas(&mut q, &mut |l, f| {
                if l == label && !f.is_imprecise() {
                    let atoms: Vec<Atom> = f.atoms().cloned().collect();
                    *f = Formula::imprecise(keep.iter().map(|&i| atoms[i].clone()).collect());
                }
            });
            if let Ok(q) = resolve_stage(q, Stage::Source) {
                out.push(Erosion {
                    label: format!("{label} {keep:?}"),
                    program: q,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ErosionReport {
    pub erosions: usize,
    /// Erosions that turned a verifying program into a static error.
    pub static_regressions: Vec<String>,
    /// Enumeration points that held before erosion and fail after it.
    pub dynamic_regressions: Vec<String>,
    pub points_checked: u64,
    /// VM/oracle disagreements found on the woven erosions.
    pub equivalence_disagreements: usize,
}

/// Checks both halves of the gradual guarantee for every erosion of `p`.
/// `p` may carry adversary bodies; they are not verified.
pub fn erosion_suite(p: &Program, bound: u64) -> ErosionReport {
    let mut report = ErosionReport::default();
    let verifies = !verify_program(p).has_static_error();
    let grid = ledger_grid(p, bound);
    let mut baseline = Vec::new();
    for (c, m, arity) in entry_points(p) {
        for args in vectors(arity, bound) {
            let tx = Transaction::new(&c, &m, args);
            for start in &grid {
                if dynamic_verify_trace(p, start, &tx).held() {
                    baseline.push((tx.clone(), start.clone()));
                }
            }
        }
    }
    for e in erode(p) {
        report.erosions += 1;
        let eroded = verify_program(&e.program);
        if verifies && eroded.has_static_error() {
            report.static_regressions.push(e.label.clone());
        }
        if let Ok(w) = weave(&e.program, &eroded) {
            let img = load_program(&w, None).expect("adversaries already attached");
            report.equivalence_disagreements += enumerate_equivalence(&e.program, &img, bound).disagreements.len();
        }
        for (tx, start) in &baseline {
            report.points_checked += 1;
            if !dynamic_verify_trace(&e.program, start, tx).held() {
                report
                    .dynamic_regressions
                    .push(format!("{}: {tx} from {}", e.label, start.to_json()));
            }
        }
    }
    report
}
