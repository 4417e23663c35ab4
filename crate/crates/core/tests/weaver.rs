mod common;

use common::*;
use gvc_core::ast::StmtKind;
use gvc_core::resolve::load_woven;
use gvc_core::verifier::verify_program;
use gvc_core::weaver::{strip, weave, InstrumentedProgram, WeaveError};

#[test]
fn sell_check_sits_before_the_global_write() {
    let p = prepared("sell");
    let w = p.woven.unwrap();
    let body = w.program.contracts[0].methods[0].stmts();
    assert_eq!(body.len(), 3);
    let StmtKind::Check(c) = &body[1].kind else {
        panic!("expected a check, got {:?}", body[1].kind);
    };
    assert_eq!(c.id, "c0");
    assert_eq!(c.payload.to_string(), "scratch >= quantity");
    assert!(matches!(&body[2].kind, StmtKind::Assign { target, .. } if target == "Count"));
    assert!(w.render().contains("    #! check scratch >= quantity @c0;\n    Count := scratch - quantity;\n"));
    assert_eq!(w.check_count(), 1);
}

#[test]
fn precise_sell_weaves_nothing() {
    let p = prepared("sell_precise");
    let w = p.woven.unwrap();
    assert_eq!(w.check_count(), 0);
    let table = w.boundary_table();
    assert_eq!(table.len(), 1);
    assert_eq!(table[0].entry, vec!["quantity <= Count", "acc(Count)"]);
    assert!(table[0].exit.is_empty());
}

#[test]
fn woven_text_reloads_to_the_same_program() {
    for e in corpus() {
        let p = gvc_core::corpus::prepare(&e).unwrap();
        let w = p.woven.unwrap();
        let back = load_woven(&w.render()).unwrap();
        assert_eq!(back.erase_locs(), w.program.erase_locs(), "{}", e.name);
    }
}

#[test]
fn strip_undoes_weave() {
    for e in corpus() {
        let p = gvc_core::corpus::prepare(&e).unwrap();
        let w = p.woven.unwrap();
        assert_eq!(strip(&w.program), p.program, "{}", e.name);
    }
}

#[test]
fn every_residual_is_woven_once() {
    for e in corpus() {
        let p = gvc_core::corpus::prepare(&e).unwrap();
        let w = p.woven.unwrap();
        assert_eq!(w.check_count(), p.report.residuals().count(), "{}", e.name);
        assert_eq!(w.checks.len(), w.check_count());
    }
}

#[test]
fn exit_residuals_become_exit_checks() {
    let p = prepared("split");
    let w = p.woven.unwrap();
    let m = &w.program.contracts[0].methods[0];
    assert_eq!(m.exit_checks.len(), 1);
    assert_eq!(m.exit_checks[0].payload.to_string(), "Share <= old(Pot)");
    assert!(w.render().contains("#! check_exit Share <= old(Pot) @c0;"));
}

#[test]
fn loop_end_residuals_close_the_body() {
    let src = "contract L:\n  #@ global T;\n  method m(n: uint64):\n    #@ requires ? and acc(T);\n    #@ ensures ?;\n    k := n;\n    while k > 0:\n      #@ invariant ? and acc(T) and T >= 5;\n      T := T - 1;\n      k := k - 1;\n";
    let p = program(src);
    let r = verify_program(&p);
    let w = weave(&p, &r).unwrap();
    let stmts = w.program.contracts[0].methods[0].stmts();
    let Some(body) = stmts.iter().find_map(|s| match &s.kind {
        StmtKind::While { body, .. } => Some(body),
        _ => None,
    }) else {
        panic!("expected the loop");
    };
    assert!(matches!(body.last().unwrap().kind, StmtKind::Check(_)));
}

#[test]
fn stale_report_is_refused() {
    let p = prepared("sell");
    let other = prepared("sell_precise");
    let err = weave(&p.program, &other.report).unwrap_err();
    assert!(matches!(err, WeaveError::StaleReport { .. }));
}

#[test]
fn static_errors_are_not_woven() {
    let p = program(&fixture("sell_strong.gcl"));
    let r = verify_program(&p);
    assert_eq!(weave(&p, &r).unwrap_err(), WeaveError::StaticError("Counter.sell".into()));
}

#[test]
fn sidecar_round_trips() {
    let w = prepared("vault").woven.unwrap();
    let back = InstrumentedProgram::parse_sidecar(&w.sidecar_json()).unwrap();
    assert_eq!(back, w.checks);
}
