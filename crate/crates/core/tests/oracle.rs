mod common;

use common::*;
use gvc_core::obligation::ObligationKind;
use gvc_core::oracle::*;
use gvc_core::verifier::verify_program;
use gvc_core::vm::{load_program, Ledger, Transaction};
use gvc_core::weaver::weave;

fn count(n: u64) -> Ledger {
    let p = prepared("sell");
    Ledger::from_json(&p.program, &format!(r#"{{"Counter": {{"Count": {n}}}}}"#)).unwrap()
}

#[test]
fn sell_traces() {
    let p = prepared("sell");
    let ok = dynamic_verify_trace(&p.program, &count(10), &Transaction::new("Counter", "sell", vec![3]));
    match &ok.verdict {
        Verdict::AllObligationsHeld { final_state, result } => {
            assert_eq!(final_state.get("Counter", "Count"), 7);
            assert_eq!(*result, None);
        }
        v => panic!("{v:?}"),
    }
    let bad = dynamic_verify_trace(&p.program, &count(10), &Transaction::new("Counter", "sell", vec![12]));
    let k = bad.violated().unwrap();
    assert_eq!((k.kind, k.line, k.payload.as_str()), (ObligationKind::UnderflowSafety, 7, "scratch >= quantity"));
    let Verdict::FirstViolation { state, locals, .. } = &bad.verdict else { unreachable!() };
    assert_eq!(state.get("Counter", "Count"), 10);
    assert_eq!(locals.get("scratch"), Some(&10));
}

#[test]
fn sell_enumeration_counts() {
    let p = prepared("sell");
    let r = enumerate_equivalence(&p.executable, p.image.as_ref().unwrap(), 8);
    assert!(r.disagreements.is_empty());
    // Count and quantity each range over 0..=8; sale succeeds iff quantity <= Count
    let committed = (0..=8u64).flat_map(|c| (0..=8u64).map(move |q| (c, q))).filter(|(c, q)| q <= c).count();
    assert_eq!(r.cases, 81);
    assert_eq!(r.committed as usize, committed);
    assert_eq!(r.reverted as usize, 81 - committed);
}

#[test]
fn grid_and_vectors_cover_the_box() {
    let p = prepared("vault");
    let grid = ledger_grid(&p.program, 3);
    assert_eq!(grid.len(), 16);
    assert_eq!(vectors(2, 3).len(), 16);
    assert_eq!(vectors(0, 3), vec![Vec::<u64>::new()]);
    assert_eq!(entry_points(&p.program).len(), 2);
}

#[test]
fn unconstrained_program_commits_everything() {
    let p = program("contract U:\n  #@ global A;\n  method m(x: uint64):\n    #@ requires ?;\n    #@ ensures ?;\n    A := x;\n");
    let w = weave(&p, &verify_program(&p)).unwrap();
    let img = load_program(&w, None).unwrap();
    let r = enumerate_equivalence(&p, &img, 4);
    assert_eq!((r.cases, r.committed, r.reverted), (25, 25, 0));
    assert!(r.disagreements.is_empty());
}

#[test]
fn every_corpus_program_agrees_with_the_oracle() {
    for e in corpus() {
        let p = gvc_core::corpus::prepare(&e).unwrap();
        let r = enumerate_equivalence(&p.executable, p.image.as_ref().unwrap(), 4);
        assert!(r.disagreements.is_empty(), "{}: {}", e.name, r.disagreements_json());
        assert_eq!(r.cases, r.committed + r.reverted);
    }
}

#[test]
fn unchecked_images_are_caught() {
    for name in ["vault", "bank"] {
        let p = prepared(name);
        let img = p.image.as_ref().unwrap().unchecked();
        let r = enumerate_equivalence(&p.executable, &img, 4);
        assert!(!r.disagreements.is_empty(), "{name}");
        let d = &r.disagreements[0];
        assert!(!matches!(d.oracle_verdict, Verdict::AllObligationsHeld { .. }));
    }
}

#[test]
fn dropping_a_woven_check_is_caught() {
    // keep the boundary rules but lose every residual check
    let p = prepared("vault");
    let mut img = p.image.clone().unwrap();
    img.checks.clear();
    img.program = gvc_core::weaver::strip(&img.program);
    let r = enumerate_equivalence(&p.executable, &img, 4);
    assert!(!r.disagreements.is_empty());
}

#[test]
fn erosions_of_a_precise_method() {
    let p = prepared("sell_precise");
    let es = erode(&p.program);
    // two requires atoms give four subsets, the single ensures atom two
    assert_eq!(es.len(), 6);
    for e in &es {
        assert!(!verify_program(&e.program).has_static_error(), "{}", e.label);
    }
}

#[test]
fn erosion_keeps_both_halves_of_the_guarantee() {
    for name in ["sell_precise", "vault", "loops", "clamp"] {
        let p = prepared(name);
        let r = erosion_suite(&p.executable, 3);
        assert!(r.erosions > 0, "{name}");
        assert!(r.points_checked > 0, "{name}");
        assert!(r.static_regressions.is_empty(), "{name}: {:?}", r.static_regressions);
        assert!(r.dynamic_regressions.is_empty(), "{name}: {:?}", r.dynamic_regressions);
        assert_eq!(r.equivalence_disagreements, 0, "{name}");
    }
}

#[test]
fn resource_exhaustion_is_inconclusive() {
    let p = program("contract P:\n  #@ predicate down(n) = n == 0 or (n >= 1 and down(n - 1));\n  method m(x: uint64):\n    #@ requires ? and down(x);\n    #@ ensures ?;\n    y := x;\n");
    let j = dynamic_verify_trace(&p, &Ledger::default(), &Transaction::new("P", "m", vec![5000]));
    assert!(matches!(j.verdict, Verdict::Inconclusive(_)));
}
