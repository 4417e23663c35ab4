mod common;

use common::*;
use gvc_core::ast::*;
use gvc_core::error::{FrontendError, InferError, ResolveError};
use gvc_core::lexer::lex;
use gvc_core::parser::parse_formula;
use gvc_core::pretty::pretty_print;
use gvc_core::resolve::load_source;
use proptest::prelude::*;

fn parse_f(text: &str) -> Formula {
    parse_formula(&lex(text).unwrap()).unwrap()
}

fn err(src: &str) -> FrontendError {
    load_source(src).expect_err("should be rejected")
}

fn ill_formed(src: &str) -> Vec<String> {
    match err(src) {
        FrontendError::IllFormed(ds) => ds.into_iter().map(|d| d.message).collect(),
        e => panic!("expected well-formedness errors, got {e}"),
    }
}

#[test]
fn corpus_round_trips_through_the_pretty_printer() {
    for e in corpus() {
        let p = program(&e.source);
        let again = program(&pretty_print(&p));
        assert_eq!(again.erase_locs(), p.erase_locs(), "{}", e.name);
        assert_eq!(pretty_print(&again), pretty_print(&p), "{}", e.name);
    }
}

#[test]
fn locations_are_one_based() {
    let p = program(&entry("sell").source);
    let m = &p.contracts[0].methods[0];
    assert_eq!(m.stmts()[1].loc, SourceLoc::new(7, 5));
}

#[test]
fn lex_and_parse_errors_carry_locations() {
    match err("contract A:\n  method m():\n    x := 1 $ 2;\n") {
        FrontendError::Lex(e) => assert_eq!(e.loc, SourceLoc::new(3, 12)),
        e => panic!("{e}"),
    }
    match err("contract A:\n  method m():\n    x := ;\n") {
        FrontendError::Parse(e) => assert_eq!(e.loc.line, 3),
        e => panic!("{e}"),
    }
}

#[test]
fn type_errors() {
    assert!(matches!(
        err("contract A:\n  method m():\n    z := y;\n    y := 1;\n"),
        FrontendError::Infer(InferError::UseBeforeAssign { .. })
    ));
    assert!(matches!(
        err("contract A:\n  method m(x: uint64):\n    x := 1;\n"),
        FrontendError::Infer(InferError::AssignToParam { .. })
    ));
    assert!(matches!(
        err("contract A:\n  method m(x: uint64):\n    if x:\n      y := 1;\n"),
        FrontendError::Infer(InferError::NotACondition { .. })
    ));
}

#[test]
fn resolution_errors() {
    assert!(matches!(
        err("contract A:\n  method m():\n    #@ requires acc(B);\n    y := 1;\n"),
        FrontendError::Resolve { error: ResolveError::UnknownGlobal(_), .. }
    ));
    assert!(matches!(
        err("contract A:\n  method m():\n    call A.n();\n"),
        FrontendError::Resolve { error: ResolveError::UnknownMethod { .. }, .. }
    ));
    assert!(matches!(
        err("contract A:\n  method n(x: uint64):\n    y := x;\n  method m():\n    call A.n();\n"),
        FrontendError::Resolve { error: ResolveError::Arity { .. }, .. }
    ));
}

#[test]
fn precise_formulas_must_be_self_framed() {
    let ds = ill_formed("contract A:\n  #@ global G;\n  method m():\n    #@ requires G >= 1;\n    #@ ensures true;\n    y := 1;\n");
    assert_eq!(ds.len(), 1);
    // the same read is fine once imprecise
    program("contract A:\n  #@ global G;\n  method m():\n    #@ requires ? and G >= 1;\n    #@ ensures ?;\n    y := 1;\n");
}

#[test]
fn old_needs_access_on_entry() {
    ill_formed("contract A:\n  #@ global G;\n  method m():\n    #@ requires true;\n    #@ ensures ? and G == old(G);\n    y := 1;\n");
    program("contract A:\n  #@ global G;\n  method m():\n    #@ requires acc(G);\n    #@ ensures acc(G) and G == old(G);\n    y := 1;\n");
}

#[test]
fn old_and_result_only_in_ensures() {
    ill_formed("contract A:\n  #@ global G;\n  method m():\n    #@ requires acc(G) and old(G) >= 0;\n    #@ ensures acc(G);\n    y := 1;\n");
    ill_formed("contract A:\n  method m():\n    #@ requires true;\n    #@ ensures result >= 0;\n    y := 1;\n");
}

#[test]
fn predicates_are_pure_and_precise() {
    ill_formed("contract A:\n  #@ global G;\n  #@ predicate p(n) = acc(G);\n  method m():\n    y := 1;\n");
    ill_formed("contract A:\n  #@ predicate p(n) = ?;\n  method m():\n    y := 1;\n");
}

#[test]
fn woven_syntax_is_rejected_in_source() {
    assert!(load_source("contract A:\n  method m(x: uint64):\n    #! check x >= 1 @c0;\n    y := x;\n").is_err());
}

#[test]
fn normalize_examples() {
    let f = parse_f("acc(G) and ? and G >= 1 and acc(G) and ?");
    assert_eq!(normalize_formula(&f).to_string(), "? and acc(G) and G >= 1");
    assert_eq!(normalize_formula(&parse_f("true")).to_string(), "true");
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u64..1000).prop_map(Expr::Int),
        prop::sample::select(vec!["G", "H", "x"]).prop_map(Expr::name),
        prop::sample::select(vec!["G", "H"]).prop_map(|g| Expr::Old(g.to_string())),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        (
            prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Mod]),
            inner.clone(),
            inner,
        )
            .prop_map(|(op, l, r)| Expr::bin(op, l, r))
    })
}

fn conjunct() -> impl Strategy<Value = Conjunct> {
    let rel = prop::sample::select(vec![RelOp::Eq, RelOp::Ne, RelOp::Le, RelOp::Lt, RelOp::Ge, RelOp::Gt]);
    prop_oneof![
        1 => Just(Conjunct::Unknown),
        1 => prop::sample::select(vec!["G", "H"]).prop_map(|g| Conjunct::Atom(Atom::Acc(g.to_string()))),
        1 => (expr(), prop::collection::vec(expr(), 0..3)).prop_map(|(e, mut rest)| {
            rest.insert(0, e);
            Conjunct::Atom(Atom::Pred("p".into(), rest))
        }),
        3 => (expr(), rel, expr()).prop_map(|(l, op, r)| Conjunct::Atom(Atom::cmp(l, op, r))),
    ]
}

fn formula() -> impl Strategy<Value = Formula> {
    prop::collection::vec(conjunct(), 1..6).prop_map(|conjuncts| Formula { conjuncts })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn formulas_round_trip(f in formula()) {
        prop_assert_eq!(parse_f(&f.to_string()), f);
    }

    #[test]
    fn normalize_is_idempotent(f in formula()) {
        let once = normalize_formula(&f);
        prop_assert_eq!(normalize_formula(&once), once.clone());
        prop_assert_eq!(once.is_imprecise(), f.is_imprecise());
        let mut a: Vec<_> = f.atoms().cloned().collect();
        let mut b: Vec<_> = once.atoms().cloned().collect();
        a.sort();
        a.dedup();
        b.sort();
        b.dedup();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn generated_bodies_round_trip(
        exprs in prop::collection::vec(expr().prop_filter("no old", |e| !e.to_string().contains("old")), 1..6),
    ) {
        let mut src = String::from("contract A:\n  #@ global G;\n  #@ global H;\n  method m(x: uint64):\n    #@ requires ? and acc(G) and acc(H);\n    #@ ensures ?;\n");
        for (i, e) in exprs.iter().enumerate() {
            src.push_str(&format!("    G := {e};\n"));
            if i % 2 == 1 {
                src.push_str(&format!("    if {e} > H:\n      H := {e};\n    else:\n      H := G;\n"));
            }
        }
        let p = program(&src);
        prop_assert_eq!(program(&pretty_print(&p)).erase_locs(), p.erase_locs());
    }
}
