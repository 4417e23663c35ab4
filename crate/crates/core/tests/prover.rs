use std::collections::BTreeMap;

use gvc_core::ast::{BinOp, RelOp};
use gvc_core::prover::*;
use proptest::prelude::*;

const BOX: i128 = 16;

/// Every point of `[0, BOX]^n`.
fn points(n: usize) -> impl Iterator<Item = Vec<i128>> {
    let total = (BOX as usize + 1).pow(n as u32);
    (0..total).map(move |mut k| {
        (0..n)
            .map(|_| {
                let v = (k % (BOX as usize + 1)) as i128;
                k /= BOX as usize + 1;
                v
            })
            .collect()
    })
}

fn holds(c: &LinearConstraint, x: &[i128]) -> bool {
    let lhs: i128 = c.coeffs.iter().map(|(v, k)| k * x[*v as usize]).sum();
    match c.rel {
        Rel::Le => lhs <= c.bound,
        Rel::Eq => lhs == c.bound,
        Rel::Ne => lhs != c.bound,
    }
}

fn rel_holds(d: &LinExpr, op: RelOp, x: &[i128]) -> bool {
    let v: i128 = d.coeffs.iter().map(|(v, k)| k * x[*v as usize]).sum::<i128>() + d.constant;
    match op {
        RelOp::Eq => v == 0,
        RelOp::Ne => v != 0,
        RelOp::Le => v <= 0,
        RelOp::Lt => v < 0,
        RelOp::Ge => v >= 0,
        RelOp::Gt => v > 0,
    }
}

/// The system plus `v <= BOX` for every variable, so the box is the whole domain.
fn boxed(n: usize, cs: Vec<LinearConstraint>) -> ConstraintSystem {
    let mut sys = ConstraintSystem::new();
    sys.extend(cs);
    for v in 0..n as u32 {
        sys.push(LinearConstraint { coeffs: BTreeMap::from([(v, 1)]), rel: Rel::Le, bound: BOX });
    }
    sys
}

fn constraint(n: u32) -> impl Strategy<Value = LinearConstraint> {
    (
        prop::collection::vec((0..n, -4i128..=4), 1..=n as usize),
        prop::sample::select(vec![Rel::Le, Rel::Le, Rel::Le, Rel::Eq, Rel::Ne]),
        -20i128..=40,
    )
        .prop_map(|(terms, rel, bound)| {
            let mut coeffs = BTreeMap::new();
            for (v, k) in terms {
                *coeffs.entry(v).or_insert(0) += k;
            }
            coeffs.retain(|_, k| *k != 0);
            LinearConstraint { coeffs, rel, bound }
        })
}

fn system() -> impl Strategy<Value = (usize, Vec<LinearConstraint>)> {
    (1u32..=4).prop_flat_map(|n| (Just(n as usize), prop::collection::vec(constraint(n), 1..=5)))
}

fn goal(n: u32) -> impl Strategy<Value = LinAtom> {
    (
        prop::collection::vec(-4i128..=4, n as usize),
        -20i128..=40,
        prop::sample::select(vec![RelOp::Eq, RelOp::Ne, RelOp::Le, RelOp::Lt, RelOp::Ge, RelOp::Gt]),
    )
        .prop_map(|(ks, c, op)| LinAtom {
            diff: LinExpr {
                coeffs: ks.into_iter().enumerate().filter(|(_, k)| *k != 0).map(|(v, k)| (v as u32, k)).collect(),
                constant: c,
            },
            op,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn check_sat_agrees_with_brute_force((n, cs) in system()) {
        let sys = boxed(n, cs);
        let witness = points(n).find(|x| sys.constraints.iter().all(|c| holds(c, x)));
        match check_sat(&sys) {
            SatResult::Unsat => prop_assert!(witness.is_none(), "unsat but {:?} satisfies", witness),
            SatResult::Sat(m) => {
                prop_assert!(sys.constraints.iter().all(|c| c.holds(&m)));
                prop_assert!(witness.is_some());
            }
            SatResult::Unknown => {}
        }
    }

    #[test]
    fn entails_agrees_with_brute_force(
        ((n, cs), g) in system().prop_flat_map(|(n, cs)| (Just((n, cs)), goal(n as u32)))
    ) {
        let sys = boxed(n, cs);
        let models: Vec<Vec<i128>> = points(n).filter(|x| sys.constraints.iter().all(|c| holds(c, x))).collect();
        match entails(&sys, &g) {
            ProofResult::Proved => prop_assert!(models.iter().all(|x| rel_holds(&g.diff, g.op, x))),
            ProofResult::Disproved => {
                prop_assert!(!models.is_empty());
                prop_assert!(models.iter().all(|x| !rel_holds(&g.diff, g.op, x)));
            }
            ProofResult::Unknown => {}
        }
    }
}

#[test]
fn decides_most_small_boxed_systems() {
    // deterministic sample: every 2-variable system of one `Le` row and one
    // `Ne` or `Eq` row with coefficients in [-2, 2]
    let mut decided = 0;
    let mut total = 0;
    for a in -2i128..=2 {
        for b in -2i128..=2 {
            for rel in [Rel::Eq, Rel::Ne] {
                for bound in [-3i128, 0, 5, 17] {
                    let cs = vec![
                        LinearConstraint { coeffs: BTreeMap::from([(0, a), (1, b)]), rel: Rel::Le, bound },
                        LinearConstraint { coeffs: BTreeMap::from([(0, 1), (1, -1)]), rel, bound: 3 },
                    ];
                    let sys = boxed(2, cs);
                    total += 1;
                    let truth = points(2).any(|x| sys.constraints.iter().all(|c| holds(c, &x)));
                    match check_sat(&sys) {
                        SatResult::Sat(_) => {
                            assert!(truth);
                            decided += 1;
                        }
                        SatResult::Unsat => {
                            assert!(!truth);
                            decided += 1;
                        }
                        SatResult::Unknown => {}
                    }
                }
            }
        }
    }
    assert!(decided * 10 >= total * 9, "decided {decided} of {total}");
}

#[test]
fn nonlinear_terms_are_refused() {
    let t = Term::bin(BinOp::Mul, Term::Var(0), Term::Var(1));
    assert!(LinExpr::from_term(&t).is_err());
    let scaled = Term::bin(BinOp::Mul, Term::Const(3), Term::Var(1));
    assert_eq!(LinExpr::from_term(&scaled).unwrap().coeffs, BTreeMap::from([(1, 3)]));
}

#[test]
fn implicit_range_of_variables() {
    // x + 1 <= 0 has no uint64 solution
    let mut sys = ConstraintSystem::new();
    sys.push(LinearConstraint { coeffs: BTreeMap::from([(0, 1)]), rel: Rel::Le, bound: -1 });
    assert!(check_sat(&sys).is_unsat());
    // x >= 2^64 neither
    let mut sys = ConstraintSystem::new();
    sys.push(LinearConstraint { coeffs: BTreeMap::from([(0, -1)]), rel: Rel::Le, bound: -(U64_MAX + 1) });
    assert!(check_sat(&sys).is_unsat());
}
