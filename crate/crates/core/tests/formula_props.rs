mod common;

use common::{all_worlds, cnf, example_formula};
use exal_core::formula::{parse_dimacs, write_dimacs, Assignment, ClauseStatus, Value, World};
use exal_core::oracle::enumerate_explanations;
use proptest::prelude::*;

/// Every partial assignment over `n ≤ 4` variables.
fn partials(n: usize) -> Vec<Assignment> {
    (0..3usize.pow(n as u32))
        .map(|mut code| {
            let values = (0..n)
                .map(|_| {
                    let v = [Value::Unassigned, Value::False, Value::True][code % 3];
                    code /= 3;
                    v
                })
                .collect();
            Assignment::from_values(values)
        })
        .collect()
}

fn completions(mu: &Assignment) -> Vec<Vec<bool>> {
    all_worlds(mu.len())
        .filter(|bits| Assignment::from_bools(bits).extends(mu))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn negation_complements_models(f in cnf(8)) {
        let neg = f.negate();
        for bits in all_worlds(f.num_vars()) {
            let w = World(bits.clone());
            prop_assert_ne!(f.evaluate_bits(&bits), neg.satisfied_by_world(&w));
        }
    }

    #[test]
    fn double_negation_keeps_models(f in cnf(6)) {
        let a = enumerate_explanations(&f).unwrap();
        let b = enumerate_explanations(&f.negate().negate()).unwrap();
        let mut x = a.explanations.clone();
        let mut y = b.explanations.clone();
        x.sort();
        y.sort();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn propagation_keeps_completions(f in cnf(4)) {
        for mu in partials(f.num_vars()) {
            if f.status(&mu) == ClauseStatus::Conflicting {
                continue;
            }
            let p = f.propagate(&mu);
            prop_assert!(p.assignment.extends(&mu));
            let before: Vec<_> = completions(&mu).into_iter().filter(|b| f.evaluate_bits(b)).collect();
            if p.conflict {
                prop_assert!(before.is_empty());
                continue;
            }
            let after: Vec<_> = completions(&p.assignment).into_iter().filter(|b| f.evaluate_bits(b)).collect();
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn status_is_sound(f in cnf(4)) {
        for mu in partials(f.num_vars()) {
            let done = completions(&mu);
            match f.status(&mu) {
                ClauseStatus::Satisfied => prop_assert!(done.iter().all(|b| f.evaluate_bits(b))),
                ClauseStatus::Conflicting => prop_assert!(done.iter().all(|b| !f.evaluate_bits(b))),
                ClauseStatus::Undetermined => {}
            }
        }
    }

    #[test]
    fn dimacs_round_trip(f in cnf(12)) {
        let text = write_dimacs(&f);
        let g = parse_dimacs(&text).unwrap();
        prop_assert_eq!(write_dimacs(&g), text);
        prop_assert_eq!(g.num_vars(), f.num_vars());
    }
}

#[test]
fn example_formula_counts() {
    let f = example_formula();
    assert!(f.evaluate_bits(&[false, true, true, false]));
    assert!(!f.evaluate_bits(&[false, false, true, true]));
    assert_eq!(enumerate_explanations(&f).unwrap().count, 13);
    assert_eq!(enumerate_explanations(&f.negate()).unwrap().count, 3);
}
