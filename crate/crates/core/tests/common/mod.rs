#![allow(dead_code)]

use exal_core::agree::PerceptionOutput;
use exal_core::formula::{CnfFormula, Lit};
use proptest::prelude::*;

/// Random CNF over `1..=max_vars` variables with up to `2n` clauses of
/// width 1 to 3.
pub fn cnf(max_vars: usize) -> impl Strategy<Value = CnfFormula> {
    (1..=max_vars).prop_flat_map(|n| {
        let clause = prop::collection::vec((1..=n as u32, any::<bool>()), 1..=3.min(n));
        prop::collection::vec(clause, 0..=2 * n).prop_map(move |clauses| {
            let clauses = clauses
                .into_iter()
                .map(|c| c.into_iter().map(|(v, s)| Lit::new(v, s)).collect())
                .collect();
            CnfFormula::new(n, clauses).expect("literals in range")
        })
    })
}

/// A formula together with Bernoulli probabilities for its variables.
pub fn cnf_with_output(max_vars: usize) -> impl Strategy<Value = (CnfFormula, PerceptionOutput)> {
    cnf(max_vars).prop_flat_map(|f| {
        let n = f.num_vars();
        prop::collection::vec(0.01f64..0.99, n)
            .prop_map(move |p| (f.clone(), PerceptionOutput::bernoulli(p).expect("valid probabilities")))
    })
}

/// f₁ ∨ f₂ ∨ (¬f₃ ∧ f₄) in CNF.
pub fn example_formula() -> CnfFormula {
    CnfFormula::new(
        4,
        vec![
            vec![Lit::pos(1), Lit::pos(2), Lit::neg(3)],
            vec![Lit::pos(1), Lit::pos(2), Lit::pos(4)],
        ],
    )
    .unwrap()
}

/// Every complete assignment over `n` variables.
pub fn all_worlds(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u32..1 << n).map(move |m| (0..n).map(|i| m >> i & 1 == 1).collect())
}
