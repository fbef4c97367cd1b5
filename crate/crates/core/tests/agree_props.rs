mod common;

use common::{cnf_with_output, example_formula};
use exal_core::agree::{self, PerceptionOutput};
use exal_core::explain::{self, ConflictPolicy, ExplanationSet, OnFailure, StrategyKind};
use exal_core::formula::{Assignment, CnfFormula};
use exal_core::oracle::{self, enumerate_explanations, exact_wmc};
use proptest::prelude::*;

fn sampled(f: &CnfFormula, draws: usize, seed: u64) -> ExplanationSet {
    if !f.has_model_extending(&Assignment::unassigned(f.num_vars())) {
        return ExplanationSet::new();
    }
    explain::sample_set(f, StrategyKind::Decay { theta: 1.0 }, ConflictPolicy::default_for(draws), draws, seed, OnFailure::FailFast)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn sampled_bounds_bracket_exact((f, out) in cnf_with_output(12), draws in 0usize..30, seed in any::<u64>()) {
        let exact = exact_wmc(&f, &out).unwrap();
        let b = agree::bounds(&sampled(&f, draws, seed), &sampled(&f.negate(), draws, seed ^ 1), &out).unwrap();
        prop_assert!(0.0 <= b.lower && b.lower <= b.upper && b.upper <= 1.0);
        prop_assert!(b.lower <= exact + 1e-12 && exact <= b.upper + 1e-12);
    }

    #[test]
    fn full_coverage_is_exact((f, out) in cnf_with_output(12)) {
        let exact = exact_wmc(&f, &out).unwrap();
        let pos = enumerate_explanations(&f).unwrap().to_set();
        let neg = enumerate_explanations(&f.negate()).unwrap().to_set();
        let b = agree::bounds(&pos, &neg, &out).unwrap();
        prop_assert!((b.lower - exact).abs() <= 1e-10);
        prop_assert!((b.upper - exact).abs() <= 1e-10);
        prop_assert!((exact + exact_wmc(&f.negate(), &out).unwrap() - 1.0).abs() <= 1e-10);
        prop_assert_eq!(pos.len() + neg.len(), 1 << f.num_vars());
        if !pos.is_empty() {
            let l = agree::surrogate_objective(&pos, &out).unwrap();
            prop_assert!(((-l).exp() - exact).abs() <= 1e-10);
        }
    }

    #[test]
    fn lower_bound_never_drops((f, out) in cnf_with_output(10), seed in any::<u64>()) {
        let set = sampled(&f, 30, seed);
        let mut last = 0.0;
        for k in 0..=set.len() {
            let b = agree::bounds(&set.prefix(k), &ExplanationSet::new(), &out).unwrap();
            prop_assert!(b.lower + 1e-15 >= last);
            last = b.lower;
        }
    }

    #[test]
    fn weights_normalize_and_match_objective((f, out) in cnf_with_output(10), seed in any::<u64>()) {
        let set = sampled(&f, 20, seed);
        prop_assume!(!set.is_empty());
        let w = agree::agree_weights(&set, &out).unwrap();
        prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let kl = agree::kl_divergence(&w.weights, &set, &out).unwrap();
        let l = agree::surrogate_objective(&set, &out).unwrap();
        prop_assert!((kl - l).abs() <= 1e-10);
        prop_assert!(agree::uniform_objective(&set, &out).unwrap() >= l - 1e-12);
    }

    #[test]
    fn random_search_never_beats_closed_form((f, out) in cnf_with_output(8), seed in any::<u64>()) {
        let set = sampled(&f, 12, seed);
        prop_assume!(set.len() > 4);
        let star = agree::surrogate_objective(&set, &out).unwrap();
        let found = oracle::kl_grid_minimizer(&set, &out, 1e-3).unwrap();
        prop_assert!(found.kl >= star - 1e-9);
    }
}

#[test]
fn example_lower_bound_at_uniform_outputs() {
    let f = example_formula();
    let out = PerceptionOutput::uniform(4);
    let four = ExplanationSet::from_worlds(enumerate_explanations(&f).unwrap().explanations.into_iter().take(4));
    let b = agree::bounds(&four, &ExplanationSet::new(), &out).unwrap();
    assert!((b.lower - 0.25).abs() < 1e-15);
    assert_eq!(b.upper, 1.0);
    assert!((exact_wmc(&f, &out).unwrap() - 13.0 / 16.0).abs() < 1e-15);
}
