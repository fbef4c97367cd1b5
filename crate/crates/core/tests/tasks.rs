use std::collections::HashSet;

use exal_core::agree::PerceptionOutput;
use exal_core::formula::Assignment;
use exal_core::oracle::{enumerate_explanations, exact_wmc};
use exal_core::rng;
use exal_core::tasks::{
    addition_instance_count, build_addition_dataset, digits_to_world, dijkstra, gen_bottom_up, gen_branch,
    gen_half_models, gen_split, generate_grid, gibbs_explanations, is_shortest, levels_to_costs, mnist_sum_formula,
    path_cost, DigitSampler, GridConfig, Images, MnistSplit,
};
use proptest::prelude::*;
use rand::Rng;

fn satisfiable(f: &exal_core::formula::CnfFormula) -> bool {
    f.has_model_extending(&Assignment::unassigned(f.num_vars()))
}

/// Pairs of `n`-digit numbers summing to `s`.
fn pair_count(n: usize, s: u64) -> u128 {
    let top = 10u128.pow(n as u32) - 1;
    let s = s as u128;
    if s > 2 * top {
        return 0;
    }
    s.min(top) - s.saturating_sub(top) + 1
}

fn digits(x: u64, n: usize) -> Vec<u8> {
    (0..n).rev().map(|i| (x / 10u64.pow(i as u32) % 10) as u8).collect()
}

#[test]
fn branch_generator() {
    let f = gen_branch(3, 3, 0).unwrap();
    assert!(enumerate_explanations(&f).unwrap().count > 0);
    let small = gen_branch(1, 2, 0).unwrap();
    assert_eq!((small.num_vars(), small.num_clauses()), (4, 2));
    // (x1 ∨ x2) ∧ (¬p ∨ x3 ∨ x4) with p ∈ {x1, x2}: two of the three
    // models of the first clause set p and admit 3 completions, one admits 4.
    let count = (0u32..16)
        .filter(|m| small.evaluate_bits(&(0..4).map(|i| m >> i & 1 == 1).collect::<Vec<_>>()))
        .count();
    assert_eq!(enumerate_explanations(&small).unwrap().count, count);
    assert_eq!(count, 10);
    assert!(gen_branch(2, 1, 0).is_err());
}

#[test]
fn bottom_up_generator() {
    for seed in 0..5 {
        let f = gen_bottom_up(0.5, 20, 3, seed).unwrap();
        assert!(satisfiable(&f));
    }
    let minimal = gen_bottom_up(1.0, 1, 1, 0).unwrap();
    assert!(enumerate_explanations(&minimal).unwrap().count > 0);
    assert!(gen_bottom_up(0.1, 2, 5, 0).is_err());
}

#[test]
fn split_generator() {
    for disj in 2..=4 {
        for seed in 0..3 {
            assert!(satisfiable(&gen_split(4, 3, disj, seed).unwrap()), "disj {disj} seed {seed}");
        }
    }
    let one = gen_split(1, 3, 2, 0).unwrap();
    assert_eq!(one.num_vars(), 3);
    assert_eq!(enumerate_explanations(&one).unwrap().count, 1);
}

#[test]
fn half_model_targets() {
    for (target, seed) in [(0.5, 0), (0.3, 1), (0.8, 2)] {
        let (f, out) = gen_half_models(12, target, seed).unwrap();
        assert_eq!(enumerate_explanations(&f).unwrap().count, 1 << 11);
        assert!((exact_wmc(&f, &out).unwrap() - target).abs() < 1e-6);
    }
    let (f, _) = gen_half_models(12, 0.5, 3).unwrap();
    assert!((exact_wmc(&f, &PerceptionOutput::uniform(12)).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn digit_counts_match_closed_form() {
    for n in 1..=3 {
        for s in 0..=2 * (10u64.pow(n as u32) - 1) {
            assert_eq!(DigitSampler::new(n, s).unwrap().count(), pair_count(n, s), "n={n} s={s}");
        }
    }
    let mut r = rng::seeded(0);
    for _ in 0..200 {
        let s = r.random_range(0..=2 * (10u64.pow(15) - 1));
        assert_eq!(DigitSampler::new(15, s).unwrap().count(), pair_count(15, s));
    }
    assert!(DigitSampler::new(1, 19).is_err());
}

#[test]
fn sum_formula_models_are_the_digit_pairs() {
    for s in 0..=18 {
        let f = mnist_sum_formula(1, s).unwrap();
        assert_eq!(enumerate_explanations(&f).unwrap().count as u128, pair_count(1, s));
    }
    for s in [0, 9, 10, 99, 100, 157, 198] {
        let f = mnist_sum_formula(2, s).unwrap();
        let mut r = rng::seeded(s);
        for _ in 0..300 {
            let (a, b) = (r.random_range(0..100u64), r.random_range(0..100u64));
            let w = digits_to_world(&digits(a, 2), &digits(b, 2));
            assert_eq!(f.satisfied_by_world(&w), a + b == s, "{a} + {b} vs {s}");
        }
        let (a, b) = DigitSampler::new(2, s).unwrap().draw(&mut r);
        assert!(f.satisfied_by_world(&digits_to_world(&a, &b)));
    }
}

#[test]
fn uniform_digit_draws() {
    let sampler = DigitSampler::new(1, 3).unwrap();
    let mut r = rng::seeded(1);
    let mut counts = [0usize; 4];
    let draws = 8000;
    for _ in 0..draws {
        let (a, _) = sampler.draw(&mut r);
        counts[a[0] as usize] += 1;
    }
    let (p, sd) = (0.25 * draws as f64, (draws as f64 * 0.25 * 0.75).sqrt());
    for c in counts {
        assert!((c as f64 - p).abs() <= 3.0 * sd, "{counts:?}");
    }
}

#[test]
fn addition_datasets_use_each_image_once() {
    assert_eq!(addition_instance_count(60_000, 2), 15_000);
    assert_eq!(addition_instance_count(60_000, 15), 2_000);
    let labels: Vec<u8> = (0..103).map(|i| (i * 7 % 10) as u8).collect();
    let split = MnistSplit {
        images: Images {
            count: labels.len(),
            rows: 1,
            cols: 1,
            pixels: vec![0; labels.len()],
        },
        labels: labels.clone(),
    };
    let data = build_addition_dataset(&split, 2, 5).unwrap();
    assert_eq!(data.len(), addition_instance_count(103, 2));
    let mut seen = HashSet::new();
    for inst in &data {
        for &i in &inst.image_indices {
            assert!(seen.insert(i));
        }
        let num = |d: &[u8]| d.iter().fold(0u64, |acc, &x| 10 * acc + x as u64);
        let picked: Vec<u8> = inst.image_indices.iter().map(|&i| labels[i]).collect();
        assert_eq!(picked, inst.digits);
        assert_eq!(num(&inst.digits[..2]) + num(&inst.digits[2..]), inst.sum);
    }
}

fn neighbours(rows: usize, cols: usize, v: usize) -> Vec<usize> {
    let (r, c) = ((v / cols) as isize, (v % cols) as isize);
    let mut out = vec![];
    for dr in -1..=1 {
        for dc in -1..=1 {
            let (nr, nc) = (r + dr, c + dc);
            if (dr, dc) != (0, 0) && (0..rows as isize).contains(&nr) && (0..cols as isize).contains(&nc) {
                out.push(nr as usize * cols + nc as usize);
            }
        }
    }
    out
}

/// Cheapest corner-to-corner simple path by exhaustive search with cost pruning.
fn brute_force(rows: usize, cols: usize, costs: &[f64]) -> f64 {
    fn go(v: usize, cost: f64, seen: &mut Vec<bool>, best: &mut f64, rows: usize, cols: usize, costs: &[f64]) {
        if cost >= *best {
            return;
        }
        if v == rows * cols - 1 {
            *best = cost;
            return;
        }
        for u in neighbours(rows, cols, v) {
            if !seen[u] {
                seen[u] = true;
                go(u, cost + costs[u], seen, best, rows, cols, costs);
                seen[u] = false;
            }
        }
    }
    let mut seen = vec![false; rows * cols];
    seen[0] = true;
    let mut best = f64::INFINITY;
    go(0, costs[0], &mut seen, &mut best, rows, cols, costs);
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn dijkstra_matches_exhaustive_search(levels in prop::collection::vec(0usize..3, 25)) {
        let costs = levels_to_costs(&levels, &[1.0, 4.0, 9.0]);
        let (path, cost) = dijkstra(5, 5, &costs);
        prop_assert_eq!(path[0], 0);
        prop_assert_eq!(*path.last().unwrap(), 24);
        for w in path.windows(2) {
            prop_assert!(neighbours(5, 5, w[0]).contains(&w[1]));
        }
        prop_assert!((path_cost(&path, &costs) - cost).abs() < 1e-9);
        prop_assert!((cost - brute_force(5, 5, &costs)).abs() < 1e-9);
    }

    #[test]
    fn generated_grids_label_a_shortest_path(seed in any::<u64>()) {
        let g = generate_grid(&GridConfig::default(), seed).unwrap();
        prop_assert!(is_shortest(g.rows, g.cols, &g.true_path, &g.costs()));
        prop_assert_eq!(g.true_path[0], 0);
        prop_assert_eq!(*g.true_path.last().unwrap(), g.rows * g.cols - 1);
    }
}

#[test]
fn uniform_grid_goes_diagonal() {
    let (path, cost) = dijkstra(4, 4, &[2.0; 16]);
    assert_eq!(path, vec![0, 5, 10, 15]);
    assert_eq!(cost, 8.0);
    let (row, _) = dijkstra(1, 5, &[1.0; 5]);
    assert_eq!(row, vec![0, 1, 2, 3, 4]);
}

#[test]
fn gibbs_chain_reaches_every_valid_grid() {
    let level_costs = [1.0, 9.0];
    let path = vec![0, 4, 8];
    let valid: HashSet<Vec<usize>> = (0u32..1 << 9)
        .map(|m| (0..9).map(|i| (m >> i & 1) as usize).collect::<Vec<_>>())
        .filter(|levels| is_shortest(3, 3, &path, &levels_to_costs(levels, &level_costs)))
        .collect();
    let visited: HashSet<Vec<usize>> = gibbs_explanations(3, 3, &level_costs, &path, 0, 100_000, 7).into_iter().collect();
    assert!(visited.is_subset(&valid));
    assert_eq!(visited.len(), valid.len());
}
