use exal_core::agree::PerceptionOutput;
use exal_core::explain::{self, ConflictPolicy, ExplanationSet, OnFailure, StrategyKind};
use exal_core::formula::{Assignment, CnfFormula, Lit};
use exal_core::learn::{
    fit, loss_and_grad, Example, FixedExplanations, Head, Input, LinearSoftmaxModel, MlpModel, OptimizerKind,
    PerceptionModel, TrainConfig,
};
use exal_core::rng::{self, StreamRng};
use rand::Rng;

fn random_formula(n: usize, r: &mut StreamRng) -> CnfFormula {
    loop {
        let clauses = (0..r.random_range(1..=n))
            .map(|_| (0..r.random_range(1..=2)).map(|_| Lit::new(r.random_range(1..=n as u32), r.random())).collect())
            .collect();
        let f = CnfFormula::new(n, clauses).unwrap();
        if f.has_model_extending(&Assignment::unassigned(n)) {
            return f;
        }
    }
}

fn fixture(seed: u64) -> (Vec<Example<FixedExplanations>>, usize) {
    let mut r = rng::seeded(seed);
    let (n, dim) = (r.random_range(2..=6), 4);
    let data = (0..3)
        .map(|i| {
            let f = random_formula(n, &mut r);
            let psi = explain::sample_set(&f, StrategyKind::Uniform, ConflictPolicy::default_for(8), 8, rng::derive(seed, i), OnFailure::FailFast)
                .unwrap();
            Example {
                input: Input::single((0..dim).map(|_| r.random_range(-1.0..1.0)).collect()),
                supervision: FixedExplanations(psi),
            }
        })
        .collect();
    (data, n)
}

fn total_loss<M: PerceptionModel>(model: &M, data: &[Example<FixedExplanations>]) -> f64 {
    data.iter().map(|ex| loss_and_grad(model, &ex.input, &ex.supervision.0).unwrap().loss).sum()
}

fn full_batch(len: usize, lr: f64, epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        epochs,
        batch_size: len,
        optimizer: OptimizerKind::Sgd,
        ..TrainConfig::default()
    }
}

#[test]
fn gradient_descent_lowers_the_loss() {
    for seed in 0..20 {
        let (data, n) = fixture(seed);
        let mut model = LinearSoftmaxModel::new(4, Head::Bernoulli(n), seed);
        let before = total_loss(&model, &data);
        fit(&mut model, &data, &full_batch(data.len(), 1e-3, 200), |_, _| vec![]).unwrap();
        let after = total_loss(&model, &data);
        assert!(after < before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn zero_rate_leaves_parameters() {
    let (data, n) = fixture(3);
    let mut model = MlpModel::new(4, 5, Head::Bernoulli(n), 1);
    let start = model.params().to_vec();
    fit(&mut model, &data, &full_batch(data.len(), 0.0, 3), |_, _| vec![]).unwrap();
    assert_eq!(model.params(), &start[..]);
}

#[test]
fn outputs_stay_valid_after_large_steps() {
    let (data, n) = fixture(9);
    let mut model = LinearSoftmaxModel::new(4, Head::Bernoulli(n), 2);
    fit(&mut model, &data, &full_batch(data.len(), 5.0, 50), |_, _| vec![]).unwrap();
    for ex in &data {
        let out = model.forward(&ex.input);
        assert!(out.probs().iter().all(|p| (0.0..=1.0).contains(p)));
    }
    let mut cat = LinearSoftmaxModel::new(3, Head::Categorical(10), 4);
    cat.params_mut().iter_mut().for_each(|p| *p *= 50.0);
    let out = cat.forward(&Input::new(vec![vec![1.0, -2.0, 0.5], vec![3.0, 0.0, -1.0]]));
    for g in out.groups() {
        assert!((out.probs()[g.clone()].iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn single_explanation_gradient_is_cross_entropy() {
    let mut model = LinearSoftmaxModel::new(2, Head::Bernoulli(2), 7);
    model.params_mut().copy_from_slice(&[0.3, -0.2, 0.1, 0.5, 0.0, -0.4]);
    let x = Input::single(vec![1.0, 2.0]);
    let label = exal_core::formula::World(vec![true, false]);
    let g = loss_and_grad(&model, &x, &ExplanationSet::from_worlds([label])).unwrap();
    let out: PerceptionOutput = model.forward(&x);
    let p = out.probs();
    let expected = -(p[0].ln() + (1.0 - p[1]).ln());
    assert!((g.loss - expected).abs() < 1e-12);
    let psi = ExplanationSet::from_worlds([exal_core::formula::World(vec![true, false])]);
    let numeric = exal_core::oracle::finite_diff(&model, &x, &psi, 1e-5).unwrap();
    assert!(exal_core::oracle::relative_error(&g.grad, &numeric) < 1e-7);
}

#[test]
fn seeded_training_is_reproducible() {
    let (data, n) = fixture(11);
    let run = || {
        let mut model = MlpModel::new(4, 6, Head::Bernoulli(n), 5);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            seed: 99,
            optimizer: OptimizerKind::Adam,
            ..TrainConfig::default()
        };
        let h = fit(&mut model, &data, &cfg, |_, _| vec![]).unwrap();
        (model.params().to_vec(), h)
    };
    assert_eq!(run(), run());
}
