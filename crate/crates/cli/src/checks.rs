//! Oracle cross-checks on random fixtures, shared by `oracle-check` and the
//! acceptance suite.

use std::collections::HashMap;

use anyhow::Result;
use exal_core::agree::{self, PerceptionOutput};
use exal_core::explain::{self, ConflictPolicy, ExplanationSet, OnFailure, StrategyKind};
use exal_core::formula::{CnfFormula, Lit, World};
use exal_core::learn::{loss_and_grad, Example, Head, Input, LinearSoftmaxModel, MlpModel, PerceptionModel};
use exal_core::mdp::{self, MdpState, UniformPolicy};
use exal_core::oracle;
use exal_core::rng::{self, StreamRng};
use rand::seq::SliceRandom;
use rand::Rng;

/// Outcome of one family of checks.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub fixtures: usize,
    pub violations: usize,
    /// Largest observed error for the check's metric.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Random CNF over `n` variables with clauses of width 1 to 3.
pub fn random_cnf(n: usize, r: &mut StreamRng) -> CnfFormula {
    let m = r.random_range(1..=2 * n);
    let clauses = (0..m)
        .map(|_| {
            let width = r.random_range(1..=3.min(n));
            let mut vars: Vec<u32> = (1..=n as u32).collect();
            vars.shuffle(r);
            vars[..width].iter().map(|&v| Lit::new(v, r.random())).collect()
        })
        .collect();
    CnfFormula::new(n, clauses).expect("literals in range")
}

/// Random satisfiable CNF, retrying until the formula has an explanation.
pub fn random_satisfiable(n: usize, r: &mut StreamRng) -> CnfFormula {
    loop {
        let f = random_cnf(n, r);
        if f.has_model_extending(&exal_core::formula::Assignment::unassigned(n)) {
            return f;
        }
    }
}

pub fn random_output(n: usize, r: &mut StreamRng) -> PerceptionOutput {
    PerceptionOutput::bernoulli((0..n).map(|_| r.random_range(0.02..0.98)).collect()).expect("valid probabilities")
}

fn random_world(n: usize, r: &mut StreamRng) -> World {
    World((0..n).map(|_| r.random()).collect())
}

/// A few EXPLAIN draws with a random decay rate.
fn sampled(formula: &CnfFormula, r: &mut StreamRng) -> Result<ExplanationSet> {
    let draws = r.random_range(1..=40);
    let theta = r.random_range(0.0..4.0);
    Ok(explain::sample_set(
        formula,
        StrategyKind::Decay { theta },
        ConflictPolicy::default_for(draws),
        draws,
        r.random(),
        OnFailure::FailFast,
    )?)
}

/// No simplex grid point beats `KL(Q* | P)` by more than `tolerance`.
pub fn agree_optimality(fixtures: usize, seed: u64, resolution: f64, tolerance: f64) -> Result<CheckResult> {
    let mut r = rng::stream(seed, 0, 10);
    let (mut violations, mut worst) = (0, 0.0f64);
    for _ in 0..fixtures {
        let n = r.random_range(1..=10);
        let k = r.random_range(1..=4usize.min(1 << n));
        let output = random_output(n, &mut r);
        let mut set = ExplanationSet::new();
        while set.len() < k {
            set.insert(random_world(n, &mut r));
        }
        let star = agree::agree_weights(&set, &output)?;
        let kl_star = agree::kl_divergence(&star.weights, &set, &output)?;
        let grid = oracle::kl_grid_minimizer(&set, &output, resolution)?;
        let gain = kl_star - grid.kl;
        worst = worst.max(gain);
        if gain > tolerance {
            violations += 1;
        }
    }
    Ok(CheckResult {
        name: "agree_optimality",
        fixtures,
        violations,
        worst,
        tolerance,
    })
}

/// Slack for ordering comparisons between independently summed
/// probabilities.
pub const ORDER_SLACK: f64 = 1e-12;

/// Sampled bounds bracket the exact probability, and enumerated sets give
/// it exactly. Returns the sandwich check and the exactness check.
pub fn bound_sandwich(fixtures: usize, seed: u64, tolerance: f64) -> Result<(CheckResult, CheckResult)> {
    let mut r = rng::stream(seed, 0, 11);
    let (mut sandwich, mut exact_errors, mut worst_exact) = (0, 0, 0.0f64);
    let mut worst_gap = 0.0f64;
    for _ in 0..fixtures {
        let n = r.random_range(1..=12);
        let formula = random_cnf(n, &mut r);
        let negated = formula.negate();
        let output = random_output(n, &mut r);
        let exact = oracle::exact_wmc(&formula, &output)?;
        let pos = if formula.has_model_extending(&exal_core::formula::Assignment::unassigned(n)) {
            sampled(&formula, &mut r)?
        } else {
            ExplanationSet::new()
        };
        let neg = if negated.has_model_extending(&exal_core::formula::Assignment::unassigned(negated.num_vars())) {
            sampled(&negated, &mut r)?
        } else {
            ExplanationSet::new()
        };
        let b = agree::bounds(&pos, &neg, &output)?;
        let gap = (b.lower - exact).max(exact - b.upper);
        worst_gap = worst_gap.max(gap);
        if gap > ORDER_SLACK {
            sandwich += 1;
        }
        let full_pos = oracle::enumerate_explanations(&formula)?.to_set();
        let full_neg = oracle::enumerate_explanations(&negated)?.to_set();
        let full = agree::bounds(&full_pos, &full_neg, &output)?;
        let err = (full.lower - exact).abs().max((full.upper - exact).abs());
        worst_exact = worst_exact.max(err);
        if err > tolerance {
            exact_errors += 1;
        }
    }
    Ok((
        CheckResult {
            name: "bound_sandwich",
            fixtures,
            violations: sandwich,
            worst: worst_gap.max(0.0),
            tolerance: ORDER_SLACK,
        },
        CheckResult {
            name: "bound_exact_at_full_coverage",
            fixtures,
            violations: exact_errors,
            worst: worst_exact,
            tolerance,
        },
    ))
}

fn random_input(dim: usize, segments: usize, r: &mut StreamRng) -> Input {
    Input::new((0..segments).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect())
}

/// The surrogate never falls below the exact negative log-likelihood and
/// equals it when every explanation is present. Returns both checks.
pub fn surrogate_bound(fixtures: usize, seed: u64, tolerance: f64) -> Result<(CheckResult, CheckResult)> {
    let mut r = rng::stream(seed, 0, 12);
    let (mut below, mut unequal, mut worst_below, mut worst_eq) = (0, 0, 0.0f64, 0.0f64);
    for fixture in 0..fixtures {
        let n = r.random_range(1..=8);
        let dim = 4;
        let model = LinearSoftmaxModel::new(dim, Head::Bernoulli(n), rng::derive(seed, fixture as u64));
        let items = r.random_range(1..=3);
        let data: Vec<Example<CnfFormula>> = (0..items)
            .map(|_| Example {
                input: random_input(dim, 1, &mut r),
                supervision: random_satisfiable(n, &mut r),
            })
            .collect();
        let nll = oracle::exact_nll(&data, &model)?.value;
        let (mut sampled_loss, mut full_loss) = (0.0, 0.0);
        for ex in &data {
            let out = model.forward(&ex.input);
            sampled_loss += agree::surrogate_objective(&sampled(&ex.supervision, &mut r)?, &out)?;
            full_loss += agree::surrogate_objective(&oracle::enumerate_explanations(&ex.supervision)?.to_set(), &out)?;
        }
        let deficit = nll - sampled_loss;
        worst_below = worst_below.max(deficit);
        if deficit > tolerance {
            below += 1;
        }
        let err = (full_loss - nll).abs();
        worst_eq = worst_eq.max(err);
        if err > tolerance {
            unequal += 1;
        }
    }
    Ok((
        CheckResult {
            name: "surrogate_upper_bound",
            fixtures,
            violations: below,
            worst: worst_below.max(0.0),
            tolerance,
        },
        CheckResult {
            name: "surrogate_exact_at_full_coverage",
            fixtures,
            violations: unequal,
            worst: worst_eq,
            tolerance,
        },
    ))
}

fn gradient_error<M: PerceptionModel + Clone>(model: &M, input: &Input, psi: &ExplanationSet) -> Result<f64> {
    let analytic = loss_and_grad(model, input, psi)?.grad;
    let numeric = oracle::finite_diff(model, input, psi, 1e-5)?;
    Ok(oracle::relative_error(&analytic, &numeric))
}

/// Analytic against central-difference gradients for the linear and the
/// MLP reference models. Returns one result per model.
pub fn gradient_check(fixtures: usize, seed: u64, tolerance: f64) -> Result<(CheckResult, CheckResult)> {
    let mut r = rng::stream(seed, 0, 13);
    let mut out = [
        ("gradient_linear", 0usize, 0.0f64),
        ("gradient_mlp", 0usize, 0.0f64),
    ];
    for fixture in 0..fixtures {
        let n = r.random_range(1..=6);
        let dim = r.random_range(2..=5);
        let formula = random_satisfiable(n, &mut r);
        let psi = sampled(&formula, &mut r)?;
        let input = random_input(dim, 1, &mut r);
        let linear = LinearSoftmaxModel::new(dim, Head::Bernoulli(n), rng::derive(seed, 2 * fixture as u64));
        let mlp = MlpModel::new(dim, 6, Head::Bernoulli(n), rng::derive(seed, 2 * fixture as u64 + 1));
        let errors = [gradient_error(&linear, &input, &psi)?, gradient_error(&mlp, &input, &psi)?];
        for (slot, e) in out.iter_mut().zip(errors) {
            slot.2 = slot.2.max(e);
            if e > tolerance {
                slot.1 += 1;
            }
        }
    }
    let [a, b] = out.map(|(name, violations, worst)| CheckResult {
        name,
        fixtures,
        violations,
        worst,
        tolerance,
    });
    Ok((a, b))
}

/// Uniform rollouts on random small formulas: progress rises by one per
/// step and every rollout has `(n + 1)·T` steps.
pub fn progress_check(rollouts: usize, seed: u64) -> Result<CheckResult> {
    let mut r = rng::stream(seed, 0, 14);
    let mut violations = 0;
    for _ in 0..rollouts {
        let n = r.random_range(1..=4);
        let horizon = r.random_range(1..=3);
        let traj = mdp::rollout(&UniformPolicy, n, horizon, &mut r);
        let steps_ok = traj.len() == (n + 1) * horizon + 1;
        let progress_ok = traj
            .iter()
            .enumerate()
            .all(|(i, s)| mdp::progress(s, n) == i);
        let end_ok = traj.last().is_some_and(|s| s.is_terminal(horizon));
        if !(steps_ok && progress_ok && end_ok) {
            violations += 1;
        }
    }
    Ok(CheckResult {
        name: "mdp_progress",
        fixtures: rollouts,
        violations,
        worst: 0.0,
        tolerance: 0.0,
    })
}

/// Terminal frequencies of the exact flow policy against `δ(Ψ) / Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowCheck {
    pub terminals: usize,
    pub rollouts: usize,
    /// Largest `|observed - expected| / σ` over terminals with reward.
    pub max_z: f64,
    /// Visits to terminals with zero reward.
    pub zero_reward_visits: usize,
    /// Pearson statistic over terminals with reward, and its degrees of
    /// freedom.
    pub chi_square: f64,
    pub dof: usize,
    pub residual: f64,
}

impl FlowCheck {
    pub fn passed(&self, sigmas: f64) -> bool {
        self.max_z <= sigmas && self.zero_reward_visits == 0
    }

    /// Wilson-Hilferty normal approximation of the Pearson statistic.
    pub fn chi_square_z(&self) -> f64 {
        let k = self.dof.max(1) as f64;
        let v = 2.0 / (9.0 * k);
        ((self.chi_square / k).cbrt() - (1.0 - v)) / v.sqrt()
    }
}

pub fn flow_terminal_check(formula: &CnfFormula, horizon: usize, rollouts: usize, seed: u64) -> Result<FlowCheck> {
    let solved = oracle::exact_flow(formula, horizon)?;
    let policy = mdp::policy_from_flow(&solved.table);
    let n = formula.num_vars();
    let mut visits: HashMap<MdpState, usize> = HashMap::new();
    let mut r = rng::stream(seed, 0, 15);
    for _ in 0..rollouts {
        let traj = mdp::rollout(&policy, n, horizon, &mut r);
        *visits.entry(traj.last().expect("non-empty").clone()).or_insert(0) += 1;
    }
    let total_reward: f64 = solved.terminals().map(|s| mdp::reward(formula, s, horizon)).sum();
    let (mut max_z, mut zero_reward_visits, mut terminals) = (0.0f64, 0, 0);
    let (mut chi_square, mut rewarded) = (0.0, 0usize);
    for s in solved.terminals() {
        terminals += 1;
        let observed = visits.get(s).copied().unwrap_or(0) as f64;
        let p = mdp::reward(formula, s, horizon) / total_reward;
        if p == 0.0 {
            zero_reward_visits += observed as usize;
            continue;
        }
        let expected = rollouts as f64 * p;
        let sigma = (expected * (1.0 - p)).sqrt();
        max_z = max_z.max((observed - expected).abs() / sigma);
        chi_square += (observed - expected).powi(2) / expected;
        rewarded += 1;
    }
    let eval = mdp::rollouts(&policy, n, horizon, 1000, seed);
    let residual = mdp::flow_residual(&solved.table, &eval);
    Ok(FlowCheck {
        terminals,
        rollouts,
        max_z,
        zero_reward_visits,
        chi_square,
        dof: rewarded.saturating_sub(1),
        residual,
    })
}

/// The formula used for the flow check: three variables, two explanations.
pub fn flow_fixture() -> CnfFormula {
    // x1 ∧ x2 leaves x3 free.
    CnfFormula::new(3, vec![vec![Lit::pos(1)], vec![Lit::pos(2)]]).expect("valid")
}
