//! Synthetic formula families.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Uniform;

use super::TaskError;
use crate::agree::PerceptionOutput;
use crate::formula::{CnfFormula, Lit};
use crate::oracle;
use crate::rng;

/// Layered implications.
///
/// The first layer is the clause `x₁ ∨ … ∨ x_b` over fresh variables. Each
/// further layer picks one variable `p` of the previous layer and adds
/// `p ⇒ y₁ ∨ … ∨ y_b` over `b` fresh variables. The result has
/// `b·(depth + 1)` variables and `depth + 1` clauses.
pub fn gen_branch(depth: usize, branching: usize, seed: u64) -> Result<CnfFormula, TaskError> {
    if depth < 1 {
        return Err(TaskError::InvalidParameter("depth must be at least 1".into()));
    }
    if branching < 2 {
        return Err(TaskError::InvalidParameter("branching must be at least 2".into()));
    }
    let mut r = rng::seeded(seed);
    let b = branching as u32;
    let mut clauses = vec![(1..=b).map(Lit::pos).collect::<Vec<_>>()];
    for level in 1..=depth as u32 {
        let prev = (level - 1) * b + 1 + r.random_range(0..b);
        let mut clause = vec![Lit::neg(prev)];
        clause.extend((level * b + 1..=(level + 1) * b).map(Lit::pos));
        clauses.push(clause);
    }
    Ok(CnfFormula::new((depth + 1) * branching, clauses)?)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Op {
    And,
    Or,
}

/// Tseitin clauses for `a ⇔ op(children)`.
fn define(a: Lit, op: Op, children: &[Lit], out: &mut Vec<Vec<Lit>>) {
    match op {
        Op::And => {
            for &c in children {
                out.push(vec![!a, c]);
            }
            let mut back: Vec<Lit> = children.iter().map(|&c| !c).collect();
            back.push(a);
            out.push(back);
        }
        Op::Or => {
            for &c in children {
                out.push(vec![a, !c]);
            }
            let mut fwd = children.to_vec();
            fwd.push(!a);
            out.push(fwd);
        }
    }
}

/// Alternating layers of conjunctions and disjunctions.
///
/// The root is a conjunction of `conj_size` children, each child a
/// disjunction of `disj_size` children and so on for `depth` operator
/// layers. Leaves are fresh variables with random polarity. Every internal
/// node below the root gets an auxiliary variable defined by Tseitin
/// clauses, and the root contributes one unit clause per child.
pub fn gen_split(depth: usize, conj_size: usize, disj_size: usize, seed: u64) -> Result<CnfFormula, TaskError> {
    if depth < 1 || conj_size < 1 || disj_size < 1 {
        return Err(TaskError::InvalidParameter(
            "depth and layer sizes must be positive".into(),
        ));
    }
    let mut leaves = 1usize;
    for layer in 0..depth {
        leaves = leaves
            .checked_mul(if layer % 2 == 0 { conj_size } else { disj_size })
            .filter(|&l| l <= 1 << 20)
            .ok_or_else(|| TaskError::InvalidParameter("formula too large".into()))?;
    }
    let mut r = rng::seeded(seed);
    // Leaves take variables 1..=leaves; auxiliaries follow.
    let mut next_leaf = 0u32;
    let mut next_aux = leaves as u32;
    let mut defs = Vec::new();

    fn build(
        layer: usize,
        depth: usize,
        sizes: (usize, usize),
        r: &mut rng::StreamRng,
        next_leaf: &mut u32,
        next_aux: &mut u32,
        defs: &mut Vec<Vec<Lit>>,
    ) -> Lit {
        if layer == depth {
            *next_leaf += 1;
            return Lit::new(*next_leaf, r.random());
        }
        let (op, size) = if layer % 2 == 0 { (Op::And, sizes.0) } else { (Op::Or, sizes.1) };
        let children: Vec<Lit> = (0..size)
            .map(|_| build(layer + 1, depth, sizes, r, next_leaf, next_aux, defs))
            .collect();
        *next_aux += 1;
        let a = Lit::pos(*next_aux);
        define(a, op, &children, defs);
        a
    }

    let mut constraints = Vec::new();
    for _ in 0..conj_size {
        let child = build(1, depth, (conj_size, disj_size), &mut r, &mut next_leaf, &mut next_aux, &mut defs);
        constraints.push(vec![child]);
    }
    Ok(CnfFormula::with_structure(
        next_aux as usize,
        defs,
        constraints,
        leaves,
    )?)
}

/// Random binary ∧/∨ tree over `vars`, returning its root literal. Internal
/// nodes other than the root are auxiliaries defined in `defs`.
fn random_tree(
    vars: &[Lit],
    root: Option<Lit>,
    r: &mut rng::StreamRng,
    next_aux: &mut u32,
    defs: &mut Vec<Vec<Lit>>,
    constraints: &mut Vec<Vec<Lit>>,
) -> Lit {
    if vars.len() == 1 && root.is_none() {
        return vars[0];
    }
    let split = r.random_range(1..vars.len());
    let left = random_tree(&vars[..split], None, r, next_aux, defs, constraints);
    let right = random_tree(&vars[split..], None, r, next_aux, defs, constraints);
    let op = if r.random::<bool>() { Op::And } else { Op::Or };
    match root {
        Some(a) => {
            define(a, op, &[left, right], constraints);
            a
        }
        None => {
            *next_aux += 1;
            let a = Lit::pos(*next_aux);
            define(a, op, &[left, right], defs);
            a
        }
    }
}

/// Variables defined from earlier ones.
///
/// There are `⌈frac_start · inferred⌉` free starting variables. Inferred
/// variable `i` is defined as a random ∧/∨ tree over `in_degree` distinct
/// earlier variables (starting or inferred). The last inferred variable is
/// asserted, so the formula has a model whenever that tree is satisfiable.
pub fn gen_bottom_up(frac_start: f64, inferred: usize, in_degree: usize, seed: u64) -> Result<CnfFormula, TaskError> {
    if !(frac_start > 0.0 && frac_start <= 1.0) {
        return Err(TaskError::InvalidParameter("frac_start must be in (0, 1]".into()));
    }
    if inferred < 1 || in_degree < 1 {
        return Err(TaskError::InvalidParameter(
            "inferred and in_degree must be positive".into(),
        ));
    }
    let start = (frac_start * inferred as f64).ceil() as usize;
    if in_degree > start {
        return Err(TaskError::InvalidParameter(format!(
            "in_degree {in_degree} exceeds the {start} starting variables"
        )));
    }
    let mut r = rng::seeded(seed);
    let original = start + inferred;
    let mut next_aux = original as u32;
    let mut defs = Vec::new();
    let mut constraints = Vec::new();
    for i in 0..inferred {
        let v = (start + i + 1) as u32;
        let mut pool: Vec<u32> = (1..v).collect();
        pool.shuffle(&mut r);
        let inputs: Vec<Lit> = pool[..in_degree].iter().map(|&u| Lit::pos(u)).collect();
        if in_degree == 1 {
            constraints.push(vec![Lit::neg(v), inputs[0]]);
            constraints.push(vec![Lit::pos(v), !inputs[0]]);
        } else {
            random_tree(&inputs, Some(Lit::pos(v)), &mut r, &mut next_aux, &mut defs, &mut constraints);
        }
    }
    constraints.push(vec![Lit::pos(original as u32)]);
    Ok(CnfFormula::with_structure(next_aux as usize, defs, constraints, original)?)
}

/// A formula with exactly `2ⁿ⁻¹` models and probabilities giving it
/// probability `target`.
///
/// The formula is `x₁ ⇔ (l₂ ∨ … ∨ lₙ)` with random literal polarities.
/// Variables `2..n` get probabilities drawn from `U(0, 1)`, and `P(x₁)` is
/// tuned by bisection until the exact probability of the formula matches.
pub fn gen_half_models(n: usize, target_prob: f64, seed: u64) -> Result<(CnfFormula, PerceptionOutput), TaskError> {
    if n < 2 {
        return Err(TaskError::InvalidParameter("need at least 2 variables".into()));
    }
    if !(target_prob > 0.0 && target_prob < 1.0) {
        return Err(TaskError::InvalidParameter("target must be in (0, 1)".into()));
    }
    let mut r = rng::seeded(seed);
    let rest: Vec<Lit> = (2..=n as u32).map(|v| Lit::new(v, r.random())).collect();
    let mut clauses = vec![];
    let mut fwd = rest.clone();
    fwd.push(Lit::neg(1));
    clauses.push(fwd);
    for &l in &rest {
        clauses.push(vec![Lit::pos(1), !l]);
    }
    let formula = CnfFormula::new(n, clauses)?;
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let mut probs: Vec<f64> = std::iter::once(0.5).chain((1..n).map(|_| r.sample(unit))).collect();

    let wmc = |p1: f64, probs: &mut Vec<f64>| -> Result<f64, TaskError> {
        probs[0] = p1;
        let out = PerceptionOutput::bernoulli(probs.clone())?;
        Ok(oracle::exact_wmc(&formula, &out)?)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let (w_lo, w_hi) = (wmc(lo, &mut probs)?, wmc(hi, &mut probs)?);
    let increasing = w_hi >= w_lo;
    let (min, max) = if increasing { (w_lo, w_hi) } else { (w_hi, w_lo) };
    if target_prob < min - 1e-12 || target_prob > max + 1e-12 {
        return Err(TaskError::TuningFailed {
            target: target_prob,
            min,
            max,
        });
    }
    let mut p = 0.5;
    for _ in 0..100 {
        p = 0.5 * (lo + hi);
        let w = wmc(p, &mut probs)?;
        if (w - target_prob).abs() < 1e-12 {
            break;
        }
        if (w < target_prob) == increasing {
            lo = p;
        } else {
            hi = p;
        }
    }
    let w = wmc(p, &mut probs)?;
    if (w - target_prob).abs() > 1e-6 {
        return Err(TaskError::TuningFailed {
            target: target_prob,
            min,
            max,
        });
    }
    Ok((formula, PerceptionOutput::bernoulli(probs)?))
}
