//! Stochastic DPLL sampling of explanations.
//!
//! [`sample_explanation`] propagates unit clauses, then repeatedly draws a
//! one-variable extension from a [`SamplingStrategy`] until the assignment is
//! complete. Conflicts are handled by a [`ConflictPolicy`]: either restart
//! from the empty assignment, or backtrack to the most recent draw and try a
//! different extension there. A node is abandoned once both values of one of
//! its variables have failed, which keeps the search complete.

mod strategy;

use std::collections::HashSet;

use rand::Rng;
use thiserror::Error;

use crate::formula::{Assignment, CnfFormula, World};
use crate::rng;

pub use strategy::{
    candidates, distribution, AssignmentKey, Decay, Extension, FirstUnassigned, SamplingStrategy,
    StrategyKind, Uniform, MAX_THETA,
};
pub(crate) use strategy::normalize_log_weights;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExplainError {
    #[error("restart budget of {max_restarts} exhausted")]
    BudgetExceeded { max_restarts: usize },
    #[error("search space exhausted: formula is unsatisfiable")]
    Unsatisfiable,
    #[error("invalid conflict policy: {0}")]
    InvalidPolicy(&'static str),
}

/// What to do when a drawn extension falsifies a clause.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConflictPolicy {
    /// Start over from the empty assignment.
    Restart { max_restarts: usize },
    /// Undo the latest draw and try another extension. `depth_limit` bounds
    /// the number of backtracking steps per attempt before a restart.
    Backtrack {
        depth_limit: Option<usize>,
        max_restarts: usize,
    },
}

impl ConflictPolicy {
    /// Unlimited backtracking with a restart budget of `10·draws`.
    pub fn default_for(draws: usize) -> Self {
        ConflictPolicy::Backtrack {
            depth_limit: None,
            max_restarts: 10 * draws.max(1),
        }
    }

    pub fn max_restarts(&self) -> usize {
        match *self {
            ConflictPolicy::Restart { max_restarts } => max_restarts,
            ConflictPolicy::Backtrack { max_restarts, .. } => max_restarts,
        }
    }

    fn validate(&self) -> Result<(), ExplainError> {
        if self.max_restarts() == 0 {
            return Err(ExplainError::InvalidPolicy("max_restarts must be at least 1"));
        }
        if let ConflictPolicy::Backtrack {
            depth_limit: Some(0),
            ..
        } = self
        {
            return Err(ExplainError::InvalidPolicy("depth_limit must be positive"));
        }
        Ok(())
    }
}

impl Default for ConflictPolicy {
    fn default() -> Self {
        ConflictPolicy::default_for(1)
    }
}

struct Frame {
    mu: Assignment,
    cands: Vec<Extension>,
    tried: Vec<bool>,
    dead: bool,
    /// Candidate index in the parent frame that produced this one.
    from: Option<usize>,
}

impl Frame {
    fn new(mu: Assignment, from: Option<usize>) -> Self {
        let cands = candidates(&mu);
        let tried = vec![false; cands.len()];
        Frame {
            mu,
            cands,
            tried,
            dead: false,
            from,
        }
    }

    /// Marks candidate `i` failed; the frame dies when both values of its
    /// variable have failed.
    fn fail(&mut self, i: usize) {
        self.tried[i] = true;
        if self.tried[i ^ 1] {
            self.dead = true;
        }
    }
}

fn draw_index<R: Rng + ?Sized>(lw: &[f64], tried: &[bool], rng: &mut R) -> usize {
    let max = lw
        .iter()
        .zip(tried)
        .filter(|(_, &t)| !t)
        .map(|(&w, _)| w)
        .fold(f64::NEG_INFINITY, f64::max);
    let weight = |i: usize| -> f64 {
        if tried[i] {
            0.0
        } else if max == f64::NEG_INFINITY {
            1.0
        } else {
            (lw[i] - max).exp()
        }
    };
    let total: f64 = (0..lw.len()).map(weight).sum();
    let mut r = rng.random::<f64>() * total;
    let mut last = None;
    for i in 0..lw.len() {
        let w = weight(i);
        if w > 0.0 {
            last = Some(i);
            if r < w {
                return i;
            }
            r -= w;
        }
    }
    last.expect("at least one untried candidate")
}

/// Draws one explanation of `formula`. The returned assignment is complete
/// over all variables, auxiliary ones included, and satisfies the formula.
pub fn sample_explanation<R: Rng + ?Sized>(
    formula: &CnfFormula,
    strategy: &mut dyn SamplingStrategy,
    policy: ConflictPolicy,
    rng: &mut R,
) -> Result<Assignment, ExplainError> {
    policy.validate()?;
    let n = formula.num_vars();
    let max_restarts = policy.max_restarts();
    let mut restarts = 0usize;
    let mut weights = Vec::new();

    'attempt: loop {
        let restart = |restarts: &mut usize| -> Result<(), ExplainError> {
            *restarts += 1;
            if *restarts > max_restarts {
                Err(ExplainError::BudgetExceeded { max_restarts })
            } else {
                Ok(())
            }
        };

        let root = formula.propagate(&Assignment::unassigned(n));
        if root.conflict {
            match policy {
                ConflictPolicy::Restart { .. } => {
                    restart(&mut restarts)?;
                    continue 'attempt;
                }
                ConflictPolicy::Backtrack { .. } => return Err(ExplainError::Unsatisfiable),
            }
        }
        if root.assignment.is_complete() {
            return Ok(root.assignment);
        }
        let mut stack = vec![Frame::new(root.assignment, None)];
        let mut backtracks = 0usize;

        while let Some(frame) = stack.last_mut() {
            strategy.log_weights(&frame.mu, &frame.cands, &mut weights);
            let i = draw_index(&weights, &frame.tried, rng);
            let ext = frame.cands[i];
            let child = ext.apply(&frame.mu);
            strategy.observe(&child);
            let p = formula.propagate(&child);
            if !p.conflict {
                if p.assignment.is_complete() {
                    return Ok(p.assignment);
                }
                frame.tried[i] = true;
                stack.push(Frame::new(p.assignment, Some(i)));
                continue;
            }
            match policy {
                ConflictPolicy::Restart { .. } => {
                    restart(&mut restarts)?;
                    continue 'attempt;
                }
                ConflictPolicy::Backtrack { depth_limit, .. } => {
                    backtracks += 1;
                    if depth_limit.is_some_and(|limit| backtracks > limit) {
                        restart(&mut restarts)?;
                        continue 'attempt;
                    }
                    frame.fail(i);
                    // Unwind frames whose subtrees are exhausted.
                    while stack.last().is_some_and(|f| f.dead) {
                        let dead = stack.pop().expect("checked non-empty");
                        if let (Some(parent), Some(j)) = (stack.last_mut(), dead.from) {
                            parent.fail(j);
                        }
                    }
                }
            }
        }
        return Err(ExplainError::Unsatisfiable);
    }
}

/// A deduplicated set of explanations projected onto original variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExplanationSet {
    members: Vec<World>,
    /// Draw count when each member was first added.
    found_at: Vec<usize>,
    index: HashSet<World>,
    draw_count: usize,
    failures: usize,
}

impl ExplanationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_worlds(worlds: impl IntoIterator<Item = World>) -> Self {
        let mut set = Self::new();
        for w in worlds {
            set.record_draw(w);
        }
        set
    }

    /// Adds a member without counting a draw. Returns whether it was new.
    pub fn insert(&mut self, world: World) -> bool {
        if self.index.contains(&world) {
            return false;
        }
        self.index.insert(world.clone());
        self.members.push(world);
        self.found_at.push(self.draw_count);
        true
    }

    /// Records one successful draw.
    pub fn record_draw(&mut self, world: World) -> bool {
        self.draw_count += 1;
        self.insert(world)
    }

    pub fn record_failure(&mut self) {
        self.failures += 1;
    }

    pub fn members(&self) -> &[World] {
        &self.members
    }

    pub fn iter(&self) -> std::slice::Iter<'_, World> {
        self.members.iter()
    }

    pub fn contains(&self, world: &World) -> bool {
        self.index.contains(world)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn draw_count(&self) -> usize {
        self.draw_count
    }

    pub fn failures(&self) -> usize {
        self.failures
    }

    /// Set with only the first `k` members, in insertion order.
    pub fn prefix(&self, k: usize) -> ExplanationSet {
        ExplanationSet::from_worlds(self.members.iter().take(k).cloned())
    }

    /// Draw count at which each member was first added, in member order.
    pub fn found_at(&self) -> &[usize] {
        &self.found_at
    }

    /// Number of members found within the first `draws` draws.
    pub fn found_within(&self, draws: usize) -> usize {
        self.found_at.partition_point(|&d| d <= draws)
    }

    /// Members found within the first `draws` draws, with `draws` (or fewer,
    /// if the set holds fewer) recorded as the draw count.
    pub fn after_draws(&self, draws: usize) -> ExplanationSet {
        let k = self.found_within(draws);
        ExplanationSet {
            members: self.members[..k].to_vec(),
            found_at: self.found_at[..k].to_vec(),
            index: self.members[..k].iter().cloned().collect(),
            draw_count: draws.min(self.draw_count),
            failures: 0,
        }
    }
}

impl<'a> IntoIterator for &'a ExplanationSet {
    type Item = &'a World;
    type IntoIter = std::slice::Iter<'a, World>;

    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

/// Whether [`sample_set`] stops at the first failed draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OnFailure {
    #[default]
    FailFast,
    Skip,
}

/// Runs `draws` independent samples with one fresh strategy whose counts
/// persist across the draws. Draw `t` uses random stream `t` of `seed`.
pub fn sample_set(
    formula: &CnfFormula,
    kind: StrategyKind,
    policy: ConflictPolicy,
    draws: usize,
    seed: u64,
    on_failure: OnFailure,
) -> Result<ExplanationSet, ExplainError> {
    let mut strategy = kind.build();
    sample_set_with(formula, strategy.as_mut(), policy, draws, seed, on_failure)
}

/// [`sample_set`] with a caller-owned strategy.
pub fn sample_set_with(
    formula: &CnfFormula,
    strategy: &mut dyn SamplingStrategy,
    policy: ConflictPolicy,
    draws: usize,
    seed: u64,
    on_failure: OnFailure,
) -> Result<ExplanationSet, ExplainError> {
    let mut set = ExplanationSet::new();
    for t in 0..draws {
        let mut rng = rng::stream(seed, t as u64, 0);
        match sample_explanation(formula, strategy, policy, &mut rng) {
            Ok(f) => {
                let world = formula.project(&f).expect("sampler returns complete assignments");
                set.record_draw(world);
            }
            Err(e) => match on_failure {
                OnFailure::FailFast => return Err(e),
                OnFailure::Skip => set.record_failure(),
            },
        }
    }
    Ok(set)
}

/// Number of members that are explanations of `formula`.
pub fn diversity(set: &ExplanationSet, formula: &CnfFormula) -> usize {
    set.iter().filter(|w| formula.satisfied_by_world(w)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Lit;

    fn car() -> CnfFormula {
        CnfFormula::new(
            4,
            vec![
                vec![Lit::pos(1), Lit::pos(2), Lit::neg(3)],
                vec![Lit::pos(1), Lit::pos(2), Lit::pos(4)],
            ],
        )
        .unwrap()
    }

    fn w(s: &str) -> World {
        s.parse().unwrap()
    }

    #[test]
    fn unit_chain_needs_no_draw() {
        let f = CnfFormula::new(2, vec![vec![Lit::pos(1)], vec![Lit::neg(1), Lit::pos(2)]]).unwrap();
        let mut d = Decay::new(1.0);
        let got = sample_explanation(&f, &mut d, ConflictPolicy::default(), &mut rng::seeded(1)).unwrap();
        assert_eq!(got.to_string(), "11");
        assert_eq!(d.num_keys(), 0);
    }

    #[test]
    fn unsatisfiable_errors() {
        let f = CnfFormula::new(1, vec![vec![Lit::pos(1)], vec![Lit::neg(1)]]).unwrap();
        let r = sample_explanation(
            &f,
            &mut Uniform,
            ConflictPolicy::Restart { max_restarts: 5 },
            &mut rng::seeded(0),
        );
        assert_eq!(r, Err(ExplainError::BudgetExceeded { max_restarts: 5 }));
        let r = sample_explanation(&f, &mut Uniform, ConflictPolicy::default(), &mut rng::seeded(0));
        assert_eq!(r, Err(ExplainError::Unsatisfiable));
    }

    #[test]
    fn draws_are_explanations() {
        let f = car();
        for policy in [
            ConflictPolicy::Restart { max_restarts: 100 },
            ConflictPolicy::default_for(1),
            ConflictPolicy::Backtrack {
                depth_limit: Some(1),
                max_restarts: 100,
            },
        ] {
            let set = sample_set(&f, StrategyKind::Decay { theta: 1.0 }, policy, 300, 9, OnFailure::FailFast).unwrap();
            assert_eq!(set.draw_count(), 300);
            assert!(set.len() <= 13);
            assert!(set.iter().all(|m| f.satisfied_by_world(m)));
        }
    }

    #[test]
    fn sample_set_edge_sizes() {
        let f = CnfFormula::new(2, vec![vec![Lit::pos(1)], vec![Lit::neg(2)]]).unwrap();
        let one = sample_set(&f, StrategyKind::Uniform, ConflictPolicy::default(), 1, 0, OnFailure::FailFast).unwrap();
        assert_eq!(one.members(), &[w("10")]);
        let none = sample_set(&f, StrategyKind::Uniform, ConflictPolicy::default(), 0, 0, OnFailure::FailFast).unwrap();
        assert!(none.is_empty());
        assert_eq!(none.draw_count(), 0);
    }

    #[test]
    fn skip_mode_counts_failures() {
        let f = CnfFormula::new(1, vec![vec![Lit::pos(1)], vec![Lit::neg(1)]]).unwrap();
        let set = sample_set(&f, StrategyKind::Uniform, ConflictPolicy::default(), 3, 0, OnFailure::Skip).unwrap();
        assert_eq!((set.len(), set.draw_count(), set.failures()), (0, 0, 3));
    }

    #[test]
    fn diversity_counts_only_explanations() {
        let f = car();
        assert_eq!(diversity(&ExplanationSet::new(), &f), 0);
        let mut set = ExplanationSet::from_worlds([w("0110"), w("1001")]);
        assert_eq!(diversity(&set, &f), 2);
        set.insert(w("0011"));
        assert_eq!(diversity(&set, &f), 2);
    }

    #[test]
    fn policy_validation() {
        let f = car();
        let r = sample_explanation(&f, &mut Uniform, ConflictPolicy::Restart { max_restarts: 0 }, &mut rng::seeded(0));
        assert!(matches!(r, Err(ExplainError::InvalidPolicy(_))));
    }
}
