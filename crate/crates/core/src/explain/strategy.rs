use std::collections::HashMap;

use crate::formula::{Assignment, Value};

/// Largest decay rate accepted; larger values are clamped.
pub const MAX_THETA: f64 = 20.0;

/// Assigning one more variable a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Extension {
    pub var: u32,
    pub value: bool,
}

impl Extension {
    pub fn apply(self, mu: &Assignment) -> Assignment {
        mu.extended(self.var, self.value)
    }
}

/// All one-variable extensions of `mu`, ordered by variable and then
/// `false` before `true`.
pub fn candidates(mu: &Assignment) -> Vec<Extension> {
    let mut out = Vec::with_capacity(2 * (mu.len() - mu.num_assigned()));
    for var in mu.unassigned_vars() {
        out.push(Extension { var, value: false });
        out.push(Extension { var, value: true });
    }
    out
}

/// A distribution over the one-variable extensions of a partial assignment.
///
/// Implementations return unnormalized log-weights; `-inf` excludes a
/// candidate. `observe` is called for every extension the sampler draws,
/// including ones later abandoned by backtracking.
pub trait SamplingStrategy {
    fn log_weights(&self, mu: &Assignment, candidates: &[Extension], out: &mut Vec<f64>);

    fn observe(&mut self, _extended: &Assignment) {}
}

/// The normalized distribution a strategy induces at `mu`.
pub fn distribution(strategy: &dyn SamplingStrategy, mu: &Assignment) -> Vec<(Extension, f64)> {
    let cands = candidates(mu);
    let mut lw = Vec::new();
    strategy.log_weights(mu, &cands, &mut lw);
    let probs = normalize_log_weights(&lw);
    cands.into_iter().zip(probs).collect()
}

/// Softmax of log-weights. All `-inf` falls back to uniform.
pub(crate) fn normalize_log_weights(lw: &[f64]) -> Vec<f64> {
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![1.0 / lw.len() as f64; lw.len()];
    }
    let exps: Vec<f64> = lw.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Every extension equally likely.
#[derive(Clone, Copy, Debug, Default)]
pub struct Uniform;

impl SamplingStrategy for Uniform {
    fn log_weights(&self, _mu: &Assignment, candidates: &[Extension], out: &mut Vec<f64>) {
        out.clear();
        out.resize(candidates.len(), 0.0);
    }
}

/// Deterministic choice: the lowest unassigned variable, `true` first.
/// With backtracking this turns the sampler into plain DPLL.
#[derive(Clone, Copy, Debug, Default)]
pub struct FirstUnassigned;

impl SamplingStrategy for FirstUnassigned {
    fn log_weights(&self, _mu: &Assignment, candidates: &[Extension], out: &mut Vec<f64>) {
        out.clear();
        let first = candidates.first().map(|c| c.var);
        out.extend(candidates.iter().map(|c| match (Some(c.var) == first, c.value) {
            (true, true) => 0.0,
            (true, false) => -1000.0,
            _ => f64::NEG_INFINITY,
        }));
    }
}

/// Exact key of a partial assignment, two bits per variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AssignmentKey(Vec<u64>);

impl AssignmentKey {
    pub fn of(mu: &Assignment) -> Self {
        let mut words = vec![0u64; mu.len().div_ceil(32)];
        for (i, v) in mu.values().iter().enumerate() {
            words[i / 32] |= code(*v) << (2 * (i % 32));
        }
        AssignmentKey(words)
    }

    fn with(&self, var: u32, value: bool) -> Self {
        let i = var as usize - 1;
        let mut words = self.0.clone();
        let shift = 2 * (i % 32);
        words[i / 32] = (words[i / 32] & !(3 << shift)) | (code(Value::from_bool(value)) << shift);
        AssignmentKey(words)
    }
}

fn code(v: Value) -> u64 {
    match v {
        Value::Unassigned => 0,
        Value::False => 1,
        Value::True => 2,
    }
}

/// Down-weights previously drawn extensions: an extension `μ'` drawn
/// `N(μ')` times before has weight proportional to `exp(-N(μ')·θ)`.
#[derive(Clone, Debug, Default)]
pub struct Decay {
    theta: f64,
    counts: HashMap<AssignmentKey, u32>,
}

impl Decay {
    pub fn new(theta: f64) -> Self {
        assert!(theta >= 0.0 && !theta.is_nan(), "decay rate must be non-negative");
        if theta > MAX_THETA {
            log::warn!("decay rate {theta} clamped to {MAX_THETA}");
        }
        Decay {
            theta: theta.min(MAX_THETA),
            counts: HashMap::new(),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Visit count of an exact partial assignment.
    pub fn count(&self, mu: &Assignment) -> u32 {
        self.counts.get(&AssignmentKey::of(mu)).copied().unwrap_or(0)
    }

    pub fn num_keys(&self) -> usize {
        self.counts.len()
    }

    pub fn reset(&mut self) {
        self.counts.clear();
    }
}

impl SamplingStrategy for Decay {
    fn log_weights(&self, mu: &Assignment, candidates: &[Extension], out: &mut Vec<f64>) {
        out.clear();
        if self.theta == 0.0 || self.counts.is_empty() {
            out.resize(candidates.len(), 0.0);
            return;
        }
        let base = AssignmentKey::of(mu);
        out.extend(candidates.iter().map(|c| {
            let n = self.counts.get(&base.with(c.var, c.value)).copied().unwrap_or(0);
            -(n as f64) * self.theta
        }));
    }

    fn observe(&mut self, extended: &Assignment) {
        *self.counts.entry(AssignmentKey::of(extended)).or_insert(0) += 1;
    }
}

/// Serializable choice of strategy; each sampling run builds a fresh one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StrategyKind {
    Uniform,
    Decay { theta: f64 },
}

impl StrategyKind {
    pub fn build(&self) -> Box<dyn SamplingStrategy> {
        match *self {
            StrategyKind::Uniform => Box::new(Uniform),
            StrategyKind::Decay { theta } => Box::new(Decay::new(theta)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> Assignment {
        s.parse().unwrap()
    }

    #[test]
    fn support_is_all_one_step_extensions() {
        let mu = a("1??0?");
        let d = distribution(&Uniform, &mu);
        assert_eq!(d.len(), 6);
        let total: f64 = d.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-15);
        for (e, _) in &d {
            let next = e.apply(&mu);
            assert!(next.extends(&mu));
            assert_eq!(next.num_assigned(), mu.num_assigned() + 1);
        }
    }

    #[test]
    fn zero_decay_equals_uniform_exactly() {
        let mut decay = Decay::new(0.0);
        decay.observe(&a("1???"));
        decay.observe(&a("1???"));
        for mu in ["????", "0???", "1?0?"] {
            let u: Vec<f64> = distribution(&Uniform, &a(mu)).into_iter().map(|x| x.1).collect();
            let d: Vec<f64> = distribution(&decay, &a(mu)).into_iter().map(|x| x.1).collect();
            assert_eq!(u, d);
        }
    }

    #[test]
    fn decay_probability_follows_counts() {
        let theta = 0.7;
        let mut decay = Decay::new(theta);
        decay.observe(&a("1??"));
        decay.observe(&a("1??"));
        decay.observe(&a("?0?"));
        let d = distribution(&decay, &a("???"));
        let w = |n: f64| (-n * theta).exp();
        let z = w(0.0) + w(2.0) + w(0.0) + w(1.0) + 2.0 * w(0.0);
        let expect = [w(0.0) / z, w(2.0) / z, w(1.0) / z, w(0.0) / z, w(0.0) / z, w(0.0) / z];
        for ((_, p), e) in d.iter().zip(expect) {
            assert!((p - e).abs() < 1e-15);
        }
        assert_eq!(decay.count(&a("1??")), 2);
        assert_eq!(decay.count(&a("0??")), 0);
    }

    #[test]
    fn theta_is_capped() {
        assert_eq!(Decay::new(1e6).theta(), MAX_THETA);
    }

    #[test]
    fn first_unassigned_is_deterministic() {
        let d = distribution(&FirstUnassigned, &a("1??"));
        assert_eq!(d[1], (Extension { var: 2, value: true }, 1.0));
        assert!(d.iter().filter(|x| x.1 > 0.0).count() == 1);
    }

    #[test]
    fn keys_distinguish_values() {
        assert_ne!(AssignmentKey::of(&a("1?")), AssignmentKey::of(&a("0?")));
        assert_ne!(AssignmentKey::of(&a("?0")), AssignmentKey::of(&a("??")));
        assert_eq!(AssignmentKey::of(&a("??")).with(1, true), AssignmentKey::of(&a("1?")));
    }
}
