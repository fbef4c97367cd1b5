//! Reweighting sampled explanations against the perception model.
//!
//! Given a set `Ψ` of explanations and the model's distribution `P(f | x)`,
//! the weights `Q*(f) = P(f | x) / Σ_{f'∈Ψ} P(f' | x)` minimize
//! `KL(Q | P) = Σ_f Q(f) log(Q(f) / P(f | x))` over distributions supported
//! on `Ψ`, and the minimum is `-log Σ_{f∈Ψ} P(f | x)`. Explanations of a
//! formula and of its negation bound `P(φ | x)` from both sides.
//!
//! All accumulation happens in log space.

use std::ops::Range;

use thiserror::Error;

use crate::explain::ExplanationSet;
use crate::formula::World;

/// Floor applied to the log of a single factor, close to `ln` of the
/// smallest positive `f64`.
pub const LOG_FLOOR: f64 = -745.0;

/// Largest floating-point slack tolerated when the upper bound falls
/// below the lower bound.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgreeError {
    #[error("probability {value} of variable {var} is outside [0, 1]")]
    ProbabilityOutOfRange { var: usize, value: f64 },
    #[error("group {group} sums to {sum}, expected 1")]
    GroupNotNormalized { group: usize, sum: f64 },
    #[error("groups overlap or exceed {num_vars} variables")]
    BadGroups { num_vars: usize },
    #[error("world has {got} variables, output has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("world selects {selected} values in group {group}, expected exactly one")]
    GroupViolation { group: usize, selected: usize },
    #[error("explanation set is empty")]
    EmptySet,
    #[error("every explanation has probability zero")]
    DegenerateSupport,
    #[error("upper bound {upper} is below lower bound {lower}")]
    InconsistentBounds { lower: f64, upper: f64 },
}

/// Per-variable probabilities produced by the perception model.
///
/// Variables outside every group are independent Bernoullis with
/// `P(f_k = 1) = probs[k]`. Each group is a block of one-hot variables
/// with exactly one true, and `probs` over the block is a simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptionOutput {
    probs: Vec<f64>,
    groups: Vec<Range<usize>>,
    group_of: Vec<Option<usize>>,
}

impl PerceptionOutput {
    pub fn bernoulli(probs: Vec<f64>) -> Result<Self, AgreeError> {
        Self::with_groups(probs, Vec::new())
    }

    pub fn with_groups(probs: Vec<f64>, groups: Vec<Range<usize>>) -> Result<Self, AgreeError> {
        for (var, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(AgreeError::ProbabilityOutOfRange { var, value: p });
            }
        }
        let mut group_of = vec![None; probs.len()];
        for (g, r) in groups.iter().enumerate() {
            if r.end > probs.len() || r.is_empty() {
                return Err(AgreeError::BadGroups { num_vars: probs.len() });
            }
            for k in r.clone() {
                if group_of[k].is_some() {
                    return Err(AgreeError::BadGroups { num_vars: probs.len() });
                }
                group_of[k] = Some(g);
            }
            let sum: f64 = probs[r.clone()].iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(AgreeError::GroupNotNormalized { group: g, sum });
            }
        }
        Ok(PerceptionOutput {
            probs,
            groups,
            group_of,
        })
    }

    /// All variables independent with probability one half.
    pub fn uniform(n: usize) -> Self {
        Self::bernoulli(vec![0.5; n]).expect("valid probabilities")
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn group_of(&self, var: usize) -> Option<usize> {
        self.group_of[var]
    }

    /// `log P(f | x)` and whether some factor was exactly zero.
    pub(crate) fn log_prob_flagged(&self, f: &World) -> Result<(f64, bool), AgreeError> {
        if f.len() != self.probs.len() {
            return Err(AgreeError::LengthMismatch {
                expected: self.probs.len(),
                got: f.len(),
            });
        }
        let bits = f.bits();
        let mut lp = 0.0;
        let mut zero = false;
        let mut factor = |p: f64| {
            if p <= 0.0 {
                zero = true;
                lp += LOG_FLOOR;
            } else {
                lp += p.ln().max(LOG_FLOOR);
            }
        };
        for (k, &p) in self.probs.iter().enumerate() {
            if self.group_of[k].is_none() {
                factor(if bits[k] { p } else { 1.0 - p });
            }
        }
        for (g, r) in self.groups.iter().enumerate() {
            let mut selected = None;
            let mut count = 0;
            for k in r.clone() {
                if bits[k] {
                    count += 1;
                    selected = Some(k);
                }
            }
            if count != 1 {
                return Err(AgreeError::GroupViolation {
                    group: g,
                    selected: count,
                });
            }
            factor(self.probs[selected.expect("one selected")]);
        }
        Ok((lp, zero))
    }

    pub fn log_prob(&self, f: &World) -> Result<f64, AgreeError> {
        self.log_prob_flagged(f).map(|(lp, zero)| if zero { f64::NEG_INFINITY } else { lp })
    }

    /// `P(f | x)` for a complete world.
    pub fn explanation_prob(&self, f: &World) -> Result<f64, AgreeError> {
        self.log_prob(f).map(f64::exp)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

fn log_probs(set: &ExplanationSet, output: &PerceptionOutput) -> Result<Vec<f64>, AgreeError> {
    set.iter().map(|f| output.log_prob(f)).collect()
}

/// `log Σ_{f∈Ψ} P(f | x)`.
pub fn log_mass(set: &ExplanationSet, output: &PerceptionOutput) -> Result<f64, AgreeError> {
    Ok(log_sum_exp(&log_probs(set, output)?))
}

/// `Σ_{f∈Ψ} P(f | x)`.
pub fn mass(set: &ExplanationSet, output: &PerceptionOutput) -> Result<f64, AgreeError> {
    log_mass(set, output).map(f64::exp)
}

/// Explanations with their optimal weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedExplanations {
    pub set: ExplanationSet,
    /// Aligned with `set.members()`.
    pub weights: Vec<f64>,
    /// `log Σ_{f∈Ψ} P(f | x)`.
    pub log_mass: f64,
}

impl WeightedExplanations {
    pub fn weight_of(&self, f: &World) -> Option<f64> {
        self.set
            .iter()
            .position(|m| m == f)
            .map(|i| self.weights[i])
    }
}

/// The weights `Q*` proportional to the model's probability of each member.
pub fn agree_weights(
    set: &ExplanationSet,
    output: &PerceptionOutput,
) -> Result<WeightedExplanations, AgreeError> {
    if set.is_empty() {
        return Err(AgreeError::EmptySet);
    }
    let mut lps = Vec::with_capacity(set.len());
    let mut all_zero = true;
    for f in set {
        let (lp, zero) = output.log_prob_flagged(f)?;
        all_zero &= zero;
        lps.push(if zero { f64::NEG_INFINITY } else { lp });
    }
    if all_zero {
        return Err(AgreeError::DegenerateSupport);
    }
    let lm = log_sum_exp(&lps);
    let weights = lps.iter().map(|&lp| (lp - lm).exp()).collect();
    Ok(WeightedExplanations {
        set: set.clone(),
        weights,
        log_mass: lm,
    })
}

/// `KL(Q | P) = Σ_f Q(f) log(Q(f) / P(f | x))` for weights aligned with the
/// members of `set`. Zero weights contribute nothing.
pub fn kl_divergence(
    weights: &[f64],
    set: &ExplanationSet,
    output: &PerceptionOutput,
) -> Result<f64, AgreeError> {
    let lps = log_probs(set, output)?;
    let mut kl = 0.0;
    for (&q, lp) in weights.iter().zip(lps) {
        if q > 0.0 {
            kl += q * (q.ln() - lp);
        }
    }
    Ok(kl)
}

/// The surrogate objective at the optimal weights, `-log Σ_{f∈Ψ} P(f | x)`.
/// Returns `+inf` (with a warning) when the set carries no mass.
pub fn surrogate_objective(set: &ExplanationSet, output: &PerceptionOutput) -> Result<f64, AgreeError> {
    let lm = log_mass(set, output)?;
    if lm == f64::NEG_INFINITY {
        log::warn!("explanation set has zero probability mass");
        return Ok(f64::INFINITY);
    }
    Ok((-lm).max(0.0))
}

/// The KL objective at uniform weights over `Ψ`, i.e. without reweighting:
/// `-(1/|Ψ|) Σ_f log(|Ψ| · P(f | x))`.
pub fn uniform_objective(set: &ExplanationSet, output: &PerceptionOutput) -> Result<f64, AgreeError> {
    if set.is_empty() {
        log::warn!("uniform objective of an empty set");
        return Ok(f64::INFINITY);
    }
    let k = set.len() as f64;
    let lps = log_probs(set, output)?;
    if lps.iter().any(|lp| *lp == f64::NEG_INFINITY) {
        log::warn!("explanation with zero probability under uniform weights");
        return Ok(f64::INFINITY);
    }
    Ok(-lps.iter().map(|lp| k.ln() + lp).sum::<f64>() / k)
}

/// Two-sided estimate of `P(φ | x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundsEstimate {
    pub lower: f64,
    pub upper: f64,
}

impl BoundsEstimate {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

/// `Σ_{Ψ⁺} P ≤ P(φ | x) ≤ 1 - Σ_{Ψ⁻} P` for explanations `Ψ⁺` of the
/// formula and `Ψ⁻` of its negation.
pub fn bounds(
    positive: &ExplanationSet,
    negative: &ExplanationSet,
    output: &PerceptionOutput,
) -> Result<BoundsEstimate, AgreeError> {
    let lower = mass(positive, output)?.min(1.0);
    let upper = (1.0 - mass(negative, output)?).clamp(0.0, 1.0);
    if upper < lower {
        if lower - upper > BOUND_SLACK {
            return Err(AgreeError::InconsistentBounds { lower, upper });
        }
        return Ok(BoundsEstimate {
            lower,
            upper: lower,
        });
    }
    Ok(BoundsEstimate { lower, upper })
}
