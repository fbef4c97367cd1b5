//! Brute-force ground truth for small instances.
//!
//! Everything here enumerates: explanations over the original variables,
//! exact weighted model counts, the exact likelihood of a dataset, a grid
//! search over the weight simplex, and central finite differences.

mod flow;

use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use thiserror::Error;

pub use flow::{exact_flow, ExactFlow};

use crate::agree::{self, AgreeError, PerceptionOutput};
use crate::explain::ExplanationSet;
use crate::formula::{CnfFormula, World};
use crate::learn::{Example, Input, PerceptionModel};
use crate::rng;

/// Largest number of original variables enumerated.
pub const ENUM_GUARD: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{n} variables exceed the enumeration guard of {limit}")]
    GuardExceeded { n: usize, limit: usize },
    #[error("finite-difference step {0} outside [1e-7, 1e-3]")]
    InvalidStep(f64),
    #[error("loss is not finite at parameter {param}")]
    NonFiniteLoss { param: usize },
    #[error(transparent)]
    Agree(#[from] AgreeError),
}

/// All explanations of a formula, projected onto its original variables.
#[derive(Clone, Debug, PartialEq)]
pub struct EnumerationResult {
    pub explanations: Vec<World>,
    pub count: usize,
}

impl EnumerationResult {
    pub fn to_set(&self) -> ExplanationSet {
        ExplanationSet::from_worlds(self.explanations.iter().cloned())
    }
}

fn guard(n: usize) -> Result<(), OracleError> {
    if n > ENUM_GUARD {
        return Err(OracleError::GuardExceeded { n, limit: ENUM_GUARD });
    }
    Ok(())
}

/// Visits every world over `n` variables in reflected Gray-code order.
/// The callback receives the world and the index of the bit that changed
/// (`None` for the first world).
pub fn for_each_gray(n: usize, mut visit: impl FnMut(&[bool], Option<usize>)) {
    let mut bits = vec![false; n];
    visit(&bits, None);
    for i in 1u64..(1u64 << n) {
        let flip = i.trailing_zeros() as usize;
        bits[flip] = !bits[flip];
        visit(&bits, Some(flip));
    }
}

/// Incremental clause bookkeeping for formulas without auxiliaries.
struct ClauseCounter {
    true_lits: Vec<u32>,
    occurrences: Vec<Vec<(usize, bool)>>,
    unsatisfied: usize,
}

impl ClauseCounter {
    fn new(formula: &CnfFormula, bits: &[bool]) -> Self {
        let n = formula.num_vars();
        let mut occurrences = vec![Vec::new(); n];
        let mut true_lits = vec![0u32; formula.num_clauses()];
        for (c, clause) in formula.clauses().iter().enumerate() {
            for &l in clause {
                occurrences[l.index()].push((c, l.is_positive()));
                if bits[l.index()] == l.is_positive() {
                    true_lits[c] += 1;
                }
            }
        }
        let unsatisfied = true_lits.iter().filter(|&&t| t == 0).count();
        ClauseCounter {
            true_lits,
            occurrences,
            unsatisfied,
        }
    }

    /// Updates counts after variable `var` changed to `value`.
    fn flip(&mut self, var: usize, value: bool) {
        for &(c, positive) in &self.occurrences[var] {
            if positive == value {
                if self.true_lits[c] == 0 {
                    self.unsatisfied -= 1;
                }
                self.true_lits[c] += 1;
            } else {
                self.true_lits[c] -= 1;
                if self.true_lits[c] == 0 {
                    self.unsatisfied += 1;
                }
            }
        }
    }
}

/// Calls `visit` on every explanation over the original variables.
pub fn for_each_explanation(formula: &CnfFormula, mut visit: impl FnMut(&[bool])) -> Result<(), OracleError> {
    let n = formula.num_original();
    guard(n)?;
    if formula.has_auxiliary() {
        for_each_gray(n, |bits, _| {
            if formula.satisfied_by_world(&World(bits.to_vec())) {
                visit(bits);
            }
        });
    } else {
        let mut counter: Option<ClauseCounter> = None;
        for_each_gray(n, |bits, flip| {
            let c = match (&mut counter, flip) {
                (Some(c), Some(v)) => {
                    c.flip(v, bits[v]);
                    c
                }
                _ => counter.insert(ClauseCounter::new(formula, bits)),
            };
            if c.unsatisfied == 0 {
                visit(bits);
            }
        });
    }
    Ok(())
}

/// The explanations `Φ` of a formula, in Gray-code order.
pub fn enumerate_explanations(formula: &CnfFormula) -> Result<EnumerationResult, OracleError> {
    let mut explanations = Vec::new();
    for_each_explanation(formula, |bits| explanations.push(World(bits.to_vec())))?;
    Ok(EnumerationResult {
        count: explanations.len(),
        explanations,
    })
}

/// Exact weighted model count `Σ_{f∈Φ} P(f | x)`.
pub fn exact_wmc(formula: &CnfFormula, output: &PerceptionOutput) -> Result<f64, OracleError> {
    if output.len() != formula.num_original() {
        return Err(AgreeError::LengthMismatch {
            expected: formula.num_original(),
            got: output.len(),
        }
        .into());
    }
    let mut total = 0.0;
    let mut err = None;
    let grouped = !output.groups().is_empty();
    for_each_explanation(formula, |bits| {
        if grouped {
            match output.explanation_prob(&World(bits.to_vec())) {
                Ok(p) => total += p,
                // Worlds breaking a one-hot block have probability zero.
                Err(AgreeError::GroupViolation { .. }) => {}
                Err(e) => err = Some(e),
            }
        } else {
            let mut p = 1.0;
            for (&b, &q) in bits.iter().zip(output.probs()) {
                p *= if b { q } else { 1.0 - q };
            }
            total += p;
        }
    })?;
    match err {
        Some(e) => Err(e.into()),
        None => Ok(total),
    }
}

/// Exact negative log-likelihood of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactNll {
    pub value: f64,
    /// First item whose formula has probability zero, if any.
    pub zero_probability_item: Option<usize>,
}

/// `-Σ_i log P(φ_i | x_i)` by exact model counting.
pub fn exact_nll<M: PerceptionModel + ?Sized>(data: &[Example<CnfFormula>], model: &M) -> Result<ExactNll, OracleError> {
    let mut value = 0.0;
    for (i, ex) in data.iter().enumerate() {
        let p = exact_wmc(&ex.supervision, &model.forward(&ex.input))?;
        if p <= 0.0 {
            log::warn!("item {i} has probability zero");
            return Ok(ExactNll {
                value: f64::INFINITY,
                zero_probability_item: Some(i),
            });
        }
        value -= p.ln();
    }
    Ok(ExactNll {
        value,
        zero_probability_item: None,
    })
}

/// Weights and objective found by direct search over the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMinimum {
    pub weights: Vec<f64>,
    pub kl: f64,
}

/// Number of Dirichlet draws used when `|Ψ|` is too large for a grid.
pub const DIRICHLET_DRAWS: usize = 200_000;

/// Searches the weight simplex for the minimum of `KL(Q | P)`.
///
/// With at most four explanations every point of the simplex grid with
/// spacing `resolution` is evaluated; larger sets fall back to random
/// search with uniform Dirichlet draws.
pub fn kl_grid_minimizer(
    psi: &ExplanationSet,
    output: &PerceptionOutput,
    resolution: f64,
) -> Result<GridMinimum, OracleError> {
    let lps: Vec<f64> = psi.iter().map(|f| output.log_prob(f)).collect::<Result<_, _>>()?;
    if lps.is_empty() {
        return Err(AgreeError::EmptySet.into());
    }
    let kl = |q: &[f64]| -> f64 {
        q.iter()
            .zip(&lps)
            .filter(|(q, _)| **q > 0.0)
            .map(|(q, lp)| q * (q.ln() - lp))
            .sum()
    };
    if lps.len() > 4 {
        let gamma = Gamma::new(1.0, 1.0).expect("valid shape");
        let mut r = rng::seeded(0x5eed);
        let mut best = GridMinimum {
            weights: vec![1.0 / lps.len() as f64; lps.len()],
            kl: f64::INFINITY,
        };
        best.kl = kl(&best.weights);
        for _ in 0..DIRICHLET_DRAWS {
            let mut q: Vec<f64> = (0..lps.len()).map(|_| gamma.sample(&mut r)).collect();
            let s: f64 = q.iter().sum();
            q.iter_mut().for_each(|v| *v /= s);
            let v = kl(&q);
            if v < best.kl {
                best = GridMinimum { weights: q, kl: v };
            }
        }
        return Ok(best);
    }

    let steps = (1.0 / resolution).round() as usize;
    // Per-grid-value terms q·(ln q - lp_j) for every member j.
    let table: Vec<Vec<f64>> = lps
        .iter()
        .map(|&lp| {
            (0..=steps)
                .map(|i| {
                    let q = i as f64 / steps as f64;
                    if i == 0 {
                        0.0
                    } else {
                        q * (q.ln() - lp)
                    }
                })
                .collect()
        })
        .collect();
    let k = lps.len();
    let to_weights = |idx: &[usize]| idx.iter().map(|&i| i as f64 / steps as f64).collect::<Vec<_>>();
    let best = match k {
        1 => (vec![steps], table[0][steps]),
        2 => (0..=steps)
            .map(|i| (vec![i, steps - i], table[0][i] + table[1][steps - i]))
            .fold((vec![], f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a }),
        _ => (0..=steps)
            .into_par_iter()
            .map(|i| {
                let mut best = (vec![], f64::INFINITY);
                for j in 0..=steps - i {
                    let head = table[0][i] + table[1][j];
                    let rest = steps - i - j;
                    if k == 3 {
                        let v = head + table[2][rest];
                        if v < best.1 {
                            best = (vec![i, j, rest], v);
                        }
                    } else {
                        for l in 0..=rest {
                            let v = head + table[2][l] + table[3][rest - l];
                            if v < best.1 {
                                best = (vec![i, j, l, rest - l], v);
                            }
                        }
                    }
                }
                best
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((vec![], f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a }),
    };
    let weights = to_weights(&best.0);
    Ok(GridMinimum {
        kl: kl(&weights),
        weights,
    })
}

/// Central finite differences of the surrogate objective, computed from
/// forward probabilities only.
pub fn finite_diff<M: PerceptionModel + Clone>(
    model: &M,
    input: &Input,
    psi: &ExplanationSet,
    step: f64,
) -> Result<Vec<f64>, OracleError> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(OracleError::InvalidStep(step));
    }
    let mut m = model.clone();
    let mut grad = Vec::with_capacity(m.num_params());
    for i in 0..m.num_params() {
        let orig = m.params()[i];
        m.params_mut()[i] = orig + step;
        let up = agree::surrogate_objective(psi, &m.forward(input))?;
        m.params_mut()[i] = orig - step;
        let down = agree::surrogate_objective(psi, &m.forward(input))?;
        m.params_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(OracleError::NonFiniteLoss { param: i });
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// `‖a - b‖∞ / max(‖a‖∞, ‖b‖∞)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
