//! Python bindings: formulas, explanation sampling, AGREE weights and
//! bounds, the oracles, the task generators and the reference models.
//!
//! Explanations cross the boundary as lists of booleans over a formula's
//! original variables; probabilities as flat lists of floats.

use std::fmt::Display;

use exal_core::agree::{self, PerceptionOutput};
use exal_core::explain::{self, ConflictPolicy, ExplanationSet, OnFailure, StrategyKind};
use exal_core::formula::{self, CnfFormula, Lit, World};
use exal_core::learn::{
    self, load_checkpoint, save_checkpoint, AnyModel, Example, Head, Input, LinearSoftmaxModel, MlpModel,
    OptimizerKind, PerceptionModel, TrainConfig,
};
use exal_core::{mdp, oracle, tasks};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn value_error(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn output(probs: Vec<f64>, groups: Option<Vec<(usize, usize)>>) -> PyResult<PerceptionOutput> {
    let groups = groups.unwrap_or_default().into_iter().map(|(a, b)| a..b).collect();
    PerceptionOutput::with_groups(probs, groups).map_err(value_error)
}

fn to_set(worlds: Vec<Vec<bool>>) -> ExplanationSet {
    ExplanationSet::from_worlds(worlds.into_iter().map(World))
}

fn from_set(set: &ExplanationSet) -> Vec<Vec<bool>> {
    set.iter().map(|w| w.bits().to_vec()).collect()
}

fn strategy(theta: f64) -> PyResult<StrategyKind> {
    if !(theta >= 0.0) {
        return Err(PyValueError::new_err("theta must be non-negative"));
    }
    Ok(StrategyKind::Decay { theta })
}

/// A CNF formula. Clauses are lists of non-zero DIMACS literals.
#[pyclass(name = "Formula", module = "exal", frozen, from_py_object)]
#[derive(Clone)]
struct PyFormula {
    inner: CnfFormula,
}

#[pymethods]
impl PyFormula {
    #[new]
    fn new(num_vars: usize, clauses: Vec<Vec<i32>>) -> PyResult<Self> {
        if clauses.iter().flatten().any(|&l| l == 0) {
            return Err(PyValueError::new_err("literal 0 is not allowed"));
        }
        let clauses = clauses.into_iter().map(|c| c.into_iter().map(Lit::from_dimacs).collect()).collect();
        Ok(PyFormula {
            inner: CnfFormula::new(num_vars, clauses).map_err(value_error)?,
        })
    }

    #[staticmethod]
    fn from_dimacs(text: &str) -> PyResult<Self> {
        Ok(PyFormula {
            inner: formula::parse_dimacs(text).map_err(value_error)?,
        })
    }

    fn to_dimacs(&self) -> String {
        formula::write_dimacs(&self.inner)
    }

    #[getter]
    fn num_vars(&self) -> usize {
        self.inner.num_vars()
    }

    /// Number of variables explanations are projected onto.
    #[getter]
    fn num_original(&self) -> usize {
        self.inner.num_original()
    }

    #[getter]
    fn clauses(&self) -> Vec<Vec<i32>> {
        self.inner.clauses().iter().map(|c| c.iter().map(|l| l.to_dimacs()).collect()).collect()
    }

    /// Whether a world over the original variables extends to a model.
    fn is_explanation(&self, world: Vec<bool>) -> bool {
        self.inner.satisfied_by_world(&World(world))
    }

    fn negate(&self) -> Self {
        PyFormula {
            inner: self.inner.negate(),
        }
    }

    /// Every explanation, by exhaustive enumeration.
    fn explanations(&self) -> PyResult<Vec<Vec<bool>>> {
        let all = oracle::enumerate_explanations(&self.inner).map_err(value_error)?;
        Ok(all.explanations.into_iter().map(|w| w.0).collect())
    }

    /// Distinct explanations from `draws` EXPLAIN calls with decay rate
    /// `theta`, in order of discovery.
    #[pyo3(signature = (draws, theta = 0.0, seed = 0))]
    fn sample(&self, py: Python<'_>, draws: usize, theta: f64, seed: u64) -> PyResult<Vec<Vec<bool>>> {
        let kind = strategy(theta)?;
        let set = py
            .detach(|| explain::sample_set(&self.inner, kind, ConflictPolicy::default_for(draws), draws, seed, OnFailure::FailFast))
            .map_err(value_error)?;
        Ok(from_set(&set))
    }

    /// Exact probability of the formula under independent (or grouped)
    /// probabilities.
    #[pyo3(signature = (probs, groups = None))]
    fn probability(&self, probs: Vec<f64>, groups: Option<Vec<(usize, usize)>>) -> PyResult<f64> {
        oracle::exact_wmc(&self.inner, &output(probs, groups)?).map_err(value_error)
    }

    /// Lower and upper bounds on the probability from `draws` samples of the
    /// formula and of its negation.
    #[pyo3(signature = (probs, draws, theta = 0.0, seed = 0, groups = None))]
    fn bounds(
        &self,
        py: Python<'_>,
        probs: Vec<f64>,
        draws: usize,
        theta: f64,
        seed: u64,
        groups: Option<Vec<(usize, usize)>>,
    ) -> PyResult<(f64, f64)> {
        let out = output(probs, groups)?;
        let kind = strategy(theta)?;
        let negated = self.inner.negate();
        let f = &self.inner;
        let b = py.detach(|| -> Result<_, String> {
            let draw = |g: &CnfFormula, s: u64| {
                if g.has_model_extending(&formula::Assignment::unassigned(g.num_vars())) {
                    explain::sample_set(g, kind, ConflictPolicy::default_for(draws), draws, s, OnFailure::FailFast)
                        .map_err(|e| e.to_string())
                } else {
                    Ok(ExplanationSet::new())
                }
            };
            let pos = draw(f, exal_core::rng::derive(seed, 1))?;
            let neg = draw(&negated, exal_core::rng::derive(seed, 2))?;
            agree::bounds(&pos, &neg, &out).map_err(|e| e.to_string())
        });
        let b = b.map_err(PyValueError::new_err)?;
        Ok((b.lower, b.upper))
    }

    fn __repr__(&self) -> String {
        format!("Formula(num_vars={}, clauses={})", self.inner.num_vars(), self.inner.num_clauses())
    }
}

/// Optimal weights `Q*` of the explanations under `probs`.
#[pyfunction]
#[pyo3(signature = (explanations, probs, groups = None))]
fn agree_weights(explanations: Vec<Vec<bool>>, probs: Vec<f64>, groups: Option<Vec<(usize, usize)>>) -> PyResult<Vec<f64>> {
    let out = output(probs, groups)?;
    Ok(agree::agree_weights(&to_set(explanations), &out).map_err(value_error)?.weights)
}

/// `-log` of the total probability of the explanations.
#[pyfunction]
#[pyo3(signature = (explanations, probs, groups = None))]
fn surrogate_objective(explanations: Vec<Vec<bool>>, probs: Vec<f64>, groups: Option<Vec<(usize, usize)>>) -> PyResult<f64> {
    agree::surrogate_objective(&to_set(explanations), &output(probs, groups)?).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (explanations, probs, groups = None))]
fn uniform_objective(explanations: Vec<Vec<bool>>, probs: Vec<f64>, groups: Option<Vec<(usize, usize)>>) -> PyResult<f64> {
    agree::uniform_objective(&to_set(explanations), &output(probs, groups)?).map_err(value_error)
}

/// Decay rate closest to the exact flow policy of the explanation MDP,
/// searched over `grid`.
#[pyfunction]
#[pyo3(signature = (formula, horizon, grid, rollouts = 2000, seed = 0))]
fn fit_theta(formula: &PyFormula, horizon: usize, grid: Vec<f64>, rollouts: usize, seed: u64) -> PyResult<f64> {
    let solved = oracle::exact_flow(&formula.inner, horizon).map_err(value_error)?;
    let policy = mdp::policy_from_flow(&solved.table);
    let fit = mdp::fit_theta(&policy, formula.inner.num_vars(), horizon, &grid, rollouts, seed).map_err(value_error)?;
    Ok(fit.theta)
}

#[pyfunction]
#[pyo3(signature = (depth, branching, seed = 0))]
fn gen_branch(depth: usize, branching: usize, seed: u64) -> PyResult<PyFormula> {
    Ok(PyFormula {
        inner: tasks::gen_branch(depth, branching, seed).map_err(value_error)?,
    })
}

#[pyfunction]
#[pyo3(signature = (depth, conj_size, disj_size, seed = 0))]
fn gen_split(depth: usize, conj_size: usize, disj_size: usize, seed: u64) -> PyResult<PyFormula> {
    Ok(PyFormula {
        inner: tasks::gen_split(depth, conj_size, disj_size, seed).map_err(value_error)?,
    })
}

#[pyfunction]
#[pyo3(signature = (frac_start, inferred, in_degree, seed = 0))]
fn gen_bottom_up(frac_start: f64, inferred: usize, in_degree: usize, seed: u64) -> PyResult<PyFormula> {
    Ok(PyFormula {
        inner: tasks::gen_bottom_up(frac_start, inferred, in_degree, seed).map_err(value_error)?,
    })
}

/// A formula with half of all worlds as models, and probabilities that
/// give it probability `target`.
#[pyfunction]
#[pyo3(signature = (n, target, seed = 0))]
fn gen_half_models(n: usize, target: f64, seed: u64) -> PyResult<(PyFormula, Vec<f64>)> {
    let (inner, out) = tasks::gen_half_models(n, target, seed).map_err(value_error)?;
    Ok((PyFormula { inner }, out.probs().to_vec()))
}

/// One-hot digit formula for two `digits`-digit numbers summing to `total`.
#[pyfunction]
fn mnist_sum_formula(digits: usize, total: u64) -> PyResult<PyFormula> {
    Ok(PyFormula {
        inner: tasks::mnist_sum_formula(digits, total).map_err(value_error)?,
    })
}

/// A linear or one-hidden-layer classifier trained from formulas.
#[pyclass(name = "Model", module = "exal")]
struct PyModel {
    inner: AnyModel,
}

fn head(outputs: usize, categorical: bool) -> Head {
    if categorical {
        Head::Categorical(outputs)
    } else {
        Head::Bernoulli(outputs)
    }
}

#[pymethods]
impl PyModel {
    /// `kind` is `"linear"` or `"mlp"`. A categorical head yields one
    /// distribution over `outputs` classes per segment; otherwise `outputs`
    /// independent probabilities.
    #[new]
    #[pyo3(signature = (kind, input_dim, outputs, hidden = 16, categorical = false, seed = 0))]
    fn new(kind: &str, input_dim: usize, outputs: usize, hidden: usize, categorical: bool, seed: u64) -> PyResult<Self> {
        let h = head(outputs, categorical);
        let inner = match kind {
            "linear" => AnyModel::Linear(LinearSoftmaxModel::new(input_dim, h, seed)),
            "mlp" => AnyModel::Mlp(MlpModel::new(input_dim, hidden, h, seed)),
            other => return Err(PyValueError::new_err(format!("unknown model kind {other:?}"))),
        };
        Ok(PyModel { inner })
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    fn params(&self) -> Vec<f64> {
        self.inner.params().to_vec()
    }

    /// Flattened probabilities for an input made of `segments`.
    fn forward(&self, segments: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.check_dims(&segments)?;
        Ok(self.inner.forward(&Input::new(segments)).probs().to_vec())
    }

    /// Surrogate loss and its parameter gradient for fixed explanations.
    fn loss_and_grad(&self, segments: Vec<Vec<f64>>, explanations: Vec<Vec<bool>>) -> PyResult<(f64, Vec<f64>)> {
        self.check_dims(&segments)?;
        let lg = learn::loss_and_grad(&self.inner, &Input::new(segments), &to_set(explanations)).map_err(value_error)?;
        Ok((lg.loss, lg.grad))
    }

    /// Trains on `(segments, formula)` pairs, sampling explanations each
    /// step. Returns the mean loss of every epoch.
    #[pyo3(signature = (inputs, formulas, epochs = 1, lr = 1e-3, samples = 10, batch = 1, theta = 0.0, optimizer = "adam", seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        &mut self,
        py: Python<'_>,
        inputs: Vec<Vec<Vec<f64>>>,
        formulas: Vec<PyFormula>,
        epochs: usize,
        lr: f64,
        samples: usize,
        batch: usize,
        theta: f64,
        optimizer: &str,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        if inputs.len() != formulas.len() {
            return Err(PyValueError::new_err("inputs and formulas differ in length"));
        }
        for segments in &inputs {
            self.check_dims(segments)?;
        }
        let optimizer = match optimizer {
            "adam" => OptimizerKind::Adam,
            "sgd" => OptimizerKind::Sgd,
            other => return Err(PyValueError::new_err(format!("unknown optimizer {other:?}"))),
        };
        let data: Vec<Example<CnfFormula>> = inputs
            .into_iter()
            .zip(formulas)
            .map(|(segments, f)| Example {
                input: Input::new(segments),
                supervision: f.inner,
            })
            .collect();
        let cfg = TrainConfig {
            learning_rate: lr,
            samples_per_item: samples,
            epochs,
            batch_size: batch,
            theta,
            seed,
            optimizer,
            ..TrainConfig::default()
        };
        let model = &mut self.inner;
        let history = py
            .detach(|| learn::fit(model, &data, &cfg, |_, _| Vec::new()))
            .map_err(value_error)?;
        Ok(history.epochs.iter().map(|e| e.mean_loss).collect())
    }

    /// Checkpoint bytes.
    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &save_checkpoint(&self.inner))
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(PyModel {
            inner: load_checkpoint(data).map_err(value_error)?,
        })
    }
}

impl PyModel {
    fn check_dims(&self, segments: &[Vec<f64>]) -> PyResult<()> {
        let d = self.inner.input_dim();
        if segments.is_empty() || segments.iter().any(|s| s.len() != d) {
            return Err(PyValueError::new_err(format!("expected one or more segments of length {d}")));
        }
        Ok(())
    }
}

#[pymodule]
fn exal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFormula>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(agree_weights, m)?)?;
    m.add_function(wrap_pyfunction!(surrogate_objective, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_objective, m)?)?;
    m.add_function(wrap_pyfunction!(fit_theta, m)?)?;
    m.add_function(wrap_pyfunction!(gen_branch, m)?)?;
    m.add_function(wrap_pyfunction!(gen_split, m)?)?;
    m.add_function(wrap_pyfunction!(gen_bottom_up, m)?)?;
    m.add_function(wrap_pyfunction!(gen_half_models, m)?)?;
    m.add_function(wrap_pyfunction!(mnist_sum_formula, m)?)?;
    Ok(())
}
