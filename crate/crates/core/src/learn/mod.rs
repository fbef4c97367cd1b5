//! Training perception models against sampled explanations.
//!
//! Each step samples explanations `Ψ` for an example, weights them with
//! `Q*`, and descends `-log Σ_{f∈Ψ} P(f | x)`. The gradient with respect to
//! the logits is `p - t` where `t_k = Σ_f Q*(f) f_k`, i.e. the `Q*`-weighted
//! mixture of per-explanation cross-entropy gradients.

mod checkpoint;
mod model;
mod optim;

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{argmax, sigmoid, softmax, AnyModel, Head, Input, LinearSoftmaxModel, MlpModel, PerceptionModel};
pub use optim::{Adam, Optimizer, OptimizerKind, Sgd};

use crate::agree::{self, log_sum_exp, AgreeError, PerceptionOutput};
use crate::explain::{sample_set, ConflictPolicy, ExplainError, ExplanationSet, OnFailure, StrategyKind};
use crate::formula::CnfFormula;
use crate::rng;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("explanation set is empty")]
    EmptyExplanations,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("{skipped} of {total} items were skipped in epoch {epoch}")]
    TooManySkips {
        epoch: usize,
        skipped: usize,
        total: usize,
    },
    #[error(transparent)]
    Agree(#[from] AgreeError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("could not start worker pool: {0}")]
    Workers(String),
}

/// Anything that can produce explanations for one training example.
pub trait Supervision: Sync {
    fn explanations(&self, draws: usize, theta: f64, seed: u64) -> Result<ExplanationSet, ExplainError>;
}

impl Supervision for CnfFormula {
    fn explanations(&self, draws: usize, theta: f64, seed: u64) -> Result<ExplanationSet, ExplainError> {
        sample_set(
            self,
            StrategyKind::Decay { theta },
            ConflictPolicy::default_for(draws),
            draws,
            seed,
            OnFailure::FailFast,
        )
    }
}

/// A frozen explanation set, for experiments that hold `Ψ` fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedExplanations(pub ExplanationSet);

impl Supervision for FixedExplanations {
    fn explanations(&self, _draws: usize, _theta: f64, _seed: u64) -> Result<ExplanationSet, ExplainError> {
        Ok(self.0.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example<S> {
    pub input: Input,
    pub supervision: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub samples_per_item: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub theta: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Sample `Ψ` once per item and reuse it in later epochs.
    pub reuse_explanations: bool,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            samples_per_item: 10,
            epochs: 1,
            batch_size: 1,
            theta: 0.0,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
            reuse_explanations: false,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, dataset_len: usize) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be non-negative");
        }
        if self.samples_per_item == 0 || self.epochs == 0 || self.batch_size == 0 || self.workers == 0 {
            return bad("samples_per_item, epochs, batch_size and workers must be positive");
        }
        if dataset_len > 0 && self.batch_size > dataset_len {
            return bad("batch_size exceeds dataset size");
        }
        if !(self.theta >= 0.0) {
            return bad("theta must be non-negative");
        }
        Ok(())
    }
}

/// Loss and parameter gradient for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Every explanation had probability zero and uniform weights were used.
    pub degenerate: bool,
}

/// `Σ_f Q(f) f_k` for every variable.
fn targets(psi: &ExplanationSet, weights: &[f64], n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n];
    for (f, &q) in psi.iter().zip(weights) {
        for (tk, &bit) in t.iter_mut().zip(f.bits()) {
            if bit {
                *tk += q;
            }
        }
    }
    t
}

fn weights_and_loss(psi: &ExplanationSet, out: &PerceptionOutput) -> Result<(Vec<f64>, f64, bool), LearnError> {
    match agree::agree_weights(psi, out) {
        Ok(w) => Ok((w.weights, (-w.log_mass).max(0.0), false)),
        Err(AgreeError::DegenerateSupport) => {
            log::warn!("explanations carry no probability mass; using uniform weights");
            let lps: Vec<f64> = psi
                .iter()
                .map(|f| out.log_prob_flagged(f).map(|(lp, _)| lp))
                .collect::<Result<_, _>>()?;
            let k = psi.len() as f64;
            Ok((vec![1.0 / k; psi.len()], -log_sum_exp(&lps), true))
        }
        Err(AgreeError::EmptySet) => Err(LearnError::EmptyExplanations),
        Err(e) => Err(e.into()),
    }
}

/// The surrogate objective `-log Σ_{f∈Ψ} P(f | x)` and its gradient.
pub fn loss_and_grad<M: PerceptionModel + ?Sized>(
    model: &M,
    input: &Input,
    psi: &ExplanationSet,
) -> Result<LossGrad, LearnError> {
    let out = model.forward(input);
    let (weights, loss, degenerate) = weights_and_loss(psi, &out)?;
    let t = targets(psi, &weights, out.len());
    let w = model.head().width();
    let mut grad = vec![0.0; model.num_params()];
    let mut dlogits = vec![0.0; w];
    for (s, seg) in input.segments.iter().enumerate() {
        for j in 0..w {
            dlogits[j] = out.probs()[s * w + j] - t[s * w + j];
        }
        model.backward(seg, &dlogits, &mut grad);
    }
    Ok(LossGrad {
        loss,
        grad,
        degenerate,
    })
}

/// Outcome of one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// Summed loss over the items that were not skipped.
    pub loss: f64,
    pub items: usize,
    pub skipped: usize,
    /// Summed `|Ψ|` over the items that were not skipped.
    pub unique: usize,
    pub degenerate: usize,
}

fn item_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    rng::derive(rng::derive(seed, epoch as u64), index as u64)
}

enum ItemResult {
    Done { lg: LossGrad, unique: usize },
    Skipped,
}

fn evaluate_item<M: PerceptionModel + ?Sized, S: Supervision>(
    model: &M,
    example: &Example<S>,
    config: &TrainConfig,
    seed: u64,
    cache: Option<&OnceLock<Option<ExplanationSet>>>,
) -> Result<ItemResult, LearnError> {
    let sample = || match example
        .supervision
        .explanations(config.samples_per_item, config.theta, seed)
    {
        Ok(set) if !set.is_empty() => Some(set),
        Ok(_) => None,
        Err(e) => {
            log::warn!("skipping item: {e}");
            None
        }
    };
    let owned;
    let psi = match cache {
        Some(cell) => cell.get_or_init(sample).as_ref(),
        None => {
            owned = sample();
            owned.as_ref()
        }
    };
    let Some(psi) = psi else {
        return Ok(ItemResult::Skipped);
    };
    let lg = loss_and_grad(model, &example.input, psi)?;
    Ok(ItemResult::Done { lg, unique: psi.len() })
}

/// One update on a batch of examples: sample, weight, descend. Per-item
/// losses and gradients are summed in item order.
pub fn train_batch<M: PerceptionModel, S: Supervision>(
    model: &mut M,
    optimizer: &mut dyn Optimizer,
    batch: &[(usize, &Example<S>)],
    config: &TrainConfig,
    epoch: usize,
    caches: Option<&[OnceLock<Option<ExplanationSet>>]>,
) -> Result<StepReport, LearnError> {
    let model_ref: &M = model;
    let eval = |&(idx, ex): &(usize, &Example<S>)| {
        evaluate_item(
            model_ref,
            ex,
            config,
            item_seed(config.seed, epoch, idx),
            caches.map(|c| &c[idx]),
        )
    };
    let results: Vec<Result<ItemResult, LearnError>> = if config.workers > 1 {
        batch.par_iter().map(eval).collect()
    } else {
        batch.iter().map(eval).collect()
    };
    let mut report = StepReport {
        loss: 0.0,
        items: batch.len(),
        skipped: 0,
        unique: 0,
        degenerate: 0,
    };
    let mut grad = vec![0.0; model.num_params()];
    for r in results {
        match r? {
            ItemResult::Skipped => report.skipped += 1,
            ItemResult::Done { lg, unique } => {
                report.loss += lg.loss;
                report.unique += unique;
                report.degenerate += usize::from(lg.degenerate);
                for (g, d) in grad.iter_mut().zip(&lg.grad) {
                    *g += d;
                }
            }
        }
    }
    if report.skipped < report.items {
        optimizer.step(model.params_mut(), &grad);
    }
    Ok(report)
}

/// A single-example step.
pub fn train_step<M: PerceptionModel, S: Supervision>(
    model: &mut M,
    optimizer: &mut dyn Optimizer,
    example: &Example<S>,
    config: &TrainConfig,
    seed: u64,
) -> Result<StepReport, LearnError> {
    let cfg = TrainConfig {
        seed,
        workers: 1,
        ..config.clone()
    };
    train_batch(model, optimizer, &[(0, example)], &cfg, 0, None)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_unique: f64,
    pub skipped: usize,
    pub metrics: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

/// Epoch loop with per-epoch shuffling; `metrics` is called after every
/// epoch and its values are stored in the history.
pub fn fit<M, S, F>(model: &mut M, data: &[Example<S>], config: &TrainConfig, mut metrics: F) -> Result<History, LearnError>
where
    M: PerceptionModel,
    S: Supervision,
    F: FnMut(usize, &M) -> Vec<(String, f64)>,
{
    config.validate(data.len())?;
    let mut history = History::default();
    if data.is_empty() {
        return Ok(history);
    }
    let pool = if config.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| LearnError::Workers(e.to_string()))?,
        )
    } else {
        None
    };
    let mut optimizer = config.optimizer.build(config.learning_rate);
    let caches: Option<Vec<OnceLock<Option<ExplanationSet>>>> =
        config.reuse_explanations.then(|| (0..data.len()).map(|_| OnceLock::new()).collect());
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng::stream(config.seed, epoch as u64, 1));
        let (mut loss, mut unique, mut skipped) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(usize, &Example<S>)> = chunk.iter().map(|&i| (i, &data[i])).collect();
            let mut run = || train_batch(model, optimizer.as_mut(), &batch, config, epoch, caches.as_deref());
            let report = match &pool {
                Some(p) => p.install(run)?,
                None => run()?,
            };
            loss += report.loss;
            unique += report.unique;
            skipped += report.skipped;
        }
        if 2 * skipped > data.len() {
            return Err(LearnError::TooManySkips {
                epoch,
                skipped,
                total: data.len(),
            });
        }
        let done = (data.len() - skipped).max(1) as f64;
        let record = EpochRecord {
            epoch,
            mean_loss: loss / done,
            mean_unique: unique as f64 / done,
            skipped,
            metrics: metrics(epoch, model),
        };
        log::info!("epoch {epoch}: mean loss {:.6}, skipped {skipped}", record.mean_loss);
        history.epochs.push(record);
    }
    Ok(history)
}
