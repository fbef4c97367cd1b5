//! `train-grid`: cell-cost perception from shortest-path labels.

use anyhow::Result;
use exal_core::learn::{
    fit, save_checkpoint, AnyModel, Example, Head, LinearSoftmaxModel, MlpModel, OptimizerKind, TrainConfig,
};
use exal_core::rng;
use exal_core::tasks::{self, GridConfig, GridInstance, GridSupervision};
use rayon::prelude::*;
use serde_json::json;

use super::{Context, Outcome};
use crate::config::{param, Param, Params};
use crate::output::{json_f64, write_json, CsvTable};
use crate::row;

pub const SCHEMA: &[Param] = &[
    param("rows", "6", "grid rows"),
    param("cols", "6", "grid columns"),
    param("costs", "1,9", "cost of each level, cheapest first"),
    param("noise", "0.5", "feature noise standard deviation"),
    param("patch", "4", "feature channels per level"),
    param("cheap_prob", "0.5", "probability of the cheapest level"),
    param("train", "200", "training grids"),
    param("test", "100", "held-out grids"),
    param("burn_in", "100", "Gibbs steps before sampling"),
    param("samples", "300", "Gibbs samples per grid and epoch"),
    param("model", "linear", "linear | mlp"),
    param("hidden", "16", "hidden units of the MLP"),
    param("optimizer", "adam", "adam | sgd"),
    param("lr", "0.01", "learning rate"),
    param("epochs", "10", "training epochs"),
    param("batch", "8", "grids per update"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct GridTrainConfig {
    pub grid: GridConfig,
    pub train_grids: usize,
    pub test_grids: usize,
    pub burn_in: usize,
    pub model: String,
    pub hidden: usize,
    pub train: TrainConfig,
}

impl GridTrainConfig {
    pub fn from_params(params: &Params, seed: u64, workers: usize) -> Result<Self> {
        let optimizer = match params.get::<String>("optimizer")?.as_str() {
            "adam" => OptimizerKind::Adam,
            "sgd" => OptimizerKind::Sgd,
            _ => return Err(params.bad("optimizer", "expected adam or sgd").into()),
        };
        let model: String = params.get("model")?;
        if model != "mlp" && model != "linear" {
            return Err(params.bad("model", "expected linear or mlp").into());
        }
        Ok(GridTrainConfig {
            grid: GridConfig {
                rows: params.get("rows")?,
                cols: params.get("cols")?,
                level_costs: params.get_list("costs")?,
                noise: params.get("noise")?,
                patch: params.get("patch")?,
                cheap_prob: params.get("cheap_prob")?,
            },
            train_grids: params.get("train")?,
            test_grids: params.get("test")?,
            burn_in: params.get("burn_in")?,
            model,
            hidden: params.get("hidden")?,
            train: TrainConfig {
                learning_rate: params.get("lr")?,
                samples_per_item: params.get("samples")?,
                epochs: params.get("epochs")?,
                batch_size: params.get("batch")?,
                theta: 0.0,
                seed,
                optimizer,
                reuse_explanations: false,
                workers,
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_unique: f64,
    pub path_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct GridReport {
    pub baseline_accuracy: f64,
    pub epochs: Vec<GridEpoch>,
    /// Gibbs samples checked against the shortest-path constraint.
    pub gibbs_checked: usize,
    pub gibbs_valid: usize,
    pub model: AnyModel,
}

impl GridReport {
    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map_or(self.baseline_accuracy, |e| e.path_accuracy)
    }
}

pub fn instances(grid: &GridConfig, count: usize, seed: u64) -> Result<Vec<GridInstance>> {
    (0..count)
        .map(|i| Ok(tasks::generate_grid(grid, rng::derive(seed, i as u64))?))
        .collect()
}

/// Draws one chain per grid and counts samples that keep the labelled path
/// shortest.
pub fn check_gibbs(grids: &[GridInstance], burn_in: usize, samples: usize, seed: u64) -> (usize, usize) {
    grids
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let chain = tasks::gibbs_explanations(g.rows, g.cols, &g.level_costs, &g.true_path, burn_in, samples, rng::derive(seed, i as u64));
            let valid = chain
                .iter()
                .filter(|levels| {
                    tasks::is_shortest(g.rows, g.cols, &g.true_path, &tasks::levels_to_costs(levels, &g.level_costs))
                })
                .count();
            (chain.len(), valid)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0, 0), |(a, b), (c, d)| (a + c, b + d))
}

pub fn run_training(cfg: &GridTrainConfig) -> Result<GridReport> {
    let seed = cfg.train.seed;
    let train = instances(&cfg.grid, cfg.train_grids, rng::derive(seed, 10))?;
    let test = instances(&cfg.grid, cfg.test_grids, rng::derive(seed, 11))?;
    let (gibbs_checked, gibbs_valid) = check_gibbs(&train, cfg.burn_in, cfg.train.samples_per_item, rng::derive(seed, 12));
    let data: Vec<Example<GridSupervision>> = train
        .iter()
        .map(|g| Example {
            input: g.input(),
            supervision: g.supervision(cfg.burn_in),
        })
        .collect();
    let (dim, k) = (cfg.grid.feature_dim(), cfg.grid.num_levels());
    let init = rng::derive(seed, 1);
    let mut model = if cfg.model == "mlp" {
        AnyModel::Mlp(MlpModel::new(dim, cfg.hidden, Head::Categorical(k), init))
    } else {
        AnyModel::Linear(LinearSoftmaxModel::new(dim, Head::Categorical(k), init))
    };
    let baseline_accuracy = tasks::exact_path_accuracy(&model, &test);
    let history = fit(&mut model, &data, &cfg.train, |_, m| {
        vec![("path_accuracy".into(), tasks::exact_path_accuracy(m, &test))]
    })?;
    let epochs = history
        .epochs
        .iter()
        .map(|e| GridEpoch {
            epoch: e.epoch,
            mean_loss: e.mean_loss,
            mean_unique: e.mean_unique,
            path_accuracy: e.metrics[0].1,
        })
        .collect();
    Ok(GridReport {
        baseline_accuracy,
        epochs,
        gibbs_checked,
        gibbs_valid,
        model,
    })
}

pub fn run(ctx: &Context, params: &Params) -> Result<Outcome> {
    let cfg = GridTrainConfig::from_params(params, ctx.seed, ctx.workers)?;
    let report = ctx.install(|| run_training(&cfg))??;
    let mut table = CsvTable::create(
        ctx.path("epochs.csv"),
        "train-grid",
        &["epoch", "mean_loss", "mean_unique", "path_accuracy"],
    )?;
    for e in &report.epochs {
        table.write(row![e.epoch, e.mean_loss, e.mean_unique, e.path_accuracy])?;
    }
    table.finish()?;
    std::fs::write(ctx.path("model.ckpt"), save_checkpoint(&report.model))?;
    let summary = json!({
        "command": "train-grid",
        "seed": ctx.seed,
        "params": params.values(),
        "baseline_accuracy": json_f64(report.baseline_accuracy),
        "path_accuracy": json_f64(report.final_accuracy()),
        "gibbs_checked": report.gibbs_checked,
        "gibbs_valid": report.gibbs_valid,
    });
    write_json(ctx.path("summary.json"), &summary)?;
    Ok(Outcome::new(
        format!(
            "train-grid: exact-path accuracy {:.3} (untrained {:.3}), {}/{} Gibbs samples valid",
            report.final_accuracy(),
            report.baseline_accuracy,
            report.gibbs_valid,
            report.gibbs_checked
        ),
        summary,
    ))
}
