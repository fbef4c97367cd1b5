//! `train-mnist`: multi-digit addition from sum labels only.

use std::path::PathBuf;

use anyhow::{Context as _, Result};
use exal_core::learn::{
    fit, save_checkpoint, AnyModel, Example, Head, LinearSoftmaxModel, MlpModel, OptimizerKind, PerceptionModel,
    TrainConfig,
};
use exal_core::rng;
use exal_core::tasks::{self, DigitSampler, Images, MnistAdditionInstance};
use serde_json::json;

use super::{Context, Outcome};
use crate::config::{param, Param, Params};
use crate::output::{json_f64, write_json, CsvTable};
use crate::row;

pub const SCHEMA: &[Param] = &[
    param("data_dir", "data/mnist", "directory with the IDX files"),
    param("digits", "1", "digits per number"),
    param("model", "mlp", "mlp | linear"),
    param("hidden", "128", "hidden units of the MLP"),
    param("optimizer", "adam", "adam | sgd"),
    param("lr", "0.001", "learning rate"),
    param("epochs", "5", "training epochs"),
    param("samples", "600", "explanations sampled per item"),
    param("batch", "16", "items per update"),
    param("reuse", "false", "sample explanations once per item"),
    param("train_limit", "0", "use at most this many training instances (0 = all)"),
    param("test_limit", "0", "evaluate on at most this many instances (0 = all)"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct MnistConfig {
    pub data_dir: PathBuf,
    pub digits: usize,
    pub model: String,
    pub hidden: usize,
    pub train: TrainConfig,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

impl MnistConfig {
    pub fn from_params(params: &Params, seed: u64, workers: usize) -> Result<Self> {
        let optimizer = match params.get::<String>("optimizer")?.as_str() {
            "adam" => OptimizerKind::Adam,
            "sgd" => OptimizerKind::Sgd,
            _ => return Err(params.bad("optimizer", "expected adam or sgd").into()),
        };
        let model: String = params.get("model")?;
        if model != "mlp" && model != "linear" {
            return Err(params.bad("model", "expected mlp or linear").into());
        }
        let limit = |key: &str| -> Result<Option<usize>> {
            let v: usize = params.get(key)?;
            Ok((v > 0).then_some(v))
        };
        Ok(MnistConfig {
            data_dir: params.get::<String>("data_dir")?.into(),
            digits: params.get("digits")?,
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
                reuse_explanations: params.get("reuse")?,
                workers,
            },
            train_limit: limit("train_limit")?,
            test_limit: limit("test_limit")?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MnistEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_unique: f64,
    pub skipped: usize,
    pub digit_accuracy: f64,
    pub sum_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct MnistReport {
    pub epochs: Vec<MnistEpoch>,
    pub model: AnyModel,
    pub train: Vec<MnistAdditionInstance>,
    pub test: Vec<MnistAdditionInstance>,
}

impl MnistReport {
    pub fn final_epoch(&self) -> Option<&MnistEpoch> {
        self.epochs.last()
    }
}

/// Held-out digit accuracy and sum accuracy.
pub fn evaluate<M: PerceptionModel + ?Sized>(model: &M, images: &Images, test: &[MnistAdditionInstance]) -> (f64, f64) {
    let (mut digits_ok, mut digits, mut sums_ok) = (0usize, 0usize, 0usize);
    for inst in test {
        let predicted: Vec<u8> = inst
            .image_indices
            .iter()
            .map(|&i| model.predict(&images.features(i))[0] as u8)
            .collect();
        digits_ok += predicted.iter().zip(&inst.digits).filter(|(a, b)| a == b).count();
        digits += predicted.len();
        let n = inst.digits_per_number();
        let number = |d: &[u8]| d.iter().fold(0u64, |acc, &x| 10 * acc + x as u64);
        sums_ok += usize::from(number(&predicted[..n]) + number(&predicted[n..]) == inst.sum);
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (frac(digits_ok, digits), frac(sums_ok, test.len()))
}

pub fn run_training(cfg: &MnistConfig) -> Result<MnistReport> {
    let load = |prefix: &str| {
        tasks::load_mnist_idx(&cfg.data_dir, prefix)
            .with_context(|| format!("loading MNIST `{prefix}` split from {}", cfg.data_dir.display()))
    };
    let train_split = load("train")?;
    let test_split = load("t10k")?;
    let seed = cfg.train.seed;
    let mut train = tasks::build_addition_dataset(&train_split, cfg.digits, rng::derive(seed, 2))?;
    let mut test = tasks::build_addition_dataset(&test_split, cfg.digits, rng::derive(seed, 3))?;
    if let Some(k) = cfg.train_limit {
        train.truncate(k);
    }
    if let Some(k) = cfg.test_limit {
        test.truncate(k);
    }
    let data: Vec<Example<DigitSampler>> = train
        .iter()
        .map(|inst| {
            Ok(Example {
                input: inst.input(&train_split.images),
                supervision: DigitSampler::new(cfg.digits, inst.sum)?,
            })
        })
        .collect::<Result<_>>()?;
    let dim = train_split.images.pixels_per_image();
    let init = rng::derive(seed, 1);
    let mut model = if cfg.model == "mlp" {
        AnyModel::Mlp(MlpModel::new(dim, cfg.hidden, Head::Categorical(10), init))
    } else {
        AnyModel::Linear(LinearSoftmaxModel::new(dim, Head::Categorical(10), init))
    };
    let history = fit(&mut model, &data, &cfg.train, |_, m| {
        let (d, s) = evaluate(m, &test_split.images, &test);
        vec![("digit_accuracy".into(), d), ("sum_accuracy".into(), s)]
    })?;
    let epochs = history
        .epochs
        .iter()
        .map(|e| MnistEpoch {
            epoch: e.epoch,
            mean_loss: e.mean_loss,
            mean_unique: e.mean_unique,
            skipped: e.skipped,
            digit_accuracy: e.metrics[0].1,
            sum_accuracy: e.metrics[1].1,
        })
        .collect();
    Ok(MnistReport {
        epochs,
        model,
        train,
        test,
    })
}

pub fn run(ctx: &Context, params: &Params) -> Result<Outcome> {
    let cfg = MnistConfig::from_params(params, ctx.seed, ctx.workers)?;
    let report = run_training(&cfg)?;
    let mut table = CsvTable::create(
        ctx.path("epochs.csv"),
        "train-mnist",
        &["epoch", "mean_loss", "mean_unique", "skipped", "digit_accuracy", "sum_accuracy"],
    )?;
    for e in &report.epochs {
        table.write(row![e.epoch, e.mean_loss, e.mean_unique, e.skipped, e.digit_accuracy, e.sum_accuracy])?;
    }
    table.finish()?;
    std::fs::write(ctx.path("model.ckpt"), save_checkpoint(&report.model))?;
    let manifest = |set: &[MnistAdditionInstance]| -> serde_json::Value {
        set.iter()
            .map(|i| json!({"images": i.image_indices, "digits": i.digits, "sum": i.sum}))
            .collect()
    };
    write_json(
        ctx.path("manifest.json"),
        &json!({"digits": cfg.digits, "train": manifest(&report.train), "test": manifest(&report.test)}),
    )?;
    let last = report.final_epoch();
    let summary = json!({
        "command": "train-mnist",
        "seed": ctx.seed,
        "params": params.values(),
        "train_instances": report.train.len(),
        "test_instances": report.test.len(),
        "digit_accuracy": last.map(|e| json_f64(e.digit_accuracy)),
        "sum_accuracy": last.map(|e| json_f64(e.sum_accuracy)),
    });
    write_json(ctx.path("summary.json"), &summary)?;
    let line = match last {
        Some(e) => format!(
            "train-mnist: sum accuracy {:.4}, digit accuracy {:.4} after {} epochs",
            e.sum_accuracy,
            e.digit_accuracy,
            report.epochs.len()
        ),
        None => "train-mnist: no epochs run".to_string(),
    };
    Ok(Outcome::new(line, summary))
}
