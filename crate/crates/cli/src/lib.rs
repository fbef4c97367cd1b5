//! Experiment runner for the `exal` library: subcommands, their parameter
//! schemas and the artifacts they write.

pub mod checks;
pub mod commands;
pub mod config;
pub mod output;
pub mod source;

use std::path::PathBuf;

use anyhow::Result;

use commands::{Context, Outcome};
use config::{Param, Params};

/// Subcommand names with their schemas.
pub const SUBCOMMANDS: &[(&str, &[Param])] = &[
    ("explain-sample", commands::explain_sample::SCHEMA),
    ("diversity-bench", commands::diversity::SCHEMA),
    ("bounds-bench", commands::bounds::SCHEMA),
    ("flow-train", commands::flow::SCHEMA),
    ("train-mnist", commands::train_mnist::SCHEMA),
    ("train-grid", commands::train_grid::SCHEMA),
    ("oracle-check", commands::oracle_check::SCHEMA),
];

pub fn schema_of(command: &str) -> Option<&'static [Param]> {
    SUBCOMMANDS.iter().find(|(name, _)| *name == command).map(|(_, s)| *s)
}

/// A fully parsed invocation.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub command: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub params: Params,
}

pub fn execute(inv: &Invocation) -> Result<Outcome> {
    let ctx = Context::new(inv.seed, &inv.out_dir, inv.workers)?;
    let p = &inv.params;
    match inv.command.as_str() {
        "explain-sample" => commands::explain_sample::run(&ctx, p),
        "diversity-bench" => commands::diversity::run(&ctx, p),
        "bounds-bench" => commands::bounds::run(&ctx, p),
        "flow-train" => commands::flow::run(&ctx, p),
        "train-mnist" => commands::train_mnist::run(&ctx, p),
        "train-grid" => commands::train_grid::run(&ctx, p),
        "oracle-check" => commands::oracle_check::run(&ctx, p),
        other => anyhow::bail!("unknown subcommand {other}"),
    }
}
