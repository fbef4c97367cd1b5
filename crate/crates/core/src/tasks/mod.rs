//! Benchmark tasks: synthetic formula families, multi-digit MNIST addition
//! and shortest paths on cost grids.

mod generators;
mod grid;
mod mnist;

pub use generators::{gen_bottom_up, gen_branch, gen_half_models, gen_split};
pub use grid::{
    dijkstra, exact_path_accuracy, generate_grid, gibbs_explanations, is_shortest, levels_to_costs,
    levels_to_world, path_accuracy, path_cost, predict_levels, predict_path, shortest_cost, GridConfig,
    GridInstance, GridSupervision, COST_TOLERANCE,
};
pub use mnist::*;

use thiserror::Error;

use crate::agree::AgreeError;
use crate::formula::FormulaError;
use crate::oracle::OracleError;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot reach probability {target}; achievable range is [{min}, {max}]")]
    TuningFailed { target: f64, min: f64, max: f64 },
    #[error("sum {sum} out of range (max {max})")]
    SumOutOfRange { sum: u64, max: u64 },
    #[error("truncated data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Agree(#[from] AgreeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}
