//! `explain-sample`: draw explanations of one formula.

use anyhow::Result;
use exal_core::explain::{self, ConflictPolicy, OnFailure, StrategyKind};
use serde_json::json;

use super::{Context, Outcome};
use crate::config::{param, Param, Params};
use crate::output::{write_json, CsvTable};
use crate::{formula_schema, row, source};

pub const SCHEMA: &[Param] = formula_schema!["branch", "3", "3";
    param("draws", "100", "number of EXPLAIN runs"),
    param("strategy", "decay", "decay | uniform"),
    param("theta", "0", "decay rate"),
    param("policy", "backtrack", "backtrack | restart"),
    param("max_restarts", "", "restart budget (default 10 per draw)"),
    param("depth_limit", "", "backtracking steps per attempt (default unlimited)"),
    param("on_failure", "fail", "fail | skip"),
];

pub fn strategy_from(params: &Params) -> Result<StrategyKind> {
    match params.get::<String>("strategy")?.as_str() {
        "decay" => Ok(StrategyKind::Decay {
            theta: params.get("theta")?,
        }),
        "uniform" => Ok(StrategyKind::Uniform),
        _ => Err(params.bad("strategy", "expected decay or uniform").into()),
    }
}

pub fn policy_from(params: &Params, draws: usize) -> Result<ConflictPolicy> {
    let max_restarts = params.get_opt("max_restarts")?.unwrap_or(10 * draws.max(1));
    match params.get::<String>("policy")?.as_str() {
        "backtrack" => Ok(ConflictPolicy::Backtrack {
            depth_limit: params.get_opt("depth_limit")?,
            max_restarts,
        }),
        "restart" => Ok(ConflictPolicy::Restart { max_restarts }),
        _ => Err(params.bad("policy", "expected backtrack or restart").into()),
    }
}

pub fn run(ctx: &Context, params: &Params) -> Result<Outcome> {
    let formula = source::load_formula(params)?;
    let draws: usize = params.get("draws")?;
    let kind = strategy_from(params)?;
    let policy = policy_from(params, draws)?;
    let on_failure = match params.get::<String>("on_failure")?.as_str() {
        "fail" => OnFailure::FailFast,
        "skip" => OnFailure::Skip,
        _ => return Err(params.bad("on_failure", "expected fail or skip").into()),
    };
    let set = explain::sample_set(&formula, kind, policy, draws, ctx.seed, on_failure)?;
    source::save_dimacs(&formula, &ctx.path("formula.cnf"))?;
    let mut table = CsvTable::create(ctx.path("samples.csv"), "explain-sample", &["index", "found_at_draw", "world"])?;
    for (i, (w, &found)) in set.iter().zip(set.found_at()).enumerate() {
        table.write(row![i, found, w.to_string()])?;
    }
    table.finish()?;
    let summary = json!({
        "command": "explain-sample",
        "seed": ctx.seed,
        "params": params.values(),
        "num_vars": formula.num_vars(),
        "num_original": formula.num_original(),
        "num_clauses": formula.num_clauses(),
        "draws": set.draw_count(),
        "failures": set.failures(),
        "distinct": set.len(),
    });
    write_json(ctx.path("summary.json"), &summary)?;
    Ok(Outcome::new(
        format!("explain-sample: {} distinct explanations from {} draws ({} failed)", set.len(), set.draw_count(), set.failures()),
        summary,
    ))
}
