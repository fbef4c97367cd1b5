//! `oracle-check`: library results against brute-force oracles on random
//! fixtures. Fails when any check reports a violation.

use anyhow::{bail, Result};
use serde_json::json;

use super::{Context, Outcome};
use crate::checks::{self, CheckResult};
use crate::config::{param, Param, Params};
use crate::output::{json_f64, write_json, CsvTable};
use crate::row;

pub const SCHEMA: &[Param] = &[
    param("agree_fixtures", "50", "fixtures for the weight optimality check"),
    param("resolution", "0.001", "simplex grid spacing"),
    param("bound_fixtures", "300", "fixtures for the bound checks"),
    param("surrogate_fixtures", "100", "fixtures for the likelihood bound"),
    param("gradient_fixtures", "50", "fixtures for the gradient check"),
    param("rollouts", "2000", "MDP rollouts for the progress check"),
    param("flow_rollouts", "20000", "flow-policy rollouts for the terminal check"),
];

pub fn run_checks(params: &Params, seed: u64) -> Result<Vec<CheckResult>> {
    let mut results = vec![checks::agree_optimality(
        params.get("agree_fixtures")?,
        seed,
        params.get("resolution")?,
        1e-6,
    )?];
    let (a, b) = checks::bound_sandwich(params.get("bound_fixtures")?, seed, 1e-10)?;
    results.extend([a, b]);
    let (a, b) = checks::surrogate_bound(params.get("surrogate_fixtures")?, seed, 1e-10)?;
    results.extend([a, b]);
    let (a, b) = checks::gradient_check(params.get("gradient_fixtures")?, seed, 1e-5)?;
    results.extend([a, b]);
    results.push(checks::progress_check(params.get("rollouts")?, seed)?);
    let flow = checks::flow_terminal_check(&checks::flow_fixture(), 2, params.get("flow_rollouts")?, seed)?;
    results.push(CheckResult {
        name: "flow_terminal_frequencies",
        fixtures: flow.terminals,
        violations: usize::from(!flow.passed(3.0)),
        worst: flow.max_z,
        tolerance: 3.0,
    });
    Ok(results)
}

pub fn run(ctx: &Context, params: &Params) -> Result<Outcome> {
    let results = ctx.install(|| run_checks(params, ctx.seed))??;
    let mut table = CsvTable::create(
        ctx.path("oracle_check.csv"),
        "oracle-check",
        &["check", "fixtures", "violations", "worst", "tolerance", "passed"],
    )?;
    for c in &results {
        table.write(row![c.name, c.fixtures, c.violations, c.worst, c.tolerance, c.passed()])?;
    }
    table.finish()?;
    let failed: Vec<&str> = results.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    let summary = json!({
        "command": "oracle-check",
        "seed": ctx.seed,
        "params": params.values(),
        "checks": results.iter().map(|c| json!({
            "check": c.name,
            "fixtures": c.fixtures,
            "violations": c.violations,
            "worst": json_f64(c.worst),
        })).collect::<Vec<_>>(),
        "failed": failed,
    });
    write_json(ctx.path("summary.json"), &summary)?;
    if !failed.is_empty() {
        bail!("oracle checks failed: {}", failed.join(", "));
    }
    Ok(Outcome::new(format!("oracle-check: {} checks passed", results.len()), summary))
}
