//! `bounds-bench`: lower and upper bounds on the probability of a formula
//! from explanations of the formula and of its negation, against the number
//! of draws.

use anyhow::Result;
use exal_core::agree::{self, PerceptionOutput};
use exal_core::explain::{self, ConflictPolicy, ExplanationSet, OnFailure, StrategyKind};
use exal_core::formula::CnfFormula;
use exal_core::{oracle, rng, tasks};
use rayon::prelude::*;
use serde_json::json;

use super::{Context, Outcome};
use crate::config::{param, Param, Params};
use crate::output::{json_f64, write_json, CsvTable};
use crate::row;

pub const SCHEMA: &[Param] = &[
    param("vars", "12", "variables per fixture"),
    param("target", "0.3", "exact probability of each fixture"),
    param("fixtures", "20", "number of fixtures (one seed each)"),
    param("thetas", "0,3", "decay rates to compare; the second is compared to the first"),
    param("max_draws", "16384", "draws per side"),
    param("every", "64", "draws between bound evaluations"),
    param("width", "0.01", "bracket width that counts as converged"),
];

/// Columns of `bounds.csv`.
pub const HEADER: [&str; 8] = [
    "fixture",
    "theta",
    "sample_count",
    "lower_agree",
    "upper_agree",
    "lower_uniform_proxy",
    "upper_uniform_proxy",
    "exact",
];

/// Tolerance for ordering checks between bounds computed in floating point.
pub const ORDER_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsConfig {
    pub vars: usize,
    pub target: f64,
    pub fixtures: usize,
    pub thetas: Vec<f64>,
    pub max_draws: usize,
    pub every: usize,
    pub width: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            vars: 12,
            target: 0.3,
            fixtures: 20,
            thetas: vec![0.0, 3.0],
            max_draws: 16384,
            every: 64,
            width: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsPoint {
    pub draws: usize,
    pub lower: f64,
    pub upper: f64,
    /// The same construction with uniform instead of probability-proportional
    /// weights: `exp(-U(Ψ+))` and `1 - exp(-U(Ψ-))`.
    pub naive_lower: f64,
    pub naive_upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsTrace {
    pub fixture: usize,
    pub theta: f64,
    pub exact: f64,
    pub points: Vec<BoundsPoint>,
}

impl BoundsTrace {
    /// First evaluated draw count with a bracket narrower than `width`.
    pub fn draws_to_width(&self, width: f64) -> Option<usize> {
        self.points.iter().find(|p| p.upper - p.lower < width).map(|p| p.draws)
    }

    pub fn bracket_violations(&self) -> usize {
        self.points
            .iter()
            .filter(|p| p.lower > self.exact + ORDER_SLACK || p.upper < self.exact - ORDER_SLACK)
            .count()
    }

    pub fn monotone_violations(&self) -> usize {
        self.points
            .windows(2)
            .filter(|w| w[1].lower < w[0].lower - ORDER_SLACK || w[1].upper > w[0].upper + ORDER_SLACK)
            .count()
    }

    pub fn last(&self) -> &BoundsPoint {
        self.points.last().expect("at least one evaluation")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub traces: Vec<BoundsTrace>,
    pub width: f64,
}

impl BoundsReport {
    pub fn traces_for(&self, theta: f64) -> impl Iterator<Item = &BoundsTrace> {
        self.traces.iter().filter(move |t| t.theta == theta)
    }

    /// Fixtures where `fast` reaches the target width in strictly fewer draws
    /// than `slow`; never reaching it counts as infinitely many draws.
    pub fn wins(&self, fast: f64, slow: f64) -> usize {
        let steps = |t: &BoundsTrace| t.draws_to_width(self.width).unwrap_or(usize::MAX);
        self.traces_for(fast)
            .zip(self.traces_for(slow))
            .filter(|(a, b)| steps(a) < steps(b))
            .count()
    }

    pub fn bracket_violations(&self) -> usize {
        self.traces.iter().map(BoundsTrace::bracket_violations).sum()
    }

    pub fn monotone_violations(&self) -> usize {
        self.traces.iter().map(BoundsTrace::monotone_violations).sum()
    }

    /// Smallest final distance between the unweighted lower estimate and the
    /// exact value over all traces.
    pub fn min_naive_gap(&self) -> f64 {
        self.traces
            .iter()
            .map(|t| (t.last().naive_lower - t.exact).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

fn sample(formula: &CnfFormula, theta: f64, draws: usize, seed: u64) -> Result<ExplanationSet> {
    Ok(explain::sample_set(
        formula,
        StrategyKind::Decay { theta },
        ConflictPolicy::default_for(draws),
        draws,
        seed,
        OnFailure::FailFast,
    )?)
}

fn naive(set: &ExplanationSet, output: &PerceptionOutput) -> Result<f64> {
    if set.is_empty() {
        return Ok(0.0);
    }
    Ok((-agree::uniform_objective(set, output)?).exp())
}

fn trace(fixture: usize, theta: f64, cfg: &BoundsConfig, seed: u64) -> Result<BoundsTrace> {
    let fixture_seed = rng::derive(seed, fixture as u64);
    let (formula, output) = tasks::gen_half_models(cfg.vars, cfg.target, fixture_seed)?;
    let exact = oracle::exact_wmc(&formula, &output)?;
    let negated = formula.negate();
    let pos = sample(&formula, theta, cfg.max_draws, rng::derive(fixture_seed, 1))?;
    let neg = sample(&negated, theta, cfg.max_draws, rng::derive(fixture_seed, 2))?;
    let mut points = Vec::new();
    let mut draws = cfg.every;
    while draws <= cfg.max_draws {
        let (p, n) = (pos.after_draws(draws), neg.after_draws(draws));
        let b = agree::bounds(&p, &n, &output)?;
        points.push(BoundsPoint {
            draws,
            lower: b.lower,
            upper: b.upper,
            naive_lower: naive(&p, &output)?,
            naive_upper: 1.0 - naive(&n, &output)?,
        });
        draws += cfg.every;
    }
    Ok(BoundsTrace {
        fixture,
        theta,
        exact,
        points,
    })
}

/// Fixtures run in parallel in the current rayon pool and are collected in
/// index order.
pub fn run_bench(cfg: &BoundsConfig, seed: u64) -> Result<BoundsReport> {
    let jobs: Vec<(usize, f64)> = (0..cfg.fixtures)
        .flat_map(|f| cfg.thetas.iter().map(move |&t| (f, t)))
        .collect();
    let traces: Result<Vec<BoundsTrace>> = jobs.par_iter().map(|&(f, t)| trace(f, t, cfg, seed)).collect();
    Ok(BoundsReport {
        traces: traces?,
        width: cfg.width,
    })
}

pub fn run(ctx: &Context, params: &Params) -> Result<Outcome> {
    let cfg = BoundsConfig {
        vars: params.get("vars")?,
        target: params.get("target")?,
        fixtures: params.get("fixtures")?,
        thetas: params.get_list("thetas")?,
        max_draws: params.get("max_draws")?,
        every: params.get("every")?,
        width: params.get("width")?,
    };
    if cfg.every == 0 || cfg.every > cfg.max_draws {
        return Err(params.bad("every", "must be in 1..=max_draws").into());
    }
    if cfg.thetas.is_empty() {
        return Err(params.bad("thetas", "need at least one rate").into());
    }
    let report = ctx.install(|| run_bench(&cfg, ctx.seed))??;
    let mut table = CsvTable::create(
        ctx.path("bounds.csv"),
        "bounds-bench",
        &HEADER,
    )?;
    for t in &report.traces {
        for p in &t.points {
            table.write(row![t.fixture, t.theta, p.draws, p.lower, p.upper, p.naive_lower, p.naive_upper, t.exact])?;
        }
    }
    table.finish()?;
    let reach: serde_json::Map<String, serde_json::Value> = cfg
        .thetas
        .iter()
        .map(|&theta| {
            let v: Vec<_> = report.traces_for(theta).map(|t| t.draws_to_width(cfg.width)).collect();
            (format!("{theta}"), json!(v))
        })
        .collect();
    let wins = (cfg.thetas.len() >= 2).then(|| report.wins(cfg.thetas[1], cfg.thetas[0]));
    let summary = json!({
        "command": "bounds-bench",
        "seed": ctx.seed,
        "params": params.values(),
        "draws_to_width": reach,
        "wins": wins,
        "bracket_violations": report.bracket_violations(),
        "monotone_violations": report.monotone_violations(),
        "min_naive_gap": json_f64(report.min_naive_gap()),
    });
    write_json(ctx.path("summary.json"), &summary)?;
    let line = match wins {
        Some(w) => format!(
            "bounds-bench: theta {} narrower first on {w}/{} fixtures, {} bracket violations",
            cfg.thetas[1], cfg.fixtures, report.bracket_violations()
        ),
        None => format!("bounds-bench: {} bracket violations", report.bracket_violations()),
    };
    Ok(Outcome::new(line, summary))
}
