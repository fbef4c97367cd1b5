//! `diversity-bench`: mean number of distinct explanations against the
//! number of draws, for several sampling strategies.

use anyhow::{bail, Result};
use exal_core::explain::{self, ConflictPolicy, OnFailure, StrategyKind};
use exal_core::formula::CnfFormula;
use exal_core::oracle;
use exal_core::rng;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::flow::{learn_theta, LearnThetaConfig};
use super::{Context, Outcome};
use crate::config::{param, Param, Params};
use crate::output::{json_f64, write_json, CsvTable};
use crate::{formula_schema, row, source};

pub const SCHEMA: &[Param] = formula_schema!["branch", "3", "3";
    param("runs", "200", "independent runs per strategy"),
    param("draws", "0", "draw budget per run; 0 means the number of explanations"),
    param("thetas", "0,0.9162907318741551,3", "fixed decay rates"),
    param("learned", "true", "add the decay rate fitted to a trained flow"),
    param("proxy_depth", "1", "branch depth of the formula the flow is trained on"),
    param("proxy_branching", "2", "branching of the flow formula"),
    param("horizon", "2", "EXPLAIN runs per flow episode"),
    param("episodes", "20000", "flow training episodes"),
    param("step_size", "0.05", "flow SGD step"),
    param("exploration", "0.25", "uniform mixing while training the flow"),
    param("exact", "false", "solve the flow exactly instead of training"),
    param("theta_max", "4", "largest decay rate on the fitting grid"),
    param("theta_step", "0.05", "fitting grid spacing"),
    param("fit_rollouts", "2000", "policy rollouts for fitting"),
    param("curve_block", "500", "episodes per residual-curve entry"),
    param("eval_rollouts", "200", "rollouts for the flow residual"),
    param("every", "1", "write one curve row per this many draws"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct DiversityConfig {
    pub runs: usize,
    /// Draw budget; `None` uses the number of explanations.
    pub draws: Option<usize>,
    pub thetas: Vec<f64>,
    /// Formula and settings for the learned rate, if wanted.
    pub learned: Option<(CnfFormula, LearnThetaConfig)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyCurve {
    pub name: String,
    pub theta: Option<f64>,
    /// Mean diversity after `d + 1` draws.
    pub mean: Vec<f64>,
}

impl StrategyCurve {
    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiversityReport {
    pub explanations: usize,
    pub draws: usize,
    pub curves: Vec<StrategyCurve>,
    pub learned_theta: Option<f64>,
    pub flow_residual: Option<f64>,
}

impl DiversityReport {
    pub fn curve(&self, name: &str) -> Option<&StrategyCurve> {
        self.curves.iter().find(|c| c.name == name)
    }

    /// Final mean diversity divided by the number of explanations.
    pub fn normalized(&self, name: &str) -> Option<f64> {
        self.curve(name).map(|c| c.final_mean() / self.explanations as f64)
    }
}

fn cumulative(found_at: &[usize], draws: usize) -> Vec<usize> {
    let mut curve = vec![0usize; draws];
    for &d in found_at {
        if (1..=draws).contains(&d) {
            curve[d - 1] += 1;
        }
    }
    for i in 1..draws {
        curve[i] += curve[i - 1];
    }
    curve
}

fn mean_curve(runs: Vec<Vec<usize>>, draws: usize) -> Vec<f64> {
    let mut total = vec![0.0; draws];
    for run in &runs {
        for (t, &v) in total.iter_mut().zip(run) {
            *t += v as f64;
        }
    }
    total.iter().map(|t| t / runs.len().max(1) as f64).collect()
}

fn decay_curve(formula: &CnfFormula, theta: f64, runs: usize, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let per_run: Result<Vec<Vec<usize>>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let set = explain::sample_set(
                formula,
                StrategyKind::Decay { theta },
                ConflictPolicy::default_for(draws),
                draws,
                rng::derive(seed, r as u64),
                OnFailure::FailFast,
            )?;
            Ok(cumulative(set.found_at(), draws))
        })
        .collect();
    Ok(mean_curve(per_run?, draws))
}

/// Independent uniform draws from the full explanation set.
fn uniform_curve(explanations: usize, runs: usize, draws: usize, seed: u64) -> Vec<f64> {
    let per_run: Vec<Vec<usize>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(seed, r as u64, 5);
            let mut seen = vec![false; explanations];
            let mut count = 0;
            (0..draws)
                .map(|_| {
                    let i = g.random_range(0..explanations);
                    if !seen[i] {
                        seen[i] = true;
                        count += 1;
                    }
                    count
                })
                .collect()
        })
        .collect();
    mean_curve(per_run, draws)
}

/// Runs the benchmark inside the current rayon pool; runs are reduced in
/// index order, so results do not depend on the worker count.
pub fn run_bench(formula: &CnfFormula, cfg: &DiversityConfig, seed: u64) -> Result<DiversityReport> {
    let explanations = oracle::enumerate_explanations(formula)?.count as usize;
    if explanations == 0 {
        bail!("formula has no explanations");
    }
    let draws = cfg.draws.unwrap_or(explanations);
    let mut curves = Vec::new();
    let (mut learned_theta, mut flow_residual) = (None, None);
    let mut rates: Vec<(String, f64)> = cfg.thetas.iter().map(|&t| (format!("theta={t}"), t)).collect();
    if let Some((proxy, lcfg)) = &cfg.learned {
        let learned = learn_theta(proxy, lcfg, rng::derive(seed, 0x1ea7))?;
        log::info!("learned theta {} (flow residual {:.3e})", learned.fit.theta, learned.residual);
        learned_theta = Some(learned.fit.theta);
        flow_residual = Some(learned.residual);
        rates.push(("learned".to_string(), learned.fit.theta));
    }
    for (k, (name, theta)) in rates.into_iter().enumerate() {
        let mean = decay_curve(formula, theta, cfg.runs, draws, rng::derive(seed, k as u64))?;
        curves.push(StrategyCurve {
            name,
            theta: Some(theta),
            mean,
        });
    }
    curves.push(StrategyCurve {
        name: "uniform".to_string(),
        theta: None,
        mean: uniform_curve(explanations, cfg.runs, draws, rng::derive(seed, 0x0f0f)),
    });
    curves.push(StrategyCurve {
        name: "max".to_string(),
        theta: None,
        mean: (1..=draws).map(|d| d.min(explanations) as f64).collect(),
    });
    Ok(DiversityReport {
        explanations,
        draws,
        curves,
        learned_theta,
        flow_residual,
    })
}

pub fn run(ctx: &Context, params: &Params) -> Result<Outcome> {
    let formula = source::load_formula(params)?;
    let draws: usize = params.get("draws")?;
    let runs: usize = params.get("runs")?;
    if runs == 0 {
        return Err(params.bad("runs", "must be positive").into());
    }
    let every: usize = params.get("every")?;
    if every == 0 {
        return Err(params.bad("every", "must be positive").into());
    }
    let learned = if params.get::<bool>("learned")? {
        let proxy = exal_core::tasks::gen_branch(
            params.get("proxy_depth")?,
            params.get("proxy_branching")?,
            params.get("formula_seed")?,
        )?;
        Some((proxy, LearnThetaConfig::from_params(params)?))
    } else {
        None
    };
    let cfg = DiversityConfig {
        runs,
        draws: (draws > 0).then_some(draws),
        thetas: params.get_list("thetas")?,
        learned,
    };
    let report = ctx.install(|| run_bench(&formula, &cfg, ctx.seed))??;
    let mut table = CsvTable::create(
        ctx.path("diversity.csv"),
        "diversity-bench",
        &["strategy", "theta", "draws", "mean_diversity", "normalized"],
    )?;
    for c in &report.curves {
        for (d, &m) in c.mean.iter().enumerate() {
            if (d + 1) % every == 0 || d + 1 == report.draws {
                let theta = c.theta.map_or(String::new(), crate::output::fmt_f64);
                table.write(row![c.name.as_str(), theta, d + 1, m, m / report.explanations as f64])?;
            }
        }
    }
    table.finish()?;
    let finals: serde_json::Map<String, serde_json::Value> = report
        .curves
        .iter()
        .map(|c| (c.name.clone(), json_f64(c.final_mean() / report.explanations as f64)))
        .collect();
    let summary = json!({
        "command": "diversity-bench",
        "seed": ctx.seed,
        "params": params.values(),
        "explanations": report.explanations,
        "draws": report.draws,
        "learned_theta": report.learned_theta.map(json_f64),
        "flow_residual": report.flow_residual.map(json_f64),
        "final_normalized": finals,
    });
    write_json(ctx.path("summary.json"), &summary)?;
    let line = report
        .curves
        .iter()
        .map(|c| format!("{} {:.4}", c.name, c.final_mean() / report.explanations as f64))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Outcome::new(format!("diversity-bench after {} draws: {line}", report.draws), summary))
}
