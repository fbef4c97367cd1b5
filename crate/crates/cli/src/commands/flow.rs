//! `flow-train`: tabular flow matching on the explanation MDP and the decay
//! rate closest to the trained policy.

use anyhow::Result;
use exal_core::formula::CnfFormula;
use exal_core::mdp::{self, FlowTrainConfig, ThetaFit};
use exal_core::oracle;
use serde_json::json;

use super::{Context, Outcome};
use crate::config::{param, Param, Params};
use crate::output::{json_f64, write_json, CsvTable};
use crate::{formula_schema, row, source};

pub const SCHEMA: &[Param] = formula_schema!["branch", "1", "2";
    param("horizon", "2", "EXPLAIN runs per episode"),
    param("episodes", "20000", "training episodes"),
    param("step_size", "0.05", "SGD step on the log imbalance"),
    param("exploration", "0.25", "uniform mixing while collecting episodes"),
    param("curve_block", "500", "episodes per residual-curve entry"),
    param("eval_rollouts", "200", "rollouts for the final residual"),
    param("exact", "false", "solve the flow equation exactly instead of training"),
    param("theta_max", "4", "largest decay rate on the fitting grid"),
    param("theta_step", "0.05", "fitting grid spacing"),
    param("fit_rollouts", "2000", "policy rollouts used to fit the decay rate"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct LearnThetaConfig {
    pub horizon: usize,
    pub episodes: usize,
    pub step_size: f64,
    pub exploration: f64,
    pub curve_block: usize,
    pub eval_rollouts: usize,
    pub exact: bool,
    pub theta_max: f64,
    pub theta_step: f64,
    pub fit_rollouts: usize,
}

impl Default for LearnThetaConfig {
    fn default() -> Self {
        LearnThetaConfig {
            horizon: 2,
            episodes: 20000,
            step_size: 0.05,
            exploration: 0.25,
            curve_block: 500,
            eval_rollouts: 200,
            exact: false,
            theta_max: 4.0,
            theta_step: 0.05,
            fit_rollouts: 2000,
        }
    }
}

impl LearnThetaConfig {
    pub fn from_params(params: &Params) -> Result<Self> {
        let cfg = LearnThetaConfig {
            horizon: params.get("horizon")?,
            episodes: params.get("episodes")?,
            step_size: params.get("step_size")?,
            exploration: params.get("exploration")?,
            curve_block: params.get("curve_block")?,
            eval_rollouts: params.get("eval_rollouts")?,
            exact: params.get("exact")?,
            theta_max: params.get("theta_max")?,
            theta_step: params.get("theta_step")?,
            fit_rollouts: params.get("fit_rollouts")?,
        };
        if !(cfg.theta_step > 0.0 && cfg.theta_max >= 0.0) {
            return Err(params.bad("theta_step", "grid needs a positive step and non-negative maximum").into());
        }
        if !(0.0..1.0).contains(&cfg.exploration) {
            return Err(params.bad("exploration", "must be in [0, 1)").into());
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> Vec<f64> {
        let steps = (self.theta_max / self.theta_step).round() as usize;
        (0..=steps).map(|i| i as f64 * self.theta_step).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnedTheta {
    pub fit: ThetaFit,
    /// Per-trajectory residual of the flow used for fitting.
    pub residual: f64,
    pub residual_curve: Vec<f64>,
}

/// Flow on `formula`, then the decay rate closest to its policy.
pub fn learn_theta(formula: &CnfFormula, cfg: &LearnThetaConfig, seed: u64) -> Result<LearnedTheta> {
    let n = formula.num_vars();
    let grid = cfg.grid();
    if cfg.exact {
        let solved = oracle::exact_flow(formula, cfg.horizon)?;
        let policy = mdp::policy_from_flow(&solved.table);
        let eval = mdp::rollouts(&policy, n, cfg.horizon, cfg.eval_rollouts, seed);
        let residual = mdp::flow_residual(&solved.table, &eval) / eval.len().max(1) as f64;
        let fit = mdp::fit_theta(&policy, n, cfg.horizon, &grid, cfg.fit_rollouts, seed)?;
        return Ok(LearnedTheta {
            fit,
            residual,
            residual_curve: Vec::new(),
        });
    }
    let train = FlowTrainConfig {
        horizon: cfg.horizon,
        episodes: cfg.episodes,
        step_size: cfg.step_size,
        exploration: cfg.exploration,
        seed,
        curve_block: cfg.curve_block,
        eval_rollouts: cfg.eval_rollouts,
    };
    let (table, report) = mdp::train_flow(formula, &train)?;
    let policy = mdp::policy_from_flow(&table);
    let fit = mdp::fit_theta(&policy, n, cfg.horizon, &grid, cfg.fit_rollouts, seed)?;
    Ok(LearnedTheta {
        fit,
        residual: report.residual,
        residual_curve: report.residual_curve,
    })
}

pub fn run(ctx: &Context, params: &Params) -> Result<Outcome> {
    let formula = source::load_formula(params)?;
    let cfg = LearnThetaConfig::from_params(params)?;
    let learned = learn_theta(&formula, &cfg, ctx.seed)?;
    let mut curve = CsvTable::create(ctx.path("residual_curve.csv"), "flow-train-residual", &["block", "episodes", "residual"])?;
    for (i, r) in learned.residual_curve.iter().enumerate() {
        let episodes = ((i + 1) * cfg.curve_block.max(1)).min(cfg.episodes);
        curve.write(row![i, episodes, *r])?;
    }
    curve.finish()?;
    let mut kl = CsvTable::create(ctx.path("theta_fit.csv"), "flow-train-theta", &["theta", "mean_kl"])?;
    for &(theta, v) in &learned.fit.kl {
        kl.write(row![theta, v])?;
    }
    kl.finish()?;
    let summary = json!({
        "command": "flow-train",
        "seed": ctx.seed,
        "params": params.values(),
        "num_vars": formula.num_vars(),
        "residual": json_f64(learned.residual),
        "theta": json_f64(learned.fit.theta),
        "fit_states": learned.fit.states,
    });
    write_json(ctx.path("summary.json"), &summary)?;
    Ok(Outcome::new(
        format!("flow-train: residual {:.3e}, fitted theta {}", learned.residual, learned.fit.theta),
        summary,
    ))
}
