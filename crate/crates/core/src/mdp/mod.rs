//! Collecting explanations as a sequential decision process.
//!
//! A state `(μ, t, Ψ)` holds the partial assignment under construction, the
//! number of finished runs and the complete assignments collected so far.
//! A partial `μ` is extended by one variable; a complete `μ` is added to `Ψ`
//! and the next run starts from the empty assignment. After `T` runs the
//! episode ends with reward `δ(Ψ)`, the number of distinct explanations.
//!
//! Flows live in a table indexed by edges and are trained by matching
//! inflow against reward plus outflow in log space. The resulting policy,
//! or a decay strategy fitted to it, samples diverse explanation sets.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::explain::{candidates, Decay, Extension};
use crate::formula::{Assignment, CnfFormula, Value, World};
use crate::rng::{self, StreamRng};

/// Lower bound on any flow, as a log.
pub const LOG_FLOW_FLOOR: f64 = -30.0;

/// Largest formula and horizon accepted by tabular training.
pub const MAX_TABULAR_VARS: usize = 8;
pub const MAX_TABULAR_RUNS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("state is terminal")]
    Terminal,
    #[error(
        "{vars} variables and {runs} runs exceed the tabular limit of {max_vars} and {max_runs}; \
         fit a decay rate on a smaller formula instead"
    )]
    TooLarge {
        vars: usize,
        runs: usize,
        max_vars: usize,
        max_runs: usize,
    },
    #[error("empty candidate grid")]
    EmptyGrid,
    #[error("horizon must be positive")]
    ZeroHorizon,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MdpState {
    pub mu: Assignment,
    pub t: usize,
    /// Sorted and deduplicated complete assignments over all variables.
    pub psi: Vec<World>,
}

impl MdpState {
    pub fn initial(n: usize) -> Self {
        MdpState {
            mu: Assignment::unassigned(n),
            t: 0,
            psi: Vec::new(),
        }
    }

    pub fn is_terminal(&self, horizon: usize) -> bool {
        self.t >= horizon
    }

    pub fn is_initial(&self) -> bool {
        self.t == 0 && self.mu.num_assigned() == 0
    }
}

/// `(n + 1)·t + #assigned(μ)`.
pub fn progress(state: &MdpState, n: usize) -> usize {
    (n + 1) * state.t + state.mu.num_assigned()
}

fn insert_sorted(psi: &[World], f: World) -> Vec<World> {
    let mut out = psi.to_vec();
    if let Err(pos) = out.binary_search(&f) {
        out.insert(pos, f);
    }
    out
}

/// Successors of a non-terminal state. Partial assignments branch over all
/// one-variable extensions in the order of [`candidates`].
pub fn transitions(state: &MdpState, horizon: usize) -> Result<Vec<MdpState>, MdpError> {
    if state.is_terminal(horizon) {
        return Err(MdpError::Terminal);
    }
    if let Some(bits) = state.mu.to_bools() {
        return Ok(vec![MdpState {
            mu: Assignment::unassigned(state.mu.len()),
            t: state.t + 1,
            psi: insert_sorted(&state.psi, World(bits)),
        }]);
    }
    Ok(candidates(&state.mu)
        .into_iter()
        .map(|e| MdpState {
            mu: e.apply(&state.mu),
            t: state.t,
            psi: state.psi.clone(),
        })
        .collect())
}

fn reachable_psi(len: usize, t: usize) -> bool {
    if t == 0 {
        len == 0
    } else {
        (1..=t).contains(&len)
    }
}

/// Every state with a transition into `state`.
pub fn predecessors(state: &MdpState) -> Vec<MdpState> {
    let n = state.mu.len();
    if state.mu.num_assigned() > 0 {
        return (1..=n as u32)
            .filter(|&v| state.mu.get(v).is_assigned())
            .map(|v| {
                let mut mu = state.mu.clone();
                mu.set(v, Value::Unassigned);
                MdpState {
                    mu,
                    t: state.t,
                    psi: state.psi.clone(),
                }
            })
            .collect();
    }
    if state.t == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, f) in state.psi.iter().enumerate() {
        let mut without = state.psi.clone();
        without.remove(i);
        for prev in [without, state.psi.clone()] {
            if reachable_psi(prev.len(), state.t - 1) {
                out.push(MdpState {
                    mu: Assignment::from_bools(f.bits()),
                    t: state.t - 1,
                    psi: prev,
                });
            }
        }
    }
    out
}

/// `δ(Ψ)`: distinct projections of collected assignments that are models.
pub fn delta(formula: &CnfFormula, psi: &[World]) -> usize {
    let mut seen: Vec<World> = psi
        .iter()
        .filter(|f| formula.evaluate_bits(f.bits()))
        .map(|f| {
            formula
                .project(&Assignment::from_bools(f.bits()))
                .expect("complete assignment")
        })
        .collect();
    seen.sort();
    seen.dedup();
    seen.len()
}

pub fn reward(formula: &CnfFormula, state: &MdpState, horizon: usize) -> f64 {
    if state.is_terminal(horizon) && state.mu.num_assigned() == 0 {
        delta(formula, &state.psi) as f64
    } else {
        0.0
    }
}

fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    crate::agree::log_sum_exp(&xs)
}

/// Edge flows of the MDP for one formula and horizon. Edges never written
/// carry the initial flow.
#[derive(Clone, Debug)]
pub struct FlowTable {
    formula: CnfFormula,
    horizon: usize,
    initial_log_flow: f64,
    ids: HashMap<MdpState, usize>,
    log_flows: HashMap<(usize, usize), f64>,
}

impl FlowTable {
    /// All flows start at one.
    pub fn new(formula: &CnfFormula, horizon: usize) -> Self {
        FlowTable {
            formula: formula.clone(),
            horizon,
            initial_log_flow: 0.0,
            ids: HashMap::new(),
            log_flows: HashMap::new(),
        }
    }

    pub fn formula(&self) -> &CnfFormula {
        &self.formula
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_vars(&self) -> usize {
        self.formula.num_vars()
    }

    pub fn num_edges(&self) -> usize {
        self.log_flows.len()
    }

    pub fn knows(&self, s: &MdpState) -> bool {
        self.ids.contains_key(s)
    }

    fn intern(&mut self, s: &MdpState) -> usize {
        let next = self.ids.len();
        *self.ids.entry(s.clone()).or_insert(next)
    }

    pub fn log_flow(&self, s: &MdpState, next: &MdpState) -> f64 {
        match (self.ids.get(s), self.ids.get(next)) {
            (Some(&a), Some(&b)) => self.log_flows.get(&(a, b)).copied().unwrap_or(self.initial_log_flow),
            _ => self.initial_log_flow,
        }
    }

    pub fn flow(&self, s: &MdpState, next: &MdpState) -> f64 {
        self.log_flow(s, next).exp()
    }

    pub fn set_log_flow(&mut self, s: &MdpState, next: &MdpState, value: f64) {
        let a = self.intern(s);
        let b = self.intern(next);
        self.log_flows.insert((a, b), value.max(LOG_FLOW_FLOOR));
    }

    pub fn reward_of(&self, s: &MdpState) -> f64 {
        reward(&self.formula, s, self.horizon)
    }

    pub fn log_inflow(&self, s: &MdpState) -> f64 {
        log_sum_exp(predecessors(s).iter().map(|p| self.log_flow(p, s)))
    }

    /// `log(R(s) + Σ outflow)`.
    pub fn log_reward_plus_outflow(&self, s: &MdpState) -> f64 {
        let r = self.reward_of(s);
        let mut terms = vec![if r > 0.0 { r.ln() } else { f64::NEG_INFINITY }];
        if !s.is_terminal(self.horizon) {
            let succ = transitions(s, self.horizon).expect("non-terminal");
            terms.extend(succ.iter().map(|c| self.log_flow(s, c)));
        }
        crate::agree::log_sum_exp(&terms)
    }

    /// Squared log imbalance at one state, with both sides floored.
    pub fn imbalance(&self, s: &MdpState) -> f64 {
        let d = self.log_inflow(s).max(LOG_FLOW_FLOOR) - self.log_reward_plus_outflow(s).max(LOG_FLOW_FLOOR);
        d * d
    }
}

/// A sequence of states from the initial state to a terminal.
pub type Trajectory = Vec<MdpState>;

/// `Σ [log(inflow / (R + outflow))]²` over the non-initial states of the
/// batch, counted once per occurrence.
pub fn flow_residual(table: &FlowTable, trajectories: &[Trajectory]) -> f64 {
    trajectories
        .iter()
        .flatten()
        .filter(|s| !s.is_initial())
        .map(|s| table.imbalance(s))
        .sum()
}

/// A stochastic policy over MDP transitions.
pub trait MdpPolicy {
    /// Successors with their probabilities, in [`transitions`] order.
    fn distribution(&self, state: &MdpState, horizon: usize) -> Vec<(MdpState, f64)>;
}

/// Every successor equally likely.
pub struct UniformPolicy;

impl MdpPolicy for UniformPolicy {
    fn distribution(&self, state: &MdpState, horizon: usize) -> Vec<(MdpState, f64)> {
        let succ = transitions(state, horizon).unwrap_or_default();
        let p = 1.0 / succ.len().max(1) as f64;
        succ.into_iter().map(|s| (s, p)).collect()
    }
}

/// Moves with probability proportional to the outgoing flows.
pub struct FlowPolicy<'a> {
    table: &'a FlowTable,
}

pub fn policy_from_flow(table: &FlowTable) -> FlowPolicy<'_> {
    FlowPolicy { table }
}

impl FlowPolicy<'_> {
    pub fn table(&self) -> &FlowTable {
        self.table
    }
}

impl MdpPolicy for FlowPolicy<'_> {
    fn distribution(&self, state: &MdpState, horizon: usize) -> Vec<(MdpState, f64)> {
        let succ = transitions(state, horizon).unwrap_or_default();
        if succ.len() == 1 {
            return succ.into_iter().map(|s| (s, 1.0)).collect();
        }
        if !self.table.knows(state) && self.table.num_edges() > 0 {
            log::debug!("flow queried at an unseen state; using initial flows");
        }
        let lf: Vec<f64> = succ.iter().map(|c| self.table.log_flow(state, c)).collect();
        let probs = crate::explain::normalize_log_weights(&lf);
        succ.into_iter().zip(probs).collect()
    }
}

/// Mixes a policy with the uniform one: `(1 - ε)·π + ε·uniform`.
pub struct Explore<'a, P: MdpPolicy> {
    pub policy: &'a P,
    pub epsilon: f64,
}

impl<P: MdpPolicy> MdpPolicy for Explore<'_, P> {
    fn distribution(&self, state: &MdpState, horizon: usize) -> Vec<(MdpState, f64)> {
        let d = self.policy.distribution(state, horizon);
        let u = 1.0 / d.len().max(1) as f64;
        d.into_iter()
            .map(|(s, p)| (s, (1.0 - self.epsilon) * p + self.epsilon * u))
            .collect()
    }
}

fn pick<R: Rng + ?Sized>(probs: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let mut r = rng.random::<f64>();
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        last = i;
        if r < p {
            return i;
        }
        r -= p;
    }
    last
}

/// Follows `policy` from the initial state to a terminal.
pub fn rollout<P: MdpPolicy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    n: usize,
    horizon: usize,
    rng: &mut R,
) -> Trajectory {
    let mut s = MdpState::initial(n);
    let mut out = vec![s.clone()];
    while !s.is_terminal(horizon) {
        let mut d = policy.distribution(&s, horizon);
        let i = pick(d.iter().map(|x| x.1), rng);
        s = d.swap_remove(i).0;
        out.push(s.clone());
    }
    out
}

/// `count` rollouts, rollout `i` drawing from stream `i` of `seed`.
pub fn rollouts<P: MdpPolicy + ?Sized>(policy: &P, n: usize, horizon: usize, count: usize, seed: u64) -> Vec<Trajectory> {
    (0..count)
        .map(|i| rollout(policy, n, horizon, &mut rng::stream(seed, i as u64, 2)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowFitReport {
    /// Residual over a fresh batch of on-policy rollouts, averaged per
    /// trajectory.
    pub residual: f64,
    pub episodes: usize,
    pub matched_theta: Option<f64>,
    /// Mean training residual per block of episodes.
    pub residual_curve: Vec<f64>,
    /// Every reward is zero.
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowTrainConfig {
    pub horizon: usize,
    pub episodes: usize,
    pub step_size: f64,
    /// Probability mass given to uniform moves while collecting episodes.
    pub exploration: f64,
    pub seed: u64,
    /// Episodes per entry of the residual curve.
    pub curve_block: usize,
    pub eval_rollouts: usize,
}

impl Default for FlowTrainConfig {
    fn default() -> Self {
        FlowTrainConfig {
            horizon: 2,
            episodes: 1000,
            step_size: 0.05,
            exploration: 0.25,
            seed: 0,
            curve_block: 100,
            eval_rollouts: 200,
        }
    }
}

/// One gradient step on the squared log imbalance of every non-initial
/// state of a trajectory. Returns the residual before the step.
fn flow_matching_step(table: &mut FlowTable, traj: &Trajectory, step: f64) -> f64 {
    let mut updates: HashMap<(MdpState, MdpState), f64> = HashMap::new();
    let mut residual = 0.0;
    let horizon = table.horizon;
    for s in traj.iter().filter(|s| !s.is_initial()) {
        let lin = table.log_inflow(s);
        let lout = table.log_reward_plus_outflow(s);
        let d = lin.max(LOG_FLOW_FLOOR) - lout.max(LOG_FLOW_FLOOR);
        residual += d * d;
        if d == 0.0 {
            continue;
        }
        if lin > LOG_FLOW_FLOOR {
            for p in predecessors(s) {
                let g = 2.0 * d * (table.log_flow(&p, s) - lin).exp();
                *updates.entry((p, s.clone())).or_insert(0.0) += g;
            }
        }
        if lout > LOG_FLOW_FLOOR && !s.is_terminal(horizon) {
            for c in transitions(s, horizon).expect("non-terminal") {
                let g = -2.0 * d * (table.log_flow(s, &c) - lout).exp();
                *updates.entry((s.clone(), c)).or_insert(0.0) += g;
            }
        }
    }
    let mut updates: Vec<_> = updates.into_iter().collect();
    updates.sort_by(|a, b| a.0.cmp(&b.0));
    for ((a, b), g) in updates {
        let v = table.log_flow(&a, &b) - step * g;
        table.set_log_flow(&a, &b, v);
    }
    residual
}

/// Tabular flow matching by stochastic descent on the log imbalance along
/// sampled episodes.
pub fn train_flow(formula: &CnfFormula, config: &FlowTrainConfig) -> Result<(FlowTable, FlowFitReport), MdpError> {
    let n = formula.num_vars();
    if config.horizon == 0 {
        return Err(MdpError::ZeroHorizon);
    }
    if n > MAX_TABULAR_VARS || config.horizon > MAX_TABULAR_RUNS {
        return Err(MdpError::TooLarge {
            vars: n,
            runs: config.horizon,
            max_vars: MAX_TABULAR_VARS,
            max_runs: MAX_TABULAR_RUNS,
        });
    }
    let mut table = FlowTable::new(formula, config.horizon);
    let degenerate = !formula.has_model_extending(&Assignment::unassigned(n));
    if degenerate {
        log::warn!("formula has no explanation; every reward is zero");
    }
    let mut curve = Vec::new();
    let mut block = 0.0;
    for ep in 0..config.episodes {
        let mut r: StreamRng = rng::stream(config.seed, ep as u64, 3);
        let traj = {
            let fp = policy_from_flow(&table);
            let behavior = Explore {
                policy: &fp,
                epsilon: config.exploration,
            };
            rollout(&behavior, n, config.horizon, &mut r)
        };
        block += flow_matching_step(&mut table, &traj, config.step_size);
        if (ep + 1) % config.curve_block.max(1) == 0 || ep + 1 == config.episodes {
            let len = (ep % config.curve_block.max(1)) + 1;
            curve.push(block / len as f64);
            block = 0.0;
        }
    }
    let eval = rollouts(&policy_from_flow(&table), n, config.horizon, config.eval_rollouts, config.seed ^ 0xe7a1);
    let residual = flow_residual(&table, &eval) / eval.len().max(1) as f64;
    Ok((
        table,
        FlowFitReport {
            residual,
            episodes: config.episodes,
            matched_theta: None,
            residual_curve: curve,
            degenerate,
        },
    ))
}

/// Result of matching a decay strategy to a policy.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaFit {
    pub theta: f64,
    /// Mean `KL(policy | decay)` per grid entry.
    pub kl: Vec<(f64, f64)>,
    pub states: usize,
}

/// Decay rate on `grid` whose action distributions are closest to the
/// policy's, measured by the mean `KL(policy | decay)` over the partial
/// assignments visited by `count` rollouts of the policy. Decay counts
/// accumulate along each rollout. Ties go to the smaller rate.
pub fn fit_theta<P: MdpPolicy + ?Sized>(
    policy: &P,
    n: usize,
    horizon: usize,
    grid: &[f64],
    count: usize,
    seed: u64,
) -> Result<ThetaFit, MdpError> {
    if grid.is_empty() {
        return Err(MdpError::EmptyGrid);
    }
    let trajs = rollouts(policy, n, horizon, count, seed);
    fit_theta_on(policy, &trajs, horizon, grid)
}

/// [`fit_theta`] on given trajectories.
pub fn fit_theta_on<P: MdpPolicy + ?Sized>(
    policy: &P,
    trajectories: &[Trajectory],
    horizon: usize,
    grid: &[f64],
) -> Result<ThetaFit, MdpError> {
    if grid.is_empty() {
        return Err(MdpError::EmptyGrid);
    }
    let mut total = vec![0.0; grid.len()];
    let mut states = 0usize;
    for traj in trajectories {
        let mut counts = Decay::new(0.0);
        for pair in traj.windows(2) {
            let (s, next) = (&pair[0], &pair[1]);
            if s.mu.is_complete() {
                continue;
            }
            let dist = policy.distribution(s, horizon);
            let ns: Vec<f64> = dist.iter().map(|(c, _)| counts.count(&c.mu) as f64).collect();
            for (k, &theta) in grid.iter().enumerate() {
                let lw: Vec<f64> = ns.iter().map(|&c| -c * theta).collect();
                let q = crate::explain::normalize_log_weights(&lw);
                total[k] += dist
                    .iter()
                    .zip(&q)
                    .filter(|((_, p), _)| *p > 0.0)
                    .map(|((_, p), q)| p * (p.ln() - q.ln()))
                    .sum::<f64>();
            }
            states += 1;
            crate::explain::SamplingStrategy::observe(&mut counts, &next.mu);
        }
    }
    let denom = states.max(1) as f64;
    let kl: Vec<(f64, f64)> = grid.iter().zip(&total).map(|(&t, &v)| (t, v / denom)).collect();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| kl[a].1.total_cmp(&kl[b].1).then(grid[a].total_cmp(&grid[b])));
    // Differences below rounding noise count as ties.
    let best = kl[order[0]].1;
    let theta = order
        .iter()
        .filter(|&&i| kl[i].1 <= best + 1e-12)
        .map(|&i| grid[i])
        .fold(f64::INFINITY, f64::min);
    Ok(ThetaFit { theta, kl, states })
}

/// The extension that leads from `s` to `next` within a run.
pub fn extension_between(s: &MdpState, next: &MdpState) -> Option<Extension> {
    if s.t != next.t {
        return None;
    }
    s.mu.unassigned_vars()
        .find(|&v| next.mu.get(v).is_assigned())
        .map(|v| Extension {
            var: v,
            value: next.mu.get(v) == Value::True,
        })
}
