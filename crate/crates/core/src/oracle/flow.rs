use std::collections::{HashMap, HashSet};

use super::OracleError;
use crate::formula::CnfFormula;
use crate::mdp::{predecessors, progress, reward, transitions, FlowTable, MdpState};

/// Largest instance solved by exhaustive backward induction.
pub const FLOW_GUARD_VARS: usize = 4;
pub const FLOW_GUARD_RUNS: usize = 3;

/// Exact flows over the whole reachable state space.
#[derive(Clone, Debug)]
pub struct ExactFlow {
    pub table: FlowTable,
    /// Total flow through every reachable state, `R(s) + outflow(s)`.
    pub state_flow: HashMap<MdpState, f64>,
    /// Reachable states sorted by decreasing progress.
    pub states: Vec<MdpState>,
}

impl ExactFlow {
    /// Partition function: flow out of the initial state.
    pub fn total(&self) -> f64 {
        self.state_flow[&MdpState::initial(self.table.num_vars())]
    }

    pub fn terminals(&self) -> impl Iterator<Item = &MdpState> {
        let horizon = self.table.horizon();
        self.states.iter().filter(move |s| s.is_terminal(horizon))
    }
}

/// Solves the flow equation by backward induction with a uniform backward
/// policy: the flow through a state is split evenly among its parents.
pub fn exact_flow(formula: &CnfFormula, horizon: usize) -> Result<ExactFlow, OracleError> {
    let n = formula.num_vars();
    if n > FLOW_GUARD_VARS || horizon > FLOW_GUARD_RUNS {
        return Err(OracleError::GuardExceeded {
            n: n.max(horizon),
            limit: FLOW_GUARD_VARS,
        });
    }
    let init = MdpState::initial(n);
    let mut seen: HashSet<MdpState> = HashSet::from([init.clone()]);
    let mut frontier = vec![init];
    while let Some(s) = frontier.pop() {
        if s.is_terminal(horizon) {
            continue;
        }
        for c in transitions(&s, horizon).expect("non-terminal") {
            if seen.insert(c.clone()) {
                frontier.push(c);
            }
        }
    }
    let mut states: Vec<MdpState> = seen.into_iter().collect();
    states.sort_by(|a, b| progress(b, n).cmp(&progress(a, n)).then(a.cmp(b)));

    let mut flow: HashMap<MdpState, f64> = HashMap::new();
    let mut table = FlowTable::new(formula, horizon);
    for s in &states {
        let mut v = reward(formula, s, horizon);
        if !s.is_terminal(horizon) {
            for c in transitions(s, horizon).expect("non-terminal") {
                let e = flow[&c] / predecessors(&c).len() as f64;
                table.set_log_flow(s, &c, e.ln());
                v += e;
            }
        }
        flow.insert(s.clone(), v);
    }
    Ok(ExactFlow {
        table,
        state_flow: flow,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Lit;
    use crate::mdp::{flow_residual, policy_from_flow, rollouts};

    #[test]
    fn exact_solution_balances() {
        let f = CnfFormula::new(2, vec![vec![Lit::pos(1), Lit::pos(2)]]).unwrap();
        let ex = exact_flow(&f, 2).unwrap();
        for s in &ex.states {
            if s.is_initial() || s.is_terminal(2) {
                continue;
            }
            let inflow: f64 = predecessors(s).iter().map(|p| ex.table.flow(p, s)).sum();
            assert!((inflow - ex.state_flow[s]).abs() < 1e-10 * ex.state_flow[s].max(1.0));
        }
        let trajs = rollouts(&policy_from_flow(&ex.table), 2, 2, 200, 4);
        assert!(flow_residual(&ex.table, &trajs) < 1e-6);
    }
}
