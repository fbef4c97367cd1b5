mod common;

use common::cnf;
use exal_core::formula::{CnfFormula, Lit};
use exal_core::mdp::{self, FlowTrainConfig, MdpPolicy, MdpState, UniformPolicy};
use exal_core::oracle::exact_flow;
use exal_core::rng;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rollouts_advance_one_step_at_a_time(n in 1usize..=5, horizon in 1usize..=3, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        for _ in 0..20 {
            let traj = mdp::rollout(&UniformPolicy, n, horizon, &mut r);
            prop_assert_eq!(traj.len(), (n + 1) * horizon + 1);
            for (i, s) in traj.iter().enumerate() {
                prop_assert_eq!(mdp::progress(s, n), i);
                prop_assert!(s.t <= horizon);
            }
            prop_assert!(traj.last().unwrap().is_terminal(horizon));
        }
    }

    #[test]
    fn exact_flow_balances_every_state(f in cnf(3), horizon in 1usize..=2) {
        let solved = exact_flow(&f, horizon).unwrap();
        let table = &solved.table;
        for s in &solved.states {
            let through = solved.state_flow[s];
            let rhs = table.reward_of(s) + if s.is_terminal(horizon) {
                0.0
            } else {
                mdp::transitions(s, horizon).unwrap().iter().map(|c| table.flow(s, c)).sum()
            };
            prop_assert!((through - rhs).abs() <= 1e-10 * through.max(1.0));
            if !s.is_initial() {
                let inflow: f64 = mdp::predecessors(s).iter().map(|p| table.flow(p, s)).sum();
                prop_assert!((inflow - through).abs() <= 1e-10 * through.max(1.0));
            }
        }
    }
}

#[test]
fn transition_counts() {
    let s = MdpState::initial(2);
    assert_eq!(mdp::transitions(&s, 2).unwrap().len(), 4);
    let half = mdp::transitions(&s, 2).unwrap().into_iter().find(|c| c.mu.num_assigned() == 1).unwrap();
    assert_eq!(mdp::transitions(&half, 2).unwrap().len(), 2);
    let done = mdp::transitions(&mdp::transitions(&half, 2).unwrap()[0], 2).unwrap();
    assert_eq!(done.len(), 1);
    assert_eq!((done[0].t, done[0].psi.len()), (1, 1));
    assert!(mdp::transitions(&MdpState { t: 2, ..MdpState::initial(2) }, 2).is_err());
}

#[test]
fn uniform_policy_fits_zero_rate() {
    let fit = mdp::fit_theta(&UniformPolicy, 3, 2, &[0.0, 0.5, 1.0, 2.0], 200, 0).unwrap();
    assert_eq!(fit.theta, 0.0);
    assert_eq!(mdp::fit_theta(&UniformPolicy, 3, 2, &[0.0], 10, 0).unwrap().theta, 0.0);
    assert!(mdp::fit_theta(&UniformPolicy, 3, 2, &[], 10, 0).is_err());
}

#[test]
fn symmetric_formula_gives_symmetric_first_moves() {
    // f1 ∨ f2 is symmetric under swapping the two variables.
    let f = CnfFormula::new(2, vec![vec![Lit::pos(1), Lit::pos(2)]]).unwrap();
    let solved = exact_flow(&f, 2).unwrap();
    let policy = mdp::policy_from_flow(&solved.table);
    let d = policy.distribution(&MdpState::initial(2), 2);
    let p = |var: u32, value: bool| {
        d.iter()
            .find(|(s, _)| s.mu.get(var) == exal_core::formula::Value::from_bool(value))
            .map(|x| x.1)
            .unwrap()
    };
    assert!((p(1, true) - p(2, true)).abs() < 1e-12);
    assert!((p(1, false) - p(2, false)).abs() < 1e-12);
    assert!(p(1, true) > p(1, false));
}

#[test]
fn unsatisfiable_formula_is_degenerate() {
    let f = CnfFormula::new(1, vec![vec![Lit::pos(1)], vec![Lit::neg(1)]]).unwrap();
    let cfg = FlowTrainConfig {
        episodes: 10,
        ..FlowTrainConfig::default()
    };
    let (_, report) = mdp::train_flow(&f, &cfg).unwrap();
    assert!(report.degenerate);
}

#[test]
fn trained_flow_prefers_diverse_terminals() {
    // x1 ∧ x2 over three variables: two explanations differing in x3.
    let f = CnfFormula::new(3, vec![vec![Lit::pos(1)], vec![Lit::pos(2)]]).unwrap();
    let cfg = FlowTrainConfig {
        episodes: 20_000,
        ..FlowTrainConfig::default()
    };
    let (table, _) = mdp::train_flow(&f, &cfg).unwrap();
    let policy = mdp::policy_from_flow(&table);
    let mut visits: std::collections::HashMap<MdpState, usize> = std::collections::HashMap::new();
    for traj in mdp::rollouts(&policy, 3, 2, 10_000, 1) {
        *visits.entry(traj.last().unwrap().clone()).or_default() += 1;
    }
    let mean_visits = |reward: f64| {
        let hits: Vec<usize> = visits.iter().filter(|(s, _)| mdp::reward(&f, s, 2) == reward).map(|(_, &v)| v).collect();
        hits.iter().sum::<usize>() as f64 / hits.len().max(1) as f64
    };
    let (one, two) = (mean_visits(1.0), mean_visits(2.0));
    assert!(two > 1.5 * one, "{two} visits per diverse terminal vs {one}");
}
