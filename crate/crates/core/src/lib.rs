//! Learning perception models from logical supervision by sampling
//! explanations of CNF formulas and reweighting them against the model.
//!
//! * [`formula`]: CNF formulas, ternary assignments, DIMACS, negation.
//! * [`explain`]: stochastic DPLL sampling of explanations.
//! * [`agree`]: optimal explanation weights, surrogate objective, bounds.
//! * [`learn`]: perception models, gradients and training loops.
//! * [`mdp`]: the explanation-collection MDP and tabular flow matching.
//! * [`oracle`]: brute-force ground truth for small instances.
//! * [`tasks`]: formula generators, MNIST addition and grid pathfinding.

pub mod agree;
pub mod explain;
pub mod formula;
pub mod learn;
pub mod mdp;
pub mod oracle;
pub mod rng;
pub mod tasks;

pub use agree::{BoundsEstimate, PerceptionOutput, WeightedExplanations};
pub use explain::{ConflictPolicy, ExplanationSet, StrategyKind};
pub use formula::{Assignment, CnfFormula, Lit, Value, World};
