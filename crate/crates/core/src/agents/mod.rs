//! Decision policies: tabular Q-learning, the SGD + function-approximation
//! agent, and the greedy / fixed / random baselines.

pub mod baselines;
pub mod fa;
pub mod qlearning;
