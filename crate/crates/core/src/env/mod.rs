//! The steering process: strategies, rollouts, goals, costs and evaluation.

mod metrics;
mod objective;
mod reward;
mod rollout;
mod strategy;

pub use metrics::{
    dominators, evaluate_objective, init_grid, pareto_check, Evaluation, ModelStats, ParetoReport, Summary,
};
pub use objective::{GoalEvaluator, GoalKind, SteeringObjective};
pub use reward::SteeringReward;
pub use rollout::{rollout, RolloutContext, SteeringOutcome, SteeringTrajectory};
pub use strategy::{
    random_interior_policy, ConstantStrategy, ObservationKind, SteeringStrategy, StepView, UniformRandomStrategy,
    ZeroStrategy,
};

#[cfg(test)]
mod tests;
