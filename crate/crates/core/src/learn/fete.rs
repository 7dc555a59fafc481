use std::collections::HashMap;

use serde::Serialize;

use super::mlp::MlpStrategy;
use super::train::{train_known_model, TrainerConfig};
use crate::belief::{BeliefTracker, ModelClass, ModelId};
use crate::env::{rollout, RolloutContext, SteeringObjective, SteeringStrategy};
use crate::error::{Result, SteerError};
use crate::game::{JointPolicy, MarkovGame};
use crate::rng::derive_seed;

/// Explore for `explore_horizon` steps, estimate the model, then exploit it for the rest.
#[derive(Clone, Debug)]
pub struct FeteSetup<'a> {
    pub game: &'a MarkovGame<f64>,
    pub class: &'a ModelClass,
    pub objective: &'a SteeringObjective,
    pub horizon: usize,
    pub explore_horizon: usize,
    pub start: JointPolicy<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FeteOutcome {
    pub truth: ModelId,
    pub estimate: ModelId,
    pub identified: bool,
    pub gap: f64,
    pub cost: f64,
    pub explore_cost: f64,
    pub exploit_cost: f64,
    /// `beta * goal(pi_{T+1}) - C`.
    pub objective: f64,
}

/// Trained exploitation strategies, one per estimated model.
pub type ExploitCache = HashMap<ModelId, MlpStrategy>;

/// One episode against the true model `truth`. Exploitation strategies are trained on
/// demand with `exploit_cfg` for `T - T_explore` steps and stored in `cache`.
pub fn run_fete(
    setup: &FeteSetup<'_>,
    truth: &ModelId,
    explorer: &dyn SteeringStrategy<f64>,
    exploit_cfg: &TrainerConfig,
    cache: &mut ExploitCache,
    seed: u64,
) -> Result<FeteOutcome> {
    let FeteSetup { game, class, objective, horizon, explore_horizon, .. } = *setup;
    if explore_horizon > horizon {
        return Err(SteerError::InvalidArgument(format!(
            "exploration horizon {explore_horizon} exceeds total horizon {horizon}"
        )));
    }
    let ev = objective.prepare(game)?;
    let model = class.model(truth)?;
    let mut tracker = BeliefTracker::new(class.clone(), game).with_truth(truth.clone())?;
    let ctx = RolloutContext { game, model: &model, evaluator: &ev, horizon: explore_horizon };
    let explore = rollout(&ctx, explorer, &setup.start, derive_seed(seed, &[0]), Some(&mut tracker))?;
    let estimate = tracker.mle();

    if !cache.contains_key(&estimate) {
        let est_model = class.model(&estimate)?;
        let trained = train_known_model(game, &est_model, objective, horizon - explore_horizon, exploit_cfg)?;
        cache.insert(estimate.clone(), trained.strategy);
    }
    let exploit = &cache[&estimate];
    let ctx = RolloutContext { horizon: horizon - explore_horizon, ..ctx };
    let tail = rollout(&ctx, exploit, explore.terminal(), derive_seed(seed, &[1]), None)?;

    let explore_cost = explore.steering_cost();
    let exploit_cost = tail.steering_cost();
    let cost = explore_cost + exploit_cost;
    let terminal_goal = *tail.goals.last().expect("terminal goal");
    Ok(FeteOutcome {
        identified: &estimate == truth,
        truth: truth.clone(),
        estimate,
        gap: tail.steering_gap(),
        cost,
        explore_cost,
        exploit_cost,
        objective: objective.beta * terminal_goal - cost,
    })
}
