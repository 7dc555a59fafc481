use serde::Serialize;

use super::{GoalEvaluator, SteeringReward, SteeringStrategy, StepView};
use crate::belief::BeliefTracker;
use crate::dynamics::{step_with_values, DynamicsModel};
use crate::error::{Result, SteerError};
use crate::game::{own_action_values, steering_returns, JointPolicy, MarkovGame, RewardSource};
use crate::rng::stream;
use crate::scalar::Scalar;

/// Fixed pieces of a steering episode.
#[derive(Clone, Copy, Debug)]
pub struct RolloutContext<'a, S> {
    pub game: &'a MarkovGame<S>,
    pub model: &'a DynamicsModel,
    pub evaluator: &'a GoalEvaluator<S>,
    pub horizon: usize,
}

/// One steering episode `pi_1, u_1, ..., u_T, pi_{T+1}`.
#[derive(Clone, Debug)]
pub struct SteeringTrajectory<S> {
    pub policies: Vec<JointPolicy<S>>,
    pub rewards: Vec<SteeringReward<S>>,
    /// `sum_n J^n_{|u_t}(pi_t)` for each step.
    pub costs: Vec<f64>,
    /// Goal value of every policy including the terminal one.
    pub goals: Vec<f64>,
    /// Regularization in effect at each policy (belief-weighted when tracked).
    pub betas: Vec<f64>,
    /// Realized per-agent learning rates at each step.
    pub rates: Vec<Vec<f64>>,
    /// Posterior signal of the true model at each policy, when a tracker knows the truth.
    pub truth_posterior: Vec<f64>,
    /// Posterior components at each policy, when a tracker is attached.
    pub beliefs: Vec<Vec<Vec<f64>>>,
    /// Whether the running MLE equals the true model, at each policy.
    pub identified_path: Vec<bool>,
    /// Number of strategy outputs moved into `[0, U_max]`.
    pub clamped: usize,
    /// Number of steps where a Euclidean projection clipped a coordinate.
    pub projection_clips: usize,
    pub max_goal: f64,
    pub seed: u64,
}

/// Gap, cost and objective of a finished episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SteeringOutcome {
    pub gap: f64,
    pub cost: f64,
    /// `beta * goal(pi_{T+1}) - C`.
    pub objective: f64,
    /// Training return, with per-step goal terms when shaping is on.
    pub shaped_return: f64,
    pub clamped: usize,
}

impl<S: Scalar> SteeringTrajectory<S> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn terminal(&self) -> &JointPolicy<S> {
        self.policies.last().expect("trajectory holds the initial policy")
    }

    /// Whether the MLE after the last step equals the true model.
    pub fn identified(&self) -> Option<bool> {
        self.identified_path.last().copied()
    }

    pub fn steering_gap(&self) -> f64 {
        self.max_goal - self.goals.last().copied().expect("terminal goal")
    }

    pub fn steering_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    pub fn outcome(&self, shaping: bool) -> SteeringOutcome {
        let t = self.len();
        let cost = self.steering_cost();
        let terminal = self.betas[t] * self.goals[t];
        let shaped_return = if shaping {
            terminal + (0..t).map(|i| self.betas[i] * self.goals[i] - self.costs[i]).sum::<f64>()
        } else {
            terminal - cost
        };
        SteeringOutcome {
            gap: self.steering_gap(),
            cost,
            objective: terminal - cost,
            shaped_return,
            clamped: self.clamped,
        }
    }

    /// Recomputes every step cost from the stored policies and rewards.
    pub fn verify_costs(&self, game: &MarkovGame<S>, tol: f64) -> Result<()> {
        for (i, (pi, u)) in self.policies.iter().zip(&self.rewards).enumerate() {
            let c: f64 = steering_returns(game, pi, u)?.iter().map(|x| x.as_f64()).sum();
            if (c - self.costs[i]).abs() > tol {
                return Err(SteerError::Numeric(format!("cost at step {i}: stored {}, recomputed {c}", self.costs[i])));
            }
        }
        Ok(())
    }
}

/// Runs `T` steps of `pi_{t+1} ~ f(. | pi_t, r + u_t)` with `u_t` from `strategy`.
///
/// The dynamics and the strategy draw from separate streams derived from `seed`.
pub fn rollout<S: Scalar>(
    ctx: &RolloutContext<'_, S>,
    strategy: &dyn SteeringStrategy<S>,
    start: &JointPolicy<S>,
    seed: u64,
    mut tracker: Option<&mut BeliefTracker>,
) -> Result<SteeringTrajectory<S>> {
    let game = ctx.game;
    game.check_policy(start)?;
    let ev = ctx.evaluator;
    let u_max = S::of(ev.objective.u_max);
    let mut dyn_rng = stream(seed, &[0]);
    let mut strat_rng = stream(seed, &[1]);
    let t_max = ctx.horizon;

    let mut traj = SteeringTrajectory {
        policies: Vec::with_capacity(t_max + 1),
        rewards: Vec::with_capacity(t_max),
        costs: Vec::with_capacity(t_max),
        goals: Vec::with_capacity(t_max + 1),
        betas: Vec::with_capacity(t_max + 1),
        rates: Vec::with_capacity(t_max),
        truth_posterior: Vec::new(),
        identified_path: Vec::new(),
        beliefs: Vec::new(),
        clamped: 0,
        projection_clips: 0,
        max_goal: ev.max_goal(),
        seed,
    };
    traj.policies.push(start.clone());

    let snapshot = |traj: &mut SteeringTrajectory<S>, tracker: &Option<&mut BeliefTracker>| {
        let belief = tracker.as_ref().map(|tr| tr.belief());
        let weights = belief.filter(|b| b.components().len() == 1).map(|b| b.component(0));
        traj.betas.push(ev.beta_under(weights));
        if let Some(b) = belief {
            traj.beliefs.push(b.components().to_vec());
        }
        if let Some(p) = tracker.as_ref().and_then(|tr| tr.truth_signal()) {
            traj.truth_posterior.push(p);
        }
        if let Some(hit) = tracker.as_ref().and_then(|tr| tr.identified()) {
            traj.identified_path.push(hit);
        }
    };

    for t in 0..t_max {
        snapshot(&mut traj, &tracker);
        let pi = traj.policies.last().expect("nonempty").clone();
        let view = StepView {
            t,
            horizon: t_max,
            policy: &pi,
            history: &traj.policies,
            belief: tracker.as_ref().map(|tr| tr.belief()),
        };
        let mut u = strategy.reward(&view, &mut strat_rng)?;
        if u.shape() != pi.shape() {
            return Err(SteerError::Shape("strategy emitted a reward of the wrong shape".into()));
        }
        traj.clamped += u.clamp_in_place(u_max);

        let values = own_action_values(game, &pi, RewardSource::GamePlus(&u))?;
        let ju = steering_returns(game, &pi, &u)?;
        traj.costs.push(ju.iter().map(|x| x.as_f64()).sum());
        let goal = if ev.needs_returns() {
            let jr: Vec<S> = values.returns.iter().zip(&ju).map(|(&a, &b)| a - b).collect();
            ev.goal_from_returns(&pi, &jr)
        } else {
            ev.goal_from_returns(&pi, &[])
        };
        traj.goals.push(goal);

        let step = step_with_values(ctx.model, game, &pi, &values, &mut dyn_rng)?;
        if step.projection_active {
            traj.projection_clips += 1;
        }
        if let Some(tr) = tracker.as_deref_mut() {
            tr.observe(&pi, &u, &step)?;
        }
        traj.rates.push(step.rates);
        traj.rewards.push(u);
        traj.policies.push(step.policy);
    }

    snapshot(&mut traj, &tracker);
    traj.goals.push(ev.goal(game, traj.terminal())?);
    Ok(traj)
}
