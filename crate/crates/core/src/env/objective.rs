use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerError};
use crate::game::{JointPolicy, MarkovGame, RewardSource};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    /// `sum_n J^n_{|r}`.
    TotalUtility,
    /// `(1/N) sum_n J^n_{|r}`.
    AverageUtility,
    /// `-|pi - pi*|_2`.
    NegL2ToTarget,
}

/// Goal, regularization and reward budget of a steering task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringObjective {
    pub goal: GoalKind,
    #[serde(default)]
    pub shift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<JointPolicy<f64>>,
    pub beta: f64,
    pub u_max: f64,
    /// Per-model regularization used with a belief: `beta_t = sum_f b_t(f) beta_f`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_betas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    /// Add `beta * goal(pi_t)` at every step of the training return.
    #[serde(default)]
    pub shaping: bool,
}

impl SteeringObjective {
    pub fn new(goal: GoalKind, beta: f64, u_max: f64) -> Self {
        Self { goal, shift: 0.0, target: None, beta, u_max, model_betas: None, lipschitz: None, shaping: false }
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_target(mut self, target: JointPolicy<f64>) -> Self {
        self.target = Some(target);
        self
    }

    pub fn with_shaping(mut self, on: bool) -> Self {
        self.shaping = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(SteerError::Config(format!("beta must be finite and nonnegative, got {}", self.beta)));
        }
        if !(self.u_max > 0.0 && self.u_max.is_finite()) {
            return Err(SteerError::Config(format!("u_max must be positive, got {}", self.u_max)));
        }
        if self.goal == GoalKind::NegL2ToTarget && self.target.is_none() {
            return Err(SteerError::Config("distance goal needs a target policy".into()));
        }
        Ok(())
    }

    /// Precomputes the best achievable goal value for `game`.
    pub fn prepare<S: Scalar>(&self, game: &MarkovGame<S>) -> Result<GoalEvaluator<S>> {
        self.validate()?;
        let target = match &self.target {
            Some(t) => {
                let t = t.cast::<S>();
                game.check_policy(&t)?;
                Some(t)
            }
            None => None,
        };
        let max_goal = match self.goal {
            GoalKind::NegL2ToTarget => 0.0,
            kind => team_optimum(game, kind == GoalKind::AverageUtility) + self.shift,
        };
        Ok(GoalEvaluator { objective: self.clone(), target, max_goal })
    }
}

/// Best team value over product policies; deterministic policies suffice, so this is
/// a max over joint actions at every (step, state).
fn team_optimum<S: Scalar>(game: &MarkovGame<S>, average: bool) -> f64 {
    let ns = game.num_states();
    let scale = if average { 1.0 / game.num_agents() as f64 } else { 1.0 };
    let mut next = vec![0.0; ns];
    for h in (0..game.horizon()).rev() {
        let mut cur = vec![f64::NEG_INFINITY; ns];
        for (s, c) in cur.iter_mut().enumerate() {
            for j in 0..game.joint_count() {
                let r: f64 = (0..game.num_agents()).map(|n| game.reward(n, h, s, j).as_f64()).sum();
                let cont: f64 = game.transition_row(h, s, j).iter().zip(&next).map(|(p, v)| p.as_f64() * v).sum();
                *c = c.max(r * scale + cont);
            }
        }
        next = cur;
    }
    next[game.initial_state()]
}

/// Objective bound to a game, with the goal maximum precomputed.
#[derive(Clone, Debug)]
pub struct GoalEvaluator<S> {
    pub objective: SteeringObjective,
    target: Option<JointPolicy<S>>,
    max_goal: f64,
}

impl<S: Scalar> GoalEvaluator<S> {
    pub fn max_goal(&self) -> f64 {
        self.max_goal
    }

    pub fn target(&self) -> Option<&JointPolicy<S>> {
        self.target.as_ref()
    }

    /// Goal value given the agents' returns under `r` (ignored for the distance goal).
    pub fn goal_from_returns(&self, policy: &JointPolicy<S>, returns: &[S]) -> f64 {
        match self.objective.goal {
            GoalKind::TotalUtility => returns.iter().map(|x| x.as_f64()).sum::<f64>() + self.objective.shift,
            GoalKind::AverageUtility => {
                returns.iter().map(|x| x.as_f64()).sum::<f64>() / returns.len() as f64 + self.objective.shift
            }
            GoalKind::NegL2ToTarget => -policy.l2_distance(self.target.as_ref().expect("validated target")).as_f64(),
        }
    }

    pub fn needs_returns(&self) -> bool {
        self.objective.goal != GoalKind::NegL2ToTarget
    }

    pub fn goal(&self, game: &MarkovGame<S>, policy: &JointPolicy<S>) -> Result<f64> {
        if !self.needs_returns() {
            game.check_policy(policy)?;
            return Ok(self.goal_from_returns(policy, &[]));
        }
        let values = crate::game::own_action_values(game, policy, RewardSource::Game)?;
        Ok(self.goal_from_returns(policy, &values.returns))
    }

    pub fn gap(&self, game: &MarkovGame<S>, policy: &JointPolicy<S>) -> Result<f64> {
        Ok(self.max_goal - self.goal(game, policy)?)
    }

    /// Regularization at a step, given the current belief over an explicit class.
    pub fn beta_under(&self, weights: Option<&[f64]>) -> f64 {
        match (&self.objective.model_betas, weights) {
            (Some(betas), Some(w)) if betas.len() == w.len() => betas.iter().zip(w).map(|(b, p)| b * p).sum(),
            _ => self.objective.beta,
        }
    }
}
