use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SteeringReward;
use crate::belief::BeliefState;
use crate::error::Result;
use crate::game::{JointPolicy, PolicyShape};
use crate::rng::StreamRng;
use crate::scalar::Scalar;

/// What a strategy conditions on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Policy,
    PolicyBelief,
    PolicyTime,
    History,
}

/// Everything the harness exposes to a strategy at step `t` (0-based).
#[derive(Clone, Copy, Debug)]
pub struct StepView<'a, S> {
    pub t: usize,
    pub horizon: usize,
    pub policy: &'a JointPolicy<S>,
    /// `pi_1, ..., pi_t`, ending with `policy`.
    pub history: &'a [JointPolicy<S>],
    pub belief: Option<&'a BeliefState>,
}

pub trait SteeringStrategy<S: Scalar>: Send + Sync {
    fn observation(&self) -> ObservationKind;

    /// Steering reward for the current step. The harness clamps the result into `[0, U_max]`.
    fn reward(&self, view: &StepView<'_, S>, rng: &mut StreamRng) -> Result<SteeringReward<S>>;
}

/// `u = 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroStrategy;

impl<S: Scalar> SteeringStrategy<S> for ZeroStrategy {
    fn observation(&self) -> ObservationKind {
        ObservationKind::Policy
    }

    fn reward(&self, view: &StepView<'_, S>, _rng: &mut StreamRng) -> Result<SteeringReward<S>> {
        Ok(SteeringReward::zeros(view.policy.shape()))
    }
}

/// The same reward at every step.
#[derive(Clone, Debug)]
pub struct ConstantStrategy<S>(pub SteeringReward<S>);

impl<S: Scalar> SteeringStrategy<S> for ConstantStrategy<S> {
    fn observation(&self) -> ObservationKind {
        ObservationKind::Policy
    }

    fn reward(&self, _view: &StepView<'_, S>, _rng: &mut StreamRng) -> Result<SteeringReward<S>> {
        Ok(self.0.clone())
    }
}

/// Independent `U[0, u_max]` entries at every step.
#[derive(Clone, Copy, Debug)]
pub struct UniformRandomStrategy {
    pub u_max: f64,
}

impl<S: Scalar> SteeringStrategy<S> for UniformRandomStrategy {
    fn observation(&self) -> ObservationKind {
        ObservationKind::Policy
    }

    fn reward(&self, view: &StepView<'_, S>, rng: &mut StreamRng) -> Result<SteeringReward<S>> {
        let mut u = SteeringReward::zeros(view.policy.shape());
        for n in 0..view.policy.shape().num_agents() {
            for x in u.agent_mut(n) {
                *x = S::of(rng.random::<f64>() * self.u_max);
            }
        }
        Ok(u)
    }
}

/// Random interior policy: each distribution uniform on the simplex, mixed with
/// `floor_mix` of the uniform distribution.
pub fn random_interior_policy<S: Scalar>(shape: &PolicyShape, floor_mix: f64, rng: &mut StreamRng) -> JointPolicy<S> {
    let mut pi = JointPolicy::uniform(shape);
    for (n, h, s) in shape.blocks().collect::<Vec<_>>() {
        let k = shape.actions[n] as f64;
        let draws: Vec<f64> = (0..shape.actions[n]).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = draws.iter().sum();
        for (p, d) in pi.block_mut(n, h, s).iter_mut().zip(&draws) {
            *p = S::of((1.0 - floor_mix) * d / total + floor_mix / k);
        }
    }
    pi
}
