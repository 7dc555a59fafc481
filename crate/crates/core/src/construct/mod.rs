//! Constructive steering rewards: the exact path between two interior policies for
//! known dynamics, and the contracting construction for noisy mirror-descent agents.

use crate::dynamics::{dual_of_policy, DualVariables, DynamicsModel, MirrorMap};
use crate::env::{ObservationKind, SteeringReward, SteeringStrategy, SteeringTrajectory, StepView};
use crate::error::{Result, SteerError};
use crate::game::{
    advantage_bound, own_action_values, AgentTable, JointPolicy, MarkovGame, RewardSource, DEFAULT_INTERIOR_FLOOR,
};
use crate::rng::StreamRng;
use crate::scalar::{expectation, Scalar};

/// `u = x - min_{s,a} x` per (agent, step) with `x = nu - A - E_pi[nu - A]`, where `A`
/// is the advantage under the game reward. Under `r + u` the agents then see the
/// advantage `nu - E_pi[nu]`, because `E_pi[u]` is the same in every state.
pub fn reward_from_direction<S: Scalar>(
    game: &MarkovGame<S>,
    policy: &JointPolicy<S>,
    nu: &AgentTable<S>,
) -> Result<SteeringReward<S>> {
    if !policy.is_interior(S::of(DEFAULT_INTERIOR_FLOOR)) {
        return Err(SteerError::InvalidPolicy("construction needs an interior policy".into()));
    }
    let values = own_action_values(game, policy, RewardSource::Game)?;
    nu.check_same_shape(&values.adv)?;
    let shape = policy.shape().clone();
    let mut u = AgentTable::zeros(&shape);
    for n in 0..shape.num_agents() {
        for h in 0..shape.horizon {
            let mut lowest = S::infinity();
            for s in 0..shape.num_states {
                let pi = policy.block(n, h, s);
                let diff: Vec<S> =
                    nu.block(n, h, s).iter().zip(values.adv.block(n, h, s)).map(|(&v, &a)| v - a).collect();
                let mean = expectation(pi, &diff);
                for (dst, d) in u.block_mut(n, h, s).iter_mut().zip(&diff) {
                    *dst = *d - mean;
                    lowest = lowest.min(*dst);
                }
            }
            for s in 0..shape.num_states {
                u.block_mut(n, h, s).iter_mut().for_each(|x| *x = (*x - lowest).max(S::zero()));
            }
        }
    }
    Ok(SteeringReward::from_table(u))
}

fn interior_dual<S: Scalar>(policy: &JointPolicy<S>, map: MirrorMap) -> Result<DualVariables<S>> {
    if !policy.is_interior(S::of(DEFAULT_INTERIOR_FLOOR)) {
        return Err(SteerError::InvalidPolicy("start and target must be interior".into()));
    }
    dual_of_policy(policy, map, &JointPolicy::uniform(policy.shape()))
}

/// Per-step reward on the exact path from `theta` to `theta_target` in `T` steps.
pub fn build_exact_path_reward<S: Scalar>(
    game: &MarkovGame<S>,
    policy: &JointPolicy<S>,
    theta: &DualVariables<S>,
    theta_target: &DualVariables<S>,
    lr: S,
    steps: usize,
) -> Result<SteeringReward<S>> {
    let nu = path_direction(theta, theta_target, lr, steps)?;
    reward_from_direction(game, policy, &nu)
}

fn path_direction<S: Scalar>(
    theta: &DualVariables<S>,
    theta_target: &DualVariables<S>,
    lr: S,
    steps: usize,
) -> Result<AgentTable<S>> {
    if steps == 0 || !(lr > S::zero()) {
        return Err(SteerError::InvalidArgument("exact path needs T >= 1 and a positive rate".into()));
    }
    let scale = S::one() / (lr * S::of_usize(steps));
    theta_target.zip_with(theta, |a, b| (a - b) * scale)
}

/// Largest entry any exact-path reward can take:
/// `2 * advantage bound + 2 / (lr T) * max_{n,h,s} range_a(theta_target - theta)`.
pub fn required_umax_exact<S: Scalar>(
    game: &MarkovGame<S>,
    theta: &DualVariables<S>,
    theta_target: &DualVariables<S>,
    lr: S,
    steps: usize,
) -> Result<S> {
    let gap = DualVariables::from_table(theta_target.zip_with(theta, |a, b| a - b)?);
    let two = S::of(2.0);
    Ok(two * advantage_bound(game) + two / (lr * S::of_usize(steps)) * gap.max_block_range())
}

/// Exact-path strategy for a fixed-rate mirror-descent model.
#[derive(Clone, Debug)]
pub struct ExactPath<S> {
    game: MarkovGame<S>,
    nu: AgentTable<S>,
    u_bound: S,
}

impl<S: Scalar> ExactPath<S> {
    pub fn new(
        game: &MarkovGame<S>,
        model: &DynamicsModel,
        start: &JointPolicy<S>,
        target: &JointPolicy<S>,
        steps: usize,
    ) -> Result<Self> {
        let lr = model
            .fixed_lr()
            .ok_or_else(|| SteerError::InvalidArgument("exact path needs a fixed learning rate".into()))?;
        if !model.is_deterministic() {
            return Err(SteerError::InvalidArgument("exact path needs deterministic dynamics".into()));
        }
        let map = model.mirror_map();
        let theta = interior_dual(start, map)?;
        let theta_target = interior_dual(target, map)?;
        let lr = S::of(lr);
        Ok(Self {
            game: game.clone(),
            nu: path_direction(&theta, &theta_target, lr, steps)?,
            u_bound: required_umax_exact(game, &theta, &theta_target, lr, steps)?,
        })
    }

    /// Bound every emitted reward respects.
    pub fn u_bound(&self) -> S {
        self.u_bound
    }
}

impl<S: Scalar> SteeringStrategy<S> for ExactPath<S> {
    fn observation(&self) -> ObservationKind {
        ObservationKind::Policy
    }

    fn reward(&self, view: &StepView<'_, S>, _rng: &mut StreamRng) -> Result<SteeringReward<S>> {
        reward_from_direction(&self.game, view.policy, &self.nu)
    }
}

/// Errors when a Euclidean projection clipped a coordinate somewhere along the path,
/// which breaks the linear dual path.
pub fn ensure_projection_inactive<S: Scalar>(traj: &SteeringTrajectory<S>) -> Result<()> {
    if traj.projection_clips > 0 {
        return Err(SteerError::Numeric(format!(
            "simplex projection was active on {} steps of the exact path",
            traj.projection_clips
        )));
    }
    Ok(())
}

/// `gamma = lambda_max^2 * lr / lambda_min`.
pub fn contraction_gamma(lr: f64, lambda_min: f64, lambda_max: f64) -> Result<f64> {
    if !(lambda_min > 0.0 && lambda_max >= lambda_min) {
        return Err(SteerError::InvalidArgument(format!(
            "need 0 < lambda_min <= lambda_max, got ({lambda_min}, {lambda_max})"
        )));
    }
    Ok(lambda_max * lambda_max * lr / lambda_min)
}

/// Reward moving the dual towards `theta_target` by `(theta_target - theta_t) / gamma`.
pub fn build_contraction_reward<S: Scalar>(
    game: &MarkovGame<S>,
    map: MirrorMap,
    policy: &JointPolicy<S>,
    theta_target: &DualVariables<S>,
    lr: f64,
    lambda_min: f64,
    lambda_max: f64,
) -> Result<SteeringReward<S>> {
    let gamma = S::of(contraction_gamma(lr, lambda_min, lambda_max)?);
    let theta = interior_dual(policy, map)?;
    let nu = theta_target.zip_with(&theta, |a, b| (a - b) / gamma)?;
    reward_from_direction(game, policy, &nu)
}

/// Contracting strategy for mirror-descent agents with a noisy advantage estimate.
#[derive(Clone, Debug)]
pub struct Contraction<S> {
    game: MarkovGame<S>,
    map: MirrorMap,
    target: DualVariables<S>,
    lr: f64,
    lambdas: (f64, f64),
}

impl<S: Scalar> Contraction<S> {
    pub fn new(game: &MarkovGame<S>, model: &DynamicsModel, target: &JointPolicy<S>) -> Result<Self> {
        let lr = model
            .fixed_lr()
            .ok_or_else(|| SteerError::InvalidArgument("contraction needs a fixed learning rate".into()))?;
        let lambdas = model.lambda_bounds();
        contraction_gamma(lr, lambdas.0, lambdas.1)?;
        let map = model.mirror_map();
        Ok(Self { game: game.clone(), map, target: interior_dual(target, map)?, lr, lambdas })
    }

    pub fn target_dual(&self) -> &DualVariables<S> {
        &self.target
    }
}

impl<S: Scalar> SteeringStrategy<S> for Contraction<S> {
    fn observation(&self) -> ObservationKind {
        ObservationKind::Policy
    }

    fn reward(&self, view: &StepView<'_, S>, _rng: &mut StreamRng) -> Result<SteeringReward<S>> {
        build_contraction_reward(
            &self.game,
            self.map,
            view.policy,
            &self.target,
            self.lr,
            self.lambdas.0,
            self.lambdas.1,
        )
    }
}

/// `T = max(1, ceil(2 (lambda_max / lambda_min)^2 log(2 L |theta_target - theta| / (mu eps))))`.
pub fn required_horizon(
    eps: f64,
    lipschitz: f64,
    mu: f64,
    lambda_min: f64,
    lambda_max: f64,
    dual_distance: f64,
) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(SteerError::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if !(lipschitz > 0.0 && mu > 0.0 && lambda_min > 0.0 && lambda_max >= lambda_min && dual_distance >= 0.0) {
        return Err(SteerError::InvalidArgument("horizon bound needs positive constants".into()));
    }
    let ratio = (lambda_max / lambda_min).powi(2);
    let t = (2.0 * ratio * (2.0 * lipschitz * dual_distance / (mu * eps)).ln()).ceil();
    Ok(if t.is_finite() && t > 1.0 { t as usize } else { 1 })
}

/// `(1 - w) pi* + w uniform` with `w = min(1, eps / (2 L sqrt(d)))`, `d` the number of
/// policy entries; the goal drops by at most `eps` for `L`-Lipschitz goals.
pub fn interior_mixture<S: Scalar>(maximizer: &JointPolicy<S>, eps: f64, lipschitz: f64) -> Result<JointPolicy<S>> {
    if !(eps > 0.0 && lipschitz > 0.0) {
        return Err(SteerError::InvalidArgument("mixture needs positive eps and L".into()));
    }
    let d = maximizer.shape().total_len() as f64;
    let w = (eps / (2.0 * lipschitz * d.sqrt())).min(1.0);
    Ok(maximizer.mix_with_uniform(S::of(w)))
}
