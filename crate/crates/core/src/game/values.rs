//! Backward induction for Q, V, advantage and return under a fixed joint policy.

use crate::env::SteeringReward;
use crate::error::{Result, SteerError};
use crate::game::{AgentTable, JointPolicy, MarkovGame};
use crate::scalar::Scalar;

/// Which reward the values are computed under: the game's `r`, `r + u`, or `u` alone.
#[derive(Clone, Copy, Debug)]
pub enum RewardSource<'a, S> {
    Game,
    GamePlus(&'a SteeringReward<S>),
    SteeringOnly(&'a SteeringReward<S>),
}

impl<'a, S> RewardSource<'a, S> {
    fn parts(&self) -> (bool, Option<&'a SteeringReward<S>>) {
        match *self {
            RewardSource::Game => (true, None),
            RewardSource::GamePlus(u) => (true, Some(u)),
            RewardSource::SteeringOnly(u) => (false, Some(u)),
        }
    }
}

/// Own-action values without the joint-action Q table.
#[derive(Clone, Debug, PartialEq)]
pub struct OwnValues<S> {
    /// `Q^n_h(s, a^n)`, marginalized over the other agents' policies.
    pub own_q: AgentTable<S>,
    /// `V^n_h(s)` stored at `[n][h * |S| + s]`.
    pub v: Vec<Vec<S>>,
    /// `A^n_h(s, a^n) = Q^n_h(s, a^n) - V^n_h(s)`.
    pub adv: AgentTable<S>,
    /// `J^n = V^n_1(s_1)`.
    pub returns: Vec<S>,
}

/// Exact tabular value functions of a joint policy.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTables<S> {
    /// `Q^n_h(s, a)` over joint actions, stored at `[n][(h * |S| + s) * |A| + a]`.
    pub joint_q: Vec<Vec<S>>,
    pub own_q: AgentTable<S>,
    pub v: Vec<Vec<S>>,
    pub adv: AgentTable<S>,
    pub returns: Vec<S>,
}

impl<S: Scalar> ValueTables<S> {
    pub fn joint_q_at(&self, n: usize, h: usize, s: usize, joint: usize, game: &MarkovGame<S>) -> S {
        self.joint_q[n][(h * game.num_states() + s) * game.joint_count() + joint]
    }

    pub fn v_at(&self, n: usize, h: usize, s: usize, num_states: usize) -> S {
        self.v[n][h * num_states + s]
    }

    pub fn own(&self) -> OwnValues<S> {
        OwnValues { own_q: self.own_q.clone(), v: self.v.clone(), adv: self.adv.clone(), returns: self.returns.clone() }
    }
}

fn check_reward<S: Scalar>(game: &MarkovGame<S>, u: &SteeringReward<S>) -> Result<()> {
    if u.shape() != game.policy_shape() {
        return Err(SteerError::Shape(format!(
            "steering reward shape {:?} does not match game shape {:?}",
            u.shape(),
            game.policy_shape()
        )));
    }
    Ok(())
}

fn induct<S: Scalar>(
    game: &MarkovGame<S>,
    policy: &JointPolicy<S>,
    source: RewardSource<'_, S>,
    keep_joint: bool,
) -> Result<(Option<Vec<Vec<S>>>, AgentTable<S>, Vec<Vec<S>>)> {
    game.check_policy(policy)?;
    let (use_game, extra) = source.parts();
    if let Some(u) = extra {
        check_reward(game, u)?;
    }
    let n_agents = game.num_agents();
    let (horizon, n_states, n_joint) = (game.horizon(), game.num_states(), game.joint_count());
    let shape = game.policy_shape();

    if !keep_joint {
        if let Some(support) = game.one_shot_support() {
            return Ok(one_shot(game, policy, use_game, extra, support));
        }
    }

    let mut joint_q = keep_joint.then(|| vec![vec![S::zero(); horizon * n_states * n_joint]; n_agents]);
    let mut own_q = AgentTable::zeros(shape);
    let mut v = vec![vec![S::zero(); horizon * n_states]; n_agents];

    let mut digits = vec![0usize; n_agents];
    let mut probs = vec![S::zero(); n_agents];
    let mut prefix = vec![S::one(); n_agents + 1];
    let mut suffix = vec![S::one(); n_agents + 1];

    for h in (0..horizon).rev() {
        for s in 0..n_states {
            digits.iter_mut().for_each(|d| *d = 0);
            for j in 0..n_joint {
                for m in 0..n_agents {
                    probs[m] = policy.block(m, h, s)[digits[m]];
                }
                for m in 0..n_agents {
                    prefix[m + 1] = prefix[m] * probs[m];
                }
                for m in (0..n_agents).rev() {
                    suffix[m] = suffix[m + 1] * probs[m];
                }
                let row = game.transition_row(h, s, j);
                for n in 0..n_agents {
                    let mut q = if use_game { game.reward(n, h, s, j) } else { S::zero() };
                    if let Some(u) = extra {
                        q += u.block(n, h, s)[digits[n]];
                    }
                    if h + 1 < horizon {
                        let next = &v[n][(h + 1) * n_states..(h + 2) * n_states];
                        q += row.iter().zip(next).map(|(&p, &x)| p * x).sum::<S>();
                    }
                    if let Some(jq) = joint_q.as_mut() {
                        jq[n][(h * n_states + s) * n_joint + j] = q;
                    }
                    let w_others = prefix[n] * suffix[n + 1];
                    own_q.block_mut(n, h, s)[digits[n]] += w_others * q;
                }
                // odometer increment, last agent fastest
                for m in (0..n_agents).rev() {
                    digits[m] += 1;
                    if digits[m] < game.actions()[m] {
                        break;
                    }
                    digits[m] = 0;
                }
            }
            for n in 0..n_agents {
                let value: S = policy.block(n, h, s).iter().zip(own_q.block(n, h, s)).map(|(&p, &q)| p * q).sum();
                v[n][h * n_states + s] = value;
            }
        }
    }
    Ok((joint_q, own_q, v))
}

/// Single-step, single-state values summing only over joint actions with a nonzero reward.
fn one_shot<S: Scalar>(
    game: &MarkovGame<S>,
    policy: &JointPolicy<S>,
    use_game: bool,
    extra: Option<&SteeringReward<S>>,
    support: &[usize],
) -> (Option<Vec<Vec<S>>>, AgentTable<S>, Vec<Vec<S>>) {
    let n_agents = game.num_agents();
    let mut own_q = AgentTable::zeros(game.policy_shape());
    if use_game {
        let mut digits = vec![0usize; n_agents];
        let mut prefix = vec![S::one(); n_agents + 1];
        let mut suffix = vec![S::one(); n_agents + 1];
        for &j in support {
            for (m, d) in digits.iter_mut().enumerate() {
                *d = game.agent_action(j, m);
            }
            for m in 0..n_agents {
                prefix[m + 1] = prefix[m] * policy.block(m, 0, 0)[digits[m]];
            }
            for m in (0..n_agents).rev() {
                suffix[m] = suffix[m + 1] * policy.block(m, 0, 0)[digits[m]];
            }
            for n in 0..n_agents {
                own_q.block_mut(n, 0, 0)[digits[n]] += game.reward(n, 0, 0, j) * prefix[n] * suffix[n + 1];
            }
        }
    }
    if let Some(u) = extra {
        for n in 0..n_agents {
            for (q, &x) in own_q.agent_mut(n).iter_mut().zip(u.agent(n)) {
                *q += x;
            }
        }
    }
    let v = (0..n_agents)
        .map(|n| vec![policy.block(n, 0, 0).iter().zip(own_q.block(n, 0, 0)).map(|(&p, &q)| p * q).sum()])
        .collect();
    (None, own_q, v)
}

fn advantages<S: Scalar>(game: &MarkovGame<S>, own_q: &AgentTable<S>, v: &[Vec<S>]) -> AgentTable<S> {
    let mut adv = own_q.clone();
    let n_states = game.num_states();
    for (n, h, s) in game.policy_shape().blocks() {
        let base = v[n][h * n_states + s];
        adv.block_mut(n, h, s).iter_mut().for_each(|x| *x -= base);
    }
    adv
}

fn returns_of<S: Scalar>(game: &MarkovGame<S>, v: &[Vec<S>]) -> Vec<S> {
    v.iter().map(|vn| vn[game.initial_state()]).collect()
}

/// Exact `Q`, `V`, advantage and return tables of `policy` under the chosen reward.
pub fn backward_induction<S: Scalar>(
    game: &MarkovGame<S>,
    policy: &JointPolicy<S>,
    source: RewardSource<'_, S>,
) -> Result<ValueTables<S>> {
    let (joint_q, own_q, v) = induct(game, policy, source, true)?;
    let adv = advantages(game, &own_q, &v);
    let returns = returns_of(game, &v);
    Ok(ValueTables { joint_q: joint_q.expect("joint table requested"), own_q, v, adv, returns })
}

/// Same as [`backward_induction`] but skips storing the joint-action table.
pub fn own_action_values<S: Scalar>(
    game: &MarkovGame<S>,
    policy: &JointPolicy<S>,
    source: RewardSource<'_, S>,
) -> Result<OwnValues<S>> {
    let (_, own_q, v) = induct(game, policy, source, false)?;
    let adv = advantages(game, &own_q, &v);
    let returns = returns_of(game, &v);
    Ok(OwnValues { own_q, v, adv, returns })
}

/// Per-agent returns `J^n_{|u}` under the steering reward alone, plus their sum.
pub fn return_under_reward<S: Scalar>(
    game: &MarkovGame<S>,
    policy: &JointPolicy<S>,
    u: &SteeringReward<S>,
) -> Result<(Vec<S>, S)> {
    if u.iter().any(|x| x < S::zero() || !x.is_finite()) {
        return Err(SteerError::InvalidReward("steering reward entries must be finite and nonnegative".into()));
    }
    let (_, _, v) = induct(game, policy, RewardSource::SteeringOnly(u), false)?;
    let returns = returns_of(game, &v);
    let total = returns.iter().copied().sum();
    Ok((returns, total))
}

/// Per-agent `J^n_{|u}`; one-step games skip the joint enumeration.
pub fn steering_returns<S: Scalar>(
    game: &MarkovGame<S>,
    policy: &JointPolicy<S>,
    u: &SteeringReward<S>,
) -> Result<Vec<S>> {
    if game.horizon() == 1 {
        game.check_policy(policy)?;
        check_reward(game, u)?;
        let s = game.initial_state();
        return Ok((0..game.num_agents())
            .map(|n| policy.block(n, 0, s).iter().zip(u.block(n, 0, s)).map(|(&p, &x)| p * x).sum::<S>())
            .collect());
    }
    let (_, _, v) = induct(game, policy, RewardSource::SteeringOnly(u), false)?;
    Ok(returns_of(game, &v))
}

/// Steering cost `sum_n J^n_{|u}`.
pub fn steering_cost<S: Scalar>(game: &MarkovGame<S>, policy: &JointPolicy<S>, u: &SteeringReward<S>) -> Result<S> {
    Ok(steering_returns(game, policy, u)?.into_iter().sum())
}

/// Upper bound on `|A^n_h(s, a)|` valid for every policy: `H * (r_hi - r_lo)`.
pub fn advantage_bound<S: Scalar>(game: &MarkovGame<S>) -> S {
    let (lo, hi) = game.reward_range();
    S::of_usize(game.horizon()) * (hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{make_coop_game, stag_hunt, PolicyShape};

    fn pure_hh() -> JointPolicy<f64> {
        let shape = PolicyShape::new(1, 1, vec![2, 2]);
        JointPolicy::from_first_action_probs(&shape, &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn stag_hunt_pure_hunt_returns() {
        let g = stag_hunt::<f64>();
        let vt = backward_induction(&g, &pure_hh(), RewardSource::Game).unwrap();
        assert_eq!(vt.returns, vec![5.0, 5.0]);
    }

    #[test]
    fn one_shot_path_matches_full_induction() {
        let g = make_coop_game::<f64>(4, 2.0, 1.0).unwrap();
        let probs = [0.2, 0.7, 0.45, 0.9];
        let pi = JointPolicy::from_first_action_probs(g.policy_shape(), &probs).unwrap();
        let mut u = SteeringReward::zeros(g.policy_shape());
        u.block_mut(2, 0, 0).copy_from_slice(&[0.3, 1.1]);
        for source in [RewardSource::Game, RewardSource::GamePlus(&u), RewardSource::SteeringOnly(&u)] {
            let fast = own_action_values(&g, &pi, source).unwrap();
            let full = backward_induction(&g, &pi, source).unwrap();
            assert!(fast.own_q.zip_with(&full.own_q, |a, b| a - b).unwrap().max_abs() < 1e-14);
            assert!(fast.returns.iter().zip(&full.returns).all(|(a, b)| (a - b).abs() < 1e-14));
        }
    }

    #[test]
    fn stag_hunt_uniform_values() {
        // Enumerated by hand: V = (5 + 0 + 4 + 2) / 4, Q(H) = 2.5, Q(G) = 3.
        let g = stag_hunt::<f64>();
        let pi = JointPolicy::uniform(g.policy_shape());
        let vt = backward_induction(&g, &pi, RewardSource::Game).unwrap();
        assert!((vt.v[0][0] - 2.75).abs() < 1e-15);
        assert!((vt.adv.block(0, 0, 0)[0] + 0.25).abs() < 1e-15);
        assert!((vt.adv.block(0, 0, 0)[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_reward_gives_zero_values() {
        let g = stag_hunt::<f64>();
        let pi = JointPolicy::uniform(g.policy_shape());
        let u = SteeringReward::zeros(g.policy_shape());
        let vt = backward_induction(&g, &pi, RewardSource::SteeringOnly(&u)).unwrap();
        assert!(vt.returns.iter().chain(vt.adv.iter().collect::<Vec<_>>().iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn return_under_steering_reward() {
        let g = stag_hunt::<f64>();
        let pi = JointPolicy::uniform(g.policy_shape());
        let mut u = SteeringReward::zeros(g.policy_shape());
        u.block_mut(0, 0, 0)[0] = 1.0;
        let (per_agent, total) = return_under_reward(&g, &pi, &u).unwrap();
        assert!((per_agent[0] - 0.5).abs() < 1e-15);
        assert_eq!(per_agent[1], 0.0);
        assert!((total - 0.5).abs() < 1e-15);
        assert!((steering_cost(&g, &pi, &u).unwrap() - 0.5).abs() < 1e-15);

        let constant = SteeringReward::filled(g.policy_shape(), 3.0);
        let (_, total) = return_under_reward(&g, &pi, &constant).unwrap();
        assert!((total - 3.0 * 2.0 * 1.0).abs() < 1e-12);

        let mut neg = SteeringReward::zeros(g.policy_shape());
        neg.block_mut(1, 0, 0)[1] = -0.1;
        assert!(matches!(return_under_reward(&g, &pi, &neg), Err(SteerError::InvalidReward(_))));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = stag_hunt::<f64>();
        let other = PolicyShape::new(1, 1, vec![2, 3]);
        let pi = JointPolicy::uniform(&other);
        assert!(matches!(backward_induction(&g, &pi, RewardSource::Game), Err(SteerError::Shape(_))));
        let pi = JointPolicy::uniform(g.policy_shape());
        let u = SteeringReward::zeros(&other);
        assert!(backward_induction(&g, &pi, RewardSource::GamePlus(&u)).is_err());
    }

    #[test]
    fn coop_game_own_values_match_closed_form() {
        let g = make_coop_game::<f64>(5, 2.0, 1.0).unwrap();
        let pi = JointPolicy::from_first_action_probs(g.policy_shape(), &[1.0 / 3.0; 5]).unwrap();
        let ov = own_action_values(&g, &pi, RewardSource::Game).unwrap();
        let qa = 2.0 * (1.0f64 / 3.0).powi(4);
        let qb = (2.0f64 / 3.0).powi(4);
        assert!((ov.own_q.block(2, 0, 0)[0] - qa).abs() < 1e-14);
        assert!((ov.own_q.block(2, 0, 0)[1] - qb).abs() < 1e-14);
        let j = 2.0 * (1.0f64 / 3.0).powi(5) + (2.0f64 / 3.0).powi(5);
        assert!((ov.returns[0] - j).abs() < 1e-14);
    }

    #[test]
    fn f32_matches_f64() {
        let g64 = stag_hunt::<f64>();
        let g32: MarkovGame<f32> = g64.cast();
        let pi64 = JointPolicy::from_first_action_probs(g64.policy_shape(), &[0.3, 0.8]).unwrap();
        let pi32 = pi64.cast::<f32>();
        let a = backward_induction(&g64, &pi64, RewardSource::Game).unwrap();
        let b = backward_induction(&g32, &pi32, RewardSource::Game).unwrap();
        for n in 0..2 {
            assert!((a.returns[n] - b.returns[n] as f64).abs() < 1e-5);
        }
    }
}
