//! Finite-horizon N-player Markov games and their exact value functions.

mod policy;
mod values;

pub use policy::{AgentTable, JointPolicy, PolicyShape, DEFAULT_INTERIOR_FLOOR};
pub use values::{
    advantage_bound, backward_induction, own_action_values, return_under_reward, steering_cost, steering_returns,
    OwnValues, RewardSource, ValueTables,
};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerError};
use crate::scalar::Scalar;

/// Tolerance on transition rows summing to one.
const TRANSITION_TOL: f64 = 1e-12;

/// Serializable game description; mirrors [`MarkovGame`] field for field.
///
/// Joint actions are enumerated row-major with agent 0's index slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub num_agents: usize,
    pub horizon: usize,
    pub num_states: usize,
    pub initial_state: usize,
    pub actions_per_agent: Vec<usize>,
    /// `transition[h][s][joint][s']`.
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    /// `rewards[n][h][s][joint]`.
    pub rewards: Vec<Vec<Vec<Vec<f64>>>>,
    /// Declared `[lo, hi]` bounding every reward; inferred when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_range: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovGame<S> {
    horizon: usize,
    num_states: usize,
    initial_state: usize,
    actions: Vec<usize>,
    strides: Vec<usize>,
    joint_count: usize,
    /// `[((h * S + s) * J + j) * S + s']`
    transition: Vec<S>,
    /// `[n][(h * S + s) * J + j]`
    rewards: Vec<Vec<S>>,
    reward_range: (S, S),
    policy_shape: PolicyShape,
    /// Joint actions with a nonzero reward for some agent, for one-shot games.
    one_shot_support: Option<Vec<usize>>,
}

impl<S: Scalar> MarkovGame<S> {
    pub fn from_spec(spec: &GameSpec) -> Result<Self> {
        let GameSpec { num_agents, horizon, num_states, initial_state, .. } = *spec;
        if num_agents == 0 || horizon == 0 || num_states == 0 {
            return Err(SteerError::InvalidGame("agents, horizon and states must all be at least 1".into()));
        }
        if spec.actions_per_agent.len() != num_agents {
            return Err(SteerError::Shape(format!(
                "{} action counts for {} agents",
                spec.actions_per_agent.len(),
                num_agents
            )));
        }
        if spec.actions_per_agent.iter().any(|&a| a == 0) {
            return Err(SteerError::InvalidGame("every agent needs at least one action".into()));
        }
        if initial_state >= num_states {
            return Err(SteerError::InvalidGame(format!("initial state {initial_state} out of range 0..{num_states}")));
        }
        let joint_count: usize = spec.actions_per_agent.iter().product();

        let mut transition = Vec::with_capacity(horizon * num_states * joint_count * num_states);
        if spec.transition.len() != horizon {
            return Err(SteerError::Shape(format!(
                "transition has {} steps, horizon is {horizon}",
                spec.transition.len()
            )));
        }
        for (h, by_state) in spec.transition.iter().enumerate() {
            check_len(by_state.len(), num_states, || format!("transition[{h}] states"))?;
            for (s, by_joint) in by_state.iter().enumerate() {
                check_len(by_joint.len(), joint_count, || format!("transition[{h}][{s}] joint actions"))?;
                for (j, row) in by_joint.iter().enumerate() {
                    check_len(row.len(), num_states, || format!("transition[{h}][{s}][{j}] next states"))?;
                    if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                        return Err(SteerError::InvalidGame(format!(
                            "negative or non-finite transition probability at [{h}][{s}][{j}]"
                        )));
                    }
                    let total: f64 = row.iter().sum();
                    if (total - 1.0).abs() > TRANSITION_TOL {
                        return Err(SteerError::InvalidGame(format!("transition row [{h}][{s}][{j}] sums to {total}")));
                    }
                    transition.extend(row.iter().map(|&p| S::of(p)));
                }
            }
        }

        check_len(spec.rewards.len(), num_agents, || "rewards agents".to_string())?;
        let mut rewards = Vec::with_capacity(num_agents);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (n, by_step) in spec.rewards.iter().enumerate() {
            check_len(by_step.len(), horizon, || format!("rewards[{n}] steps"))?;
            let mut flat = Vec::with_capacity(horizon * num_states * joint_count);
            for (h, by_state) in by_step.iter().enumerate() {
                check_len(by_state.len(), num_states, || format!("rewards[{n}][{h}] states"))?;
                for (s, row) in by_state.iter().enumerate() {
                    check_len(row.len(), joint_count, || format!("rewards[{n}][{h}][{s}] joint actions"))?;
                    for &r in row {
                        if !r.is_finite() {
                            return Err(SteerError::InvalidGame(format!(
                                "non-finite reward in rewards[{n}][{h}][{s}]"
                            )));
                        }
                        lo = lo.min(r);
                        hi = hi.max(r);
                        flat.push(S::of(r));
                    }
                }
            }
            rewards.push(flat);
        }
        let (lo, hi) = match spec.reward_range {
            Some((dlo, dhi)) => {
                if dlo > lo || dhi < hi {
                    return Err(SteerError::InvalidGame(format!(
                        "declared reward range [{dlo}, {dhi}] does not bound observed [{lo}, {hi}]"
                    )));
                }
                (dlo, dhi)
            }
            None => (lo, hi),
        };

        let one_shot_support = (horizon == 1 && num_states == 1)
            .then(|| (0..joint_count).filter(|&j| rewards.iter().any(|r: &Vec<S>| r[j] != S::zero())).collect());
        let actions = spec.actions_per_agent.clone();
        let mut strides = vec![1; num_agents];
        for n in (0..num_agents.saturating_sub(1)).rev() {
            strides[n] = strides[n + 1] * actions[n + 1];
        }
        Ok(Self {
            horizon,
            num_states,
            initial_state,
            policy_shape: PolicyShape::new(horizon, num_states, actions.clone()),
            actions,
            strides,
            joint_count,
            transition,
            rewards,
            reward_range: (S::of(lo), S::of(hi)),
            one_shot_support,
        })
    }

    pub fn to_spec(&self) -> GameSpec {
        let (h_n, s_n, j_n) = (self.horizon, self.num_states, self.joint_count);
        let transition = (0..h_n)
            .map(|h| {
                (0..s_n)
                    .map(|s| {
                        (0..j_n).map(|j| self.transition_row(h, s, j).iter().map(|p| p.as_f64()).collect()).collect()
                    })
                    .collect()
            })
            .collect();
        let rewards = (0..self.num_agents())
            .map(|n| {
                (0..h_n)
                    .map(|h| (0..s_n).map(|s| (0..j_n).map(|j| self.reward(n, h, s, j).as_f64()).collect()).collect())
                    .collect()
            })
            .collect();
        GameSpec {
            num_agents: self.num_agents(),
            horizon: h_n,
            num_states: s_n,
            initial_state: self.initial_state,
            actions_per_agent: self.actions.clone(),
            transition,
            rewards,
            reward_range: Some((self.reward_range.0.as_f64(), self.reward_range.1.as_f64())),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.actions.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn reward_range(&self) -> (S, S) {
        self.reward_range
    }

    pub fn policy_shape(&self) -> &PolicyShape {
        &self.policy_shape
    }

    /// Action of agent `n` inside joint action `joint`.
    #[inline]
    pub fn agent_action(&self, joint: usize, n: usize) -> usize {
        (joint / self.strides[n]) % self.actions[n]
    }

    pub fn decode_joint(&self, joint: usize) -> Vec<usize> {
        (0..self.num_agents()).map(|n| self.agent_action(joint, n)).collect()
    }

    pub fn encode_joint(&self, actions: &[usize]) -> usize {
        actions.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    #[inline]
    pub fn reward(&self, n: usize, h: usize, s: usize, joint: usize) -> S {
        self.rewards[n][(h * self.num_states + s) * self.joint_count + joint]
    }

    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, joint: usize) -> &[S] {
        let start = ((h * self.num_states + s) * self.joint_count + joint) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// Checks that a policy has this game's layout.
    /// Nonzero-reward joint actions when `H = 1` and there is a single state.
    pub(crate) fn one_shot_support(&self) -> Option<&[usize]> {
        self.one_shot_support.as_deref()
    }

    pub fn check_policy(&self, policy: &JointPolicy<S>) -> Result<()> {
        if policy.shape() != &self.policy_shape {
            return Err(SteerError::Shape(format!(
                "policy shape {:?} does not match game shape {:?}",
                policy.shape(),
                self.policy_shape
            )));
        }
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> MarkovGame<T> {
        MarkovGame {
            horizon: self.horizon,
            num_states: self.num_states,
            initial_state: self.initial_state,
            actions: self.actions.clone(),
            strides: self.strides.clone(),
            joint_count: self.joint_count,
            transition: self.transition.iter().map(|p| T::of(p.as_f64())).collect(),
            rewards: self.rewards.iter().map(|r| r.iter().map(|x| T::of(x.as_f64())).collect()).collect(),
            reward_range: (T::of(self.reward_range.0.as_f64()), T::of(self.reward_range.1.as_f64())),
            policy_shape: self.policy_shape.clone(),
            one_shot_support: self.one_shot_support.clone(),
        }
    }
}

fn check_len(got: usize, want: usize, what: impl FnOnce() -> String) -> Result<()> {
    if got != want {
        return Err(SteerError::Shape(format!("{}: got {got}, expected {want}", what())));
    }
    Ok(())
}

/// One-shot (H = 1, single state) game from per-agent payoff tensors.
///
/// Each payoff tensor is flattened row-major over joint actions, agent 0 slowest.
pub fn make_matrix_game<S: Scalar>(actions: &[usize], payoffs: &[Vec<f64>]) -> Result<MarkovGame<S>> {
    let joint: usize = actions.iter().product();
    if payoffs.len() != actions.len() {
        return Err(SteerError::Shape(format!("{} payoff tensors for {} agents", payoffs.len(), actions.len())));
    }
    for (n, p) in payoffs.iter().enumerate() {
        if p.len() != joint {
            return Err(SteerError::Shape(format!(
                "payoff tensor of agent {n} has {} entries, joint action shape {:?} needs {joint}",
                p.len(),
                actions
            )));
        }
    }
    let spec = GameSpec {
        num_agents: actions.len(),
        horizon: 1,
        num_states: 1,
        initial_state: 0,
        actions_per_agent: actions.to_vec(),
        transition: vec![vec![vec![vec![1.0]; joint]]],
        rewards: payoffs.iter().map(|p| vec![vec![p.clone()]]).collect(),
        reward_range: None,
    };
    MarkovGame::from_spec(&spec)
}

/// Builds a two-player game from a bimatrix of `(row payoff, column payoff)` pairs.
pub fn make_bimatrix_game<S: Scalar>(rows: usize, cols: usize, cells: &[(f64, f64)]) -> Result<MarkovGame<S>> {
    let first = cells.iter().map(|c| c.0).collect();
    let second = cells.iter().map(|c| c.1).collect();
    make_matrix_game(&[rows, cols], &[first, second])
}

/// Stag Hunt with actions (Hunt, Gather).
pub fn stag_hunt<S: Scalar>() -> MarkovGame<S> {
    make_bimatrix_game(2, 2, &[(5.0, 5.0), (0.0, 4.0), (4.0, 0.0), (2.0, 2.0)]).expect("static game")
}

/// Matching Pennies with actions (Head, Tail).
pub fn matching_pennies<S: Scalar>() -> MarkovGame<S> {
    make_bimatrix_game(2, 2, &[(1.0, -1.0), (-1.0, 1.0), (-1.0, 1.0), (1.0, -1.0)]).expect("static game")
}

/// N-player coordination game: everyone gets `reward_a` if all play A (action 0),
/// `reward_b` if all play B (action 1), and nothing otherwise.
pub fn make_coop_game<S: Scalar>(num_agents: usize, reward_a: f64, reward_b: f64) -> Result<MarkovGame<S>> {
    if num_agents == 0 {
        return Err(SteerError::InvalidArgument("cooperative game needs at least one agent".into()));
    }
    let joint = 1usize << num_agents;
    let all_b = joint - 1;
    let payoff: Vec<f64> = (0..joint)
        .map(|j| match j {
            0 => reward_a,
            j if j == all_b => reward_b,
            _ => 0.0,
        })
        .collect();
    make_matrix_game(&vec![2; num_agents], &vec![payoff; num_agents])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stag_hunt_payoffs() {
        let g: MarkovGame<f64> = stag_hunt();
        assert_eq!(g.num_agents(), 2);
        assert_eq!(g.joint_count(), 4);
        // (H, H), (H, G), (G, H), (G, G)
        let expect = [(5.0, 5.0), (0.0, 4.0), (4.0, 0.0), (2.0, 2.0)];
        for (j, (r0, r1)) in expect.iter().enumerate() {
            assert_eq!(g.reward(0, 0, 0, j), *r0);
            assert_eq!(g.reward(1, 0, 0, j), *r1);
        }
        assert_eq!(g.reward_range(), (0.0, 5.0));
    }

    #[test]
    fn matching_pennies_is_zero_sum() {
        let g: MarkovGame<f64> = matching_pennies();
        for j in 0..4 {
            assert_eq!(g.reward(0, 0, 0, j) + g.reward(1, 0, 0, j), 0.0);
        }
        assert_eq!(g.reward(0, 0, 0, 0), 1.0);
        assert_eq!(g.reward(0, 0, 0, 1), -1.0);
    }

    #[test]
    fn degenerate_one_action_game() {
        let g: MarkovGame<f64> = make_matrix_game(&[1], &[vec![0.0]]).unwrap();
        assert_eq!(g.joint_count(), 1);
        assert_eq!(g.reward(0, 0, 0, 0), 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let err = make_matrix_game::<f64>(&[2, 2], &[vec![0.0; 4], vec![0.0; 3]]).unwrap_err();
        assert!(matches!(err, SteerError::Shape(ref m) if m.contains("agent 1") && m.contains("needs 4")));
    }

    #[test]
    fn coop_game_rewards() {
        let g: MarkovGame<f64> = make_coop_game(10, 2.0, 1.0).unwrap();
        let all_a = g.encode_joint(&[0; 10]);
        let all_b = g.encode_joint(&[1; 10]);
        let mut mixed = vec![0; 10];
        mixed[3] = 1;
        for n in 0..10 {
            assert_eq!(g.reward(n, 0, 0, all_a), 2.0);
            assert_eq!(g.reward(n, 0, 0, all_b), 1.0);
            assert_eq!(g.reward(n, 0, 0, g.encode_joint(&mixed)), 0.0);
        }
        let single: MarkovGame<f64> = make_coop_game(1, 2.0, 1.0).unwrap();
        assert_eq!(single.reward(0, 0, 0, 0), 2.0);
        assert!(make_coop_game::<f64>(0, 2.0, 1.0).is_err());
    }

    #[test]
    fn joint_encoding_is_agent_zero_slowest() {
        let g: MarkovGame<f64> = make_matrix_game(&[2, 3], &[vec![0.0; 6], vec![0.0; 6]]).unwrap();
        assert_eq!(g.encode_joint(&[1, 0]), 3);
        assert_eq!(g.decode_joint(5), vec![1, 2]);
    }

    #[test]
    fn spec_round_trip_and_validation() {
        let g: MarkovGame<f64> = stag_hunt();
        let spec = g.to_spec();
        let json = serde_json::to_string(&spec).unwrap();
        let back: GameSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(MarkovGame::<f64>::from_spec(&back).unwrap(), g);

        let mut bad = spec.clone();
        bad.transition[0][0][0] = vec![0.5];
        assert!(matches!(MarkovGame::<f64>::from_spec(&bad), Err(SteerError::InvalidGame(_))));
        let mut bad = spec;
        bad.reward_range = Some((0.0, 1.0));
        assert!(MarkovGame::<f64>::from_spec(&bad).is_err());
    }
}
