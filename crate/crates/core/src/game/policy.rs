//! Per-agent tables indexed by (horizon step, state, own action).

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerError};
use crate::scalar::Scalar;

/// Layout shared by policies, own-action values, dual variables and steering rewards.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub horizon: usize,
    pub num_states: usize,
    pub actions: Vec<usize>,
}

impl PolicyShape {
    pub fn new(horizon: usize, num_states: usize, actions: Vec<usize>) -> Self {
        Self { horizon, num_states, actions }
    }

    pub fn num_agents(&self) -> usize {
        self.actions.len()
    }

    /// Number of entries stored for agent `n`.
    pub fn agent_len(&self, n: usize) -> usize {
        self.horizon * self.num_states * self.actions[n]
    }

    /// Total number of entries across all agents.
    pub fn total_len(&self) -> usize {
        (0..self.num_agents()).map(|n| self.agent_len(n)).sum()
    }

    #[inline]
    pub fn offset(&self, n: usize, h: usize, s: usize) -> usize {
        (h * self.num_states + s) * self.actions[n]
    }

    /// Iterates every `(agent, step, state)` block.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.num_agents())
            .flat_map(move |n| (0..self.horizon).flat_map(move |h| (0..self.num_states).map(move |s| (n, h, s))))
    }
}

/// Dense per-agent storage with a [`PolicyShape`] layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTable<S> {
    shape: PolicyShape,
    data: Vec<Vec<S>>,
}

impl<S: Scalar> AgentTable<S> {
    pub fn filled(shape: &PolicyShape, value: S) -> Self {
        let data = (0..shape.num_agents()).map(|n| vec![value; shape.agent_len(n)]).collect();
        Self { shape: shape.clone(), data }
    }

    pub fn zeros(shape: &PolicyShape) -> Self {
        Self::filled(shape, S::zero())
    }

    pub fn from_data(shape: &PolicyShape, data: Vec<Vec<S>>) -> Result<Self> {
        if data.len() != shape.num_agents() {
            return Err(SteerError::Shape(format!(
                "table has {} agents, shape expects {}",
                data.len(),
                shape.num_agents()
            )));
        }
        for (n, row) in data.iter().enumerate() {
            if row.len() != shape.agent_len(n) {
                return Err(SteerError::Shape(format!(
                    "agent {n} has {} entries, shape expects {}",
                    row.len(),
                    shape.agent_len(n)
                )));
            }
        }
        Ok(Self { shape: shape.clone(), data })
    }

    /// Builds a table from a flat vector ordered agent-major.
    pub fn from_flat(shape: &PolicyShape, flat: &[S]) -> Result<Self> {
        if flat.len() != shape.total_len() {
            return Err(SteerError::Shape(format!(
                "flat table has {} entries, shape expects {}",
                flat.len(),
                shape.total_len()
            )));
        }
        let mut data = Vec::with_capacity(shape.num_agents());
        let mut start = 0;
        for n in 0..shape.num_agents() {
            let len = shape.agent_len(n);
            data.push(flat[start..start + len].to_vec());
            start += len;
        }
        Ok(Self { shape: shape.clone(), data })
    }

    pub fn shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn agent(&self, n: usize) -> &[S] {
        &self.data[n]
    }

    pub fn agent_mut(&mut self, n: usize) -> &mut [S] {
        &mut self.data[n]
    }

    #[inline]
    pub fn block(&self, n: usize, h: usize, s: usize) -> &[S] {
        let off = self.shape.offset(n, h, s);
        &self.data[n][off..off + self.shape.actions[n]]
    }

    #[inline]
    pub fn block_mut(&mut self, n: usize, h: usize, s: usize) -> &mut [S] {
        let off = self.shape.offset(n, h, s);
        let len = self.shape.actions[n];
        &mut self.data[n][off..off + len]
    }

    pub fn iter(&self) -> impl Iterator<Item = S> + '_ {
        self.data.iter().flat_map(|row| row.iter().copied())
    }

    pub fn to_flat(&self) -> Vec<S> {
        self.iter().collect()
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        let data = self.data.iter().map(|row| row.iter().map(|&x| f(x)).collect()).collect();
        Self { shape: self.shape.clone(), data }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.check_same_shape(other)?;
        let data =
            self.data.iter().zip(&other.data).map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(SteerError::Shape(format!("table shapes differ: {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> S {
        self.iter().fold(S::zero(), |m, x| m.max(x.abs()))
    }

    pub fn l2_norm(&self) -> S {
        self.iter().map(|x| x * x).sum::<S>().sqrt()
    }

    pub fn cast<T: Scalar>(&self) -> AgentTable<T> {
        let data = self.data.iter().map(|row| row.iter().map(|&x| T::of(x.as_f64())).collect()).collect();
        AgentTable { shape: self.shape.clone(), data }
    }
}

/// Non-stationary joint policy: one distribution per (agent, step, state).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPolicy<S>(AgentTable<S>);

impl<S> Deref for JointPolicy<S> {
    type Target = AgentTable<S>;
    fn deref(&self) -> &AgentTable<S> {
        &self.0
    }
}

impl<S> DerefMut for JointPolicy<S> {
    fn deref_mut(&mut self) -> &mut AgentTable<S> {
        &mut self.0
    }
}

/// Default floor for membership in the feasible (interior) policy set.
pub const DEFAULT_INTERIOR_FLOOR: f64 = 1e-8;

impl<S: Scalar> JointPolicy<S> {
    pub fn uniform(shape: &PolicyShape) -> Self {
        let mut table = AgentTable::zeros(shape);
        for n in 0..shape.num_agents() {
            let p = S::one() / S::of_usize(shape.actions[n]);
            table.agent_mut(n).iter_mut().for_each(|x| *x = p);
        }
        Self(table)
    }

    /// Validates that every block is a probability distribution.
    pub fn new(table: AgentTable<S>) -> Result<Self> {
        let tol = S::of(1e-9);
        for (n, h, s) in table.shape().blocks() {
            let block = table.block(n, h, s);
            if block.iter().any(|&p| !p.is_finite() || p < S::zero()) {
                return Err(SteerError::InvalidPolicy(format!(
                    "negative or non-finite probability at agent {n}, step {h}, state {s}"
                )));
            }
            let total: S = block.iter().copied().sum();
            if (total - S::one()).abs() > tol {
                return Err(SteerError::InvalidPolicy(format!(
                    "distribution at agent {n}, step {h}, state {s} sums to {total}"
                )));
            }
        }
        Ok(Self(table))
    }

    /// Same distribution in every (step, state) for each agent.
    pub fn stationary(shape: &PolicyShape, per_agent: &[Vec<S>]) -> Result<Self> {
        if per_agent.len() != shape.num_agents() {
            return Err(SteerError::Shape("one distribution per agent expected".into()));
        }
        let mut table = AgentTable::zeros(shape);
        for (n, h, s) in shape.blocks() {
            if per_agent[n].len() != shape.actions[n] {
                return Err(SteerError::Shape(format!("agent {n} distribution length")));
            }
            table.block_mut(n, h, s).copy_from_slice(&per_agent[n]);
        }
        Self::new(table)
    }

    /// Policy of a 2-action game given each agent's probability of its first action.
    pub fn from_first_action_probs(shape: &PolicyShape, probs: &[S]) -> Result<Self> {
        if shape.actions.iter().any(|&a| a != 2) {
            return Err(SteerError::Shape("first-action parameterization needs 2 actions".into()));
        }
        let dists: Vec<Vec<S>> = probs.iter().map(|&p| vec![p, S::one() - p]).collect();
        Self::stationary(shape, &dists)
    }

    pub fn table(&self) -> &AgentTable<S> {
        &self.0
    }

    pub fn into_table(self) -> AgentTable<S> {
        self.0
    }

    /// Member of the feasible set: every entry at least `floor`.
    pub fn is_interior(&self, floor: S) -> bool {
        self.iter().all(|p| p >= floor)
    }

    pub fn cast<T: Scalar>(&self) -> JointPolicy<T> {
        JointPolicy(self.0.cast())
    }

    /// `max |a - b|` over every entry.
    pub fn sup_distance(&self, other: &Self) -> S {
        self.iter().zip(other.iter()).fold(S::zero(), |m, (a, b)| m.max((a - b).abs()))
    }

    /// Euclidean distance over the concatenation of all entries.
    pub fn l2_distance(&self, other: &Self) -> S {
        self.iter().zip(other.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<S>().sqrt()
    }

    /// `(1 - w) * self + w * uniform`.
    pub fn mix_with_uniform(&self, w: S) -> Self {
        let mut out = self.clone();
        for (n, h, s) in self.shape().blocks().collect::<Vec<_>>() {
            let k = S::of_usize(self.shape().actions[n]);
            for p in out.block_mut(n, h, s) {
                *p = (S::one() - w) * *p + w / k;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> PolicyShape {
        PolicyShape::new(2, 3, vec![2, 3])
    }

    #[test]
    fn offsets_cover_every_entry_once() {
        let sh = shape();
        let mut seen = vec![0usize; sh.agent_len(1)];
        for h in 0..2 {
            for s in 0..3 {
                let off = sh.offset(1, h, s);
                for a in 0..3 {
                    seen[off + a] += 1;
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(sh.total_len(), 2 * 3 * 2 + 2 * 3 * 3);
    }

    #[test]
    fn uniform_policy_is_valid_and_interior() {
        let pi = JointPolicy::<f64>::uniform(&shape());
        assert!(JointPolicy::new(pi.table().clone()).is_ok());
        assert!(pi.is_interior(DEFAULT_INTERIOR_FLOOR));
        assert!((pi.block(1, 1, 2)[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_normalized() {
        let mut t = AgentTable::<f64>::filled(&shape(), 0.5);
        t.block_mut(1, 0, 0).copy_from_slice(&[0.5, 0.5, 0.5]);
        assert!(JointPolicy::new(t).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let pi = JointPolicy::<f64>::uniform(&shape());
        let flat = pi.to_flat();
        let back = AgentTable::from_flat(pi.shape(), &flat).unwrap();
        assert_eq!(&back, pi.table());
        assert!(AgentTable::<f64>::from_flat(pi.shape(), &flat[1..]).is_err());
    }

    #[test]
    fn uniform_mixture_of_uniform_is_uniform() {
        let pi = JointPolicy::<f64>::uniform(&shape());
        assert!(pi.mix_with_uniform(0.3).sup_distance(&pi) < 1e-15);
    }
}
