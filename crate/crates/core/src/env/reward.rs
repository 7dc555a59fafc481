use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerError};
use crate::game::{AgentTable, PolicyShape};
use crate::scalar::Scalar;

/// Per-agent bonus `u^n_h(s, a^n)` over own actions, bounded in `[0, U_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringReward<S>(AgentTable<S>);

impl<S> Deref for SteeringReward<S> {
    type Target = AgentTable<S>;
    fn deref(&self) -> &AgentTable<S> {
        &self.0
    }
}

impl<S> DerefMut for SteeringReward<S> {
    fn deref_mut(&mut self) -> &mut AgentTable<S> {
        &mut self.0
    }
}

impl<S: Scalar> SteeringReward<S> {
    pub fn zeros(shape: &PolicyShape) -> Self {
        Self(AgentTable::zeros(shape))
    }

    pub fn filled(shape: &PolicyShape, value: S) -> Self {
        Self(AgentTable::filled(shape, value))
    }

    /// Wraps a table without range checks.
    pub fn from_table(table: AgentTable<S>) -> Self {
        Self(table)
    }

    /// Wraps a table, rejecting entries outside `[0, u_max]`.
    pub fn new(table: AgentTable<S>, u_max: S) -> Result<Self> {
        let out = Self(table);
        out.validate(u_max)?;
        Ok(out)
    }

    pub fn validate(&self, u_max: S) -> Result<()> {
        if let Some(x) = self.iter().find(|&x| !(x >= S::zero() && x <= u_max)) {
            return Err(SteerError::InvalidReward(format!("entry {x} outside [0, {u_max}]")));
        }
        Ok(())
    }

    /// Clamps into `[0, u_max]`, returning the number of entries that were moved.
    /// Non-finite entries are mapped to 0 and counted.
    pub fn clamp_in_place(&mut self, u_max: S) -> usize {
        let mut clamped = 0;
        for n in 0..self.shape().num_agents() {
            for x in self.0.agent_mut(n) {
                let y = if x.is_nan() { S::zero() } else { x.max(S::zero()).min(u_max) };
                if y != *x {
                    clamped += 1;
                    *x = y;
                }
            }
        }
        clamped
    }

    pub fn table(&self) -> &AgentTable<S> {
        &self.0
    }

    pub fn cast<T: Scalar>(&self) -> SteeringReward<T> {
        SteeringReward(self.0.cast())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_counts_moved_entries() {
        let shape = PolicyShape::new(1, 1, vec![2, 2]);
        let table = AgentTable::from_data(&shape, vec![vec![-1.0, 0.5], vec![12.0, f64::NAN]]).unwrap();
        let mut u = SteeringReward::from_table(table);
        assert!(u.validate(10.0).is_err());
        assert_eq!(u.clamp_in_place(10.0), 3);
        assert_eq!(u.to_flat(), vec![0.0, 0.5, 10.0, 0.0]);
        assert!(u.validate(10.0).is_ok());
    }
}
