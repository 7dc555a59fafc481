//! Mirror maps, dual variables and Bregman projections onto the simplex.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerError};
use crate::game::{AgentTable, JointPolicy};
use crate::scalar::{expectation, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorMap {
    /// `phi(z) = sum z log z`; the update is natural policy gradient (replicator).
    NegativeEntropy,
    /// `phi(z) = |z|^2 / 2`; the update is projected gradient ascent.
    SquaredEuclidean,
}

impl MirrorMap {
    /// Strong convexity modulus on the simplex.
    pub fn strong_convexity(self) -> f64 {
        1.0
    }

    /// `grad phi` applied to one distribution.
    fn gradient<S: Scalar>(self, dist: &[S], out: &mut [S]) -> Result<()> {
        match self {
            MirrorMap::NegativeEntropy => {
                for (o, &p) in out.iter_mut().zip(dist) {
                    if p <= S::zero() {
                        return Err(SteerError::InvalidPolicy(
                            "negative-entropy dual undefined at a zero probability".into(),
                        ));
                    }
                    *o = p.ln();
                }
            }
            MirrorMap::SquaredEuclidean => out.copy_from_slice(dist),
        }
        Ok(())
    }

    /// Bregman projection of a dual vector onto the simplex.
    pub fn project<S: Scalar>(self, dual: &[S], out: &mut [S]) -> Result<()> {
        if dual.iter().any(|x| !x.is_finite()) {
            return Err(SteerError::Numeric("non-finite dual variable".into()));
        }
        match self {
            MirrorMap::NegativeEntropy => softmax(dual, out),
            MirrorMap::SquaredEuclidean => project_simplex(dual, out),
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax<S: Scalar>(logits: &[S], out: &mut [S]) {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for (o, &x) in out.iter_mut().zip(logits) {
        *o = (x - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex<S: Scalar>(v: &[S], out: &mut [S]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumulative = S::zero();
    let mut tau = S::zero();
    for (i, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - S::one()) / S::of_usize(i + 1);
        if x - candidate > S::zero() {
            tau = candidate;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - tau).max(S::zero());
    }
}

/// Mirror-space coordinates of a policy, centered to mean zero under a reference policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualVariables<S>(AgentTable<S>);

impl<S> Deref for DualVariables<S> {
    type Target = AgentTable<S>;
    fn deref(&self) -> &AgentTable<S> {
        &self.0
    }
}

impl<S> DerefMut for DualVariables<S> {
    fn deref_mut(&mut self) -> &mut AgentTable<S> {
        &mut self.0
    }
}

impl<S: Scalar> DualVariables<S> {
    pub fn from_table(table: AgentTable<S>) -> Self {
        Self(table)
    }

    pub fn table(&self) -> &AgentTable<S> {
        &self.0
    }

    /// Re-centers every block to mean zero under `reference`.
    pub fn centered_under(&self, reference: &JointPolicy<S>) -> Result<Self> {
        self.check_same_shape(reference.table())?;
        let mut out = self.clone();
        for (n, h, s) in self.shape().blocks().collect::<Vec<_>>() {
            let mean = expectation(reference.block(n, h, s), self.block(n, h, s));
            out.block_mut(n, h, s).iter_mut().for_each(|x| *x -= mean);
        }
        Ok(out)
    }

    /// Representative with mean zero under the uniform distribution (minimum l2 norm
    /// among all constant shifts of each block).
    pub fn min_norm(&self) -> Self {
        let mut out = self.clone();
        for (n, h, s) in self.shape().blocks().collect::<Vec<_>>() {
            let block = out.block_mut(n, h, s);
            let mean = block.iter().copied().sum::<S>() / S::of_usize(block.len());
            block.iter_mut().for_each(|x| *x -= mean);
        }
        out
    }

    /// `target - self` modulo per-block constants, as its minimum-norm representative.
    pub fn gap_to(&self, target: &Self) -> Result<Self> {
        Ok(Self(target.zip_with(self, |a, b| a - b)?).min_norm())
    }

    /// Largest per-block range `max_a x - min_a x`.
    pub fn max_block_range(&self) -> S {
        self.shape()
            .blocks()
            .map(|(n, h, s)| {
                let b = self.block(n, h, s);
                let hi = b.iter().copied().fold(S::neg_infinity(), S::max);
                let lo = b.iter().copied().fold(S::infinity(), S::min);
                hi - lo
            })
            .fold(S::zero(), S::max)
    }
}

/// Dual variables of an interior policy, mean-zero under `reference`.
pub fn dual_of_policy<S: Scalar>(
    policy: &JointPolicy<S>,
    map: MirrorMap,
    reference: &JointPolicy<S>,
) -> Result<DualVariables<S>> {
    policy.check_same_shape(reference.table())?;
    let mut table = AgentTable::zeros(policy.shape());
    for (n, h, s) in policy.shape().blocks().collect::<Vec<_>>() {
        map.gradient(policy.block(n, h, s), table.block_mut(n, h, s))?;
    }
    DualVariables(table).centered_under(reference)
}

/// Projects dual variables back to a policy.
pub fn policy_of_dual<S: Scalar>(dual: &DualVariables<S>, map: MirrorMap) -> Result<JointPolicy<S>> {
    let mut table = AgentTable::zeros(dual.shape());
    for (n, h, s) in dual.shape().blocks().collect::<Vec<_>>() {
        map.project(dual.block(n, h, s), table.block_mut(n, h, s))?;
    }
    JointPolicy::new(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::PolicyShape;

    fn two_action() -> PolicyShape {
        PolicyShape::new(1, 1, vec![2])
    }

    #[test]
    fn uniform_has_zero_dual() {
        let sh = two_action();
        let u = JointPolicy::<f64>::uniform(&sh);
        for map in [MirrorMap::NegativeEntropy, MirrorMap::SquaredEuclidean] {
            let d = dual_of_policy(&u, map, &u).unwrap();
            assert!(d.iter().all(|x| x.abs() < 1e-15));
        }
    }

    #[test]
    fn skewed_policy_dual_is_log_three() {
        let sh = two_action();
        let pi = JointPolicy::stationary(&sh, &[vec![0.9, 0.1]]).unwrap();
        let u = JointPolicy::uniform(&sh);
        let d = dual_of_policy(&pi, MirrorMap::NegativeEntropy, &u).unwrap();
        let l3 = 3f64.ln();
        assert!((d.block(0, 0, 0)[0] - l3).abs() < 1e-12);
        assert!((d.block(0, 0, 0)[1] + l3).abs() < 1e-12);

        let e = dual_of_policy(&pi, MirrorMap::SquaredEuclidean, &u).unwrap();
        assert!((e.block(0, 0, 0)[0] - 0.4).abs() < 1e-15);
        assert!((e.block(0, 0, 0)[1] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let sh = two_action();
        for c in [0.0, 5.0, -30.0] {
            let d = DualVariables::from_table(AgentTable::<f64>::filled(&sh, c));
            let pi = policy_of_dual(&d, MirrorMap::NegativeEntropy).unwrap();
            assert!((pi.block(0, 0, 0)[0] - 0.5).abs() < 1e-15);
        }
        let l3 = 3f64.ln();
        let d = DualVariables::from_table(AgentTable::from_data(&sh, vec![vec![l3, -l3]]).unwrap());
        let pi = policy_of_dual(&d, MirrorMap::NegativeEntropy).unwrap();
        assert!((pi.block(0, 0, 0)[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_rejected_under_entropy() {
        let sh = two_action();
        let pi = JointPolicy::stationary(&sh, &[vec![1.0, 0.0]]).unwrap();
        let u = JointPolicy::uniform(&sh);
        assert!(dual_of_policy(&pi, MirrorMap::NegativeEntropy, &u).is_err());
        assert!(dual_of_policy(&pi, MirrorMap::SquaredEuclidean, &u).is_ok());
    }

    #[test]
    fn non_finite_dual_rejected() {
        let sh = two_action();
        let d = DualVariables::from_table(AgentTable::from_data(&sh, vec![vec![f64::NAN, 0.0]]).unwrap());
        assert!(matches!(policy_of_dual(&d, MirrorMap::SquaredEuclidean), Err(SteerError::Numeric(_))));
    }

    #[test]
    fn simplex_projection_clips() {
        let mut out = [0.0f64; 3];
        project_simplex(&[2.0, 0.0, -1.0], &mut out);
        assert_eq!(out, [1.0, 0.0, 0.0]);
        project_simplex(&[0.2, 0.3, 0.5], &mut out);
        assert!((out[2] - 0.5).abs() < 1e-15);
    }
}
