use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerError};
use crate::game::{AgentTable, JointPolicy};
use crate::scalar::{expectation, Scalar};

/// Noise model for the advantage estimate fed to a mirror-descent agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdvantageEstimator {
    Exact,
    /// `A_hat = kappa * A` with one `kappa ~ U[low, high]` per agent per step.
    MultiplicativeNoise {
        low: f64,
        high: f64,
    },
}

impl Default for AdvantageEstimator {
    fn default() -> Self {
        AdvantageEstimator::Exact
    }
}

impl AdvantageEstimator {
    /// `(lambda_min, lambda_max)`: `<E[A_hat], A> >= lambda_min |A|^2` and `|A_hat| <= lambda_max |A|`.
    pub fn lambda_bounds(&self) -> (f64, f64) {
        match *self {
            AdvantageEstimator::Exact => (1.0, 1.0),
            AdvantageEstimator::MultiplicativeNoise { low, high } => (low, high),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let AdvantageEstimator::MultiplicativeNoise { low, high } = *self {
            if !(low > 0.0 && high >= low && high.is_finite()) {
                return Err(SteerError::InvalidArgument(format!(
                    "multiplicative noise needs 0 < low <= high, got [{low}, {high}]"
                )));
            }
        }
        Ok(())
    }

    /// Draws `A_hat` and re-centers every block to mean zero under `policy`.
    pub fn estimate<S: Scalar, R: Rng + ?Sized>(
        &self,
        adv: &AgentTable<S>,
        policy: &JointPolicy<S>,
        rng: &mut R,
    ) -> Result<AgentTable<S>> {
        adv.check_same_shape(policy.table())?;
        let mut out = adv.clone();
        if let AdvantageEstimator::MultiplicativeNoise { low, high } = *self {
            for n in 0..adv.shape().num_agents() {
                let kappa = S::of(if high > low { rng.random_range(low..high) } else { low });
                out.agent_mut(n).iter_mut().for_each(|x| *x *= kappa);
            }
        }
        for (n, h, s) in adv.shape().blocks().collect::<Vec<_>>() {
            let mean = expectation(policy.block(n, h, s), out.block(n, h, s));
            out.block_mut(n, h, s).iter_mut().for_each(|x| *x -= mean);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::PolicyShape;
    use crate::rng::stream;

    fn setup() -> (AgentTable<f64>, JointPolicy<f64>) {
        let shape = PolicyShape::new(1, 1, vec![2, 2]);
        let pi = JointPolicy::stationary(&shape, &[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        // zero mean under pi by construction
        let adv = AgentTable::from_data(&shape, vec![vec![0.7, -0.3], vec![-0.8, 1.2]]).unwrap();
        (adv, pi)
    }

    #[test]
    fn exact_returns_advantage() {
        let (adv, pi) = setup();
        let mut rng = stream(1, &[]);
        let est = AdvantageEstimator::Exact.estimate(&adv, &pi, &mut rng).unwrap();
        assert!(est.zip_with(&adv, |a, b| a - b).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn zero_advantage_stays_zero() {
        let (adv, pi) = setup();
        let zero = adv.map(|_| 0.0);
        let mut rng = stream(1, &[]);
        let est =
            AdvantageEstimator::MultiplicativeNoise { low: 0.5, high: 1.5 }.estimate(&zero, &pi, &mut rng).unwrap();
        assert_eq!(est.max_abs(), 0.0);
    }

    #[test]
    fn multiplicative_noise_meets_lambda_bounds() {
        let (adv, pi) = setup();
        let est = AdvantageEstimator::MultiplicativeNoise { low: 0.5, high: 1.5 };
        let (lmin, lmax) = est.lambda_bounds();
        let norm2: f64 = adv.iter().map(|x| x * x).sum();
        let mut rng = stream(9, &[]);
        let draws = 20_000;
        let mut mean = vec![0.0; adv.shape().total_len()];
        for _ in 0..draws {
            let a_hat = est.estimate(&adv, &pi, &mut rng).unwrap();
            let n2: f64 = a_hat.iter().map(|x| x * x).sum();
            assert!(n2 <= lmax * lmax * norm2 + 1e-12);
            for (m, x) in mean.iter_mut().zip(a_hat.iter()) {
                *m += x / draws as f64;
            }
        }
        let inner: f64 = mean.iter().zip(adv.iter()).map(|(m, a)| m * a).sum();
        assert!(inner >= lmin * norm2);
        assert!((inner / norm2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn rejects_bad_noise_range() {
        assert!(AdvantageEstimator::MultiplicativeNoise { low: 0.0, high: 1.0 }.validate().is_err());
        assert!(AdvantageEstimator::MultiplicativeNoise { low: 2.0, high: 1.0 }.validate().is_err());
    }
}
