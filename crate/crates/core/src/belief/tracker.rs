use super::{component_log_likelihoods, mle_of_sums, BeliefState, ModelClass, ModelId, StepObservation};
use crate::dynamics::{ObservationChannel, StepResult};
use crate::env::SteeringReward;
use crate::error::Result;
use crate::game::{JointPolicy, MarkovGame};
use crate::scalar::Scalar;

/// Running posterior and summed log-likelihoods during a rollout.
#[derive(Clone, Debug)]
pub struct BeliefTracker {
    class: ModelClass,
    game: MarkovGame<f64>,
    belief: BeliefState,
    log_lik: Vec<Vec<f64>>,
    truth: Option<ModelId>,
    steps: usize,
}

impl BeliefTracker {
    pub fn new<S: Scalar>(class: ModelClass, game: &MarkovGame<S>) -> Self {
        let belief = BeliefState::uniform(&class);
        let log_lik = class.components().iter().map(|&k| vec![0.0; k]).collect();
        Self { class, game: game.cast(), belief, log_lik, truth: None, steps: 0 }
    }

    /// Records the model generating the data so the identification signal is available.
    pub fn with_truth(mut self, id: ModelId) -> Result<Self> {
        self.class.check_id(&id)?;
        self.truth = Some(id);
        Ok(self)
    }

    pub fn with_prior(mut self, prior: BeliefState) -> Self {
        self.belief = prior;
        self
    }

    pub fn class(&self) -> &ModelClass {
        &self.class
    }

    pub fn belief(&self) -> &BeliefState {
        &self.belief
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn log_likelihoods(&self) -> &[Vec<f64>] {
        &self.log_lik
    }

    pub fn mle(&self) -> ModelId {
        mle_of_sums(&self.log_lik)
    }

    /// Mean over components of the posterior mass on the true entry.
    pub fn truth_signal(&self) -> Option<f64> {
        let truth = self.truth.as_ref()?;
        let comps = self.belief.components();
        Some(comps.iter().zip(truth).map(|(w, &i)| w[i]).sum::<f64>() / comps.len() as f64)
    }

    pub fn identified(&self) -> Option<bool> {
        self.truth.as_ref().map(|t| *t == self.mle())
    }

    pub fn observation<S: Scalar>(
        &self,
        from: &JointPolicy<S>,
        u: &SteeringReward<S>,
        step: &StepResult<S>,
    ) -> StepObservation {
        match self.class.channel() {
            ObservationChannel::Rates => StepObservation::Rates { rates: step.rates.clone(), gaps: step.gaps.clone() },
            ObservationChannel::Transition => {
                StepObservation::Transition { from: from.cast(), reward: u.cast(), to: step.policy.cast() }
            }
        }
    }

    pub fn observe<S: Scalar>(
        &mut self,
        from: &JointPolicy<S>,
        u: &SteeringReward<S>,
        step: &StepResult<S>,
    ) -> Result<()> {
        let obs = self.observation(from, u, step);
        self.observe_raw(&obs)
    }

    pub fn observe_raw(&mut self, obs: &StepObservation) -> Result<()> {
        let ll = component_log_likelihoods(&self.class, &self.game, obs)?;
        self.belief = self.belief.update(&ll)?;
        for (s, l) in self.log_lik.iter_mut().zip(&ll) {
            s.iter_mut().zip(l).for_each(|(a, b)| *a += b);
        }
        self.steps += 1;
        Ok(())
    }
}
