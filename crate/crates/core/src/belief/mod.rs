//! Posterior beliefs over a finite class of agent models, likelihoods, the MLE and
//! identifiability diagnostics.

mod hellinger;
mod tracker;

pub use hellinger::{
    class_hellinger_sq, gaussian_hellinger_sq, hellinger_sq, identifiability_probe, mle_concentration_trial,
    rate_bhattacharyya, ConcentrationReport, ProbeReport,
};
pub use tracker::BeliefTracker;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::dynamics::{step_dynamics, DynamicsModel, ObservationChannel, Threshold, UpdateRule};
use crate::env::SteeringReward;
use crate::error::{Result, SteerError};
use crate::game::{JointPolicy, MarkovGame};
use crate::rng::stream;
use crate::scalar::log_sum_exp;

/// Index of a model: one entry per belief component.
pub type ModelId = Vec<usize>;

/// Finite class of candidate dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelClass {
    Explicit {
        models: Vec<DynamicsModel>,
    },
    /// Opportunistic agents with independent per-agent threshold candidates;
    /// the class is the product of the candidate lists.
    Factored {
        candidates: Vec<Vec<Threshold>>,
        #[serde(default = "one")]
        base: f64,
        #[serde(default = "half")]
        std: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl ModelClass {
    pub fn explicit(models: Vec<DynamicsModel>) -> Self {
        ModelClass::Explicit { models }
    }

    pub fn factored(candidates: Vec<Vec<Threshold>>) -> Self {
        ModelClass::Factored { candidates, base: one(), std: half() }
    }

    /// Size of each belief component.
    pub fn components(&self) -> Vec<usize> {
        match self {
            ModelClass::Explicit { models } => vec![models.len()],
            ModelClass::Factored { candidates, .. } => candidates.iter().map(Vec::len).collect(),
        }
    }

    /// `|F|` as a float (factored classes get large).
    pub fn size(&self) -> f64 {
        self.components().iter().map(|&k| k as f64).product()
    }

    pub fn log_size(&self) -> f64 {
        self.components().iter().map(|&k| (k as f64).ln()).sum()
    }

    pub fn channel(&self) -> ObservationChannel {
        match self {
            ModelClass::Explicit { models } => models.first().map(|m| m.channel).unwrap_or_default(),
            ModelClass::Factored { .. } => ObservationChannel::Rates,
        }
    }

    pub fn validate(&self, num_agents: usize) -> Result<()> {
        let comps = self.components();
        if comps.is_empty() || comps.contains(&0) {
            return Err(SteerError::Config("model class is empty".into()));
        }
        match self {
            ModelClass::Explicit { models } => {
                let ch = self.channel();
                for m in models {
                    m.validate(num_agents)?;
                    if m.channel != ch {
                        return Err(SteerError::Config("models in a class must share an observation channel".into()));
                    }
                }
            }
            ModelClass::Factored { candidates, .. } => {
                if candidates.len() != num_agents {
                    return Err(SteerError::Config(format!(
                        "{} candidate lists for {num_agents} agents",
                        candidates.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn check_id(&self, id: &[usize]) -> Result<()> {
        let comps = self.components();
        if id.len() != comps.len() || id.iter().zip(&comps).any(|(&i, &k)| i >= k) {
            return Err(SteerError::InvalidArgument(format!("model id {id:?} outside class {comps:?}")));
        }
        Ok(())
    }

    pub fn model(&self, id: &[usize]) -> Result<DynamicsModel> {
        self.check_id(id)?;
        Ok(match self {
            ModelClass::Explicit { models } => models[id[0]].clone(),
            ModelClass::Factored { candidates, base, std } => DynamicsModel::new(
                UpdateRule::Opportunistic {
                    thresholds: candidates.iter().zip(id).map(|(c, &i)| c[i]).collect(),
                    base: *base,
                    std: *std,
                },
                ObservationChannel::Rates,
            ),
        })
    }

    /// Every member of an explicit class.
    pub fn explicit_models(&self) -> Option<&[DynamicsModel]> {
        match self {
            ModelClass::Explicit { models } => Some(models),
            ModelClass::Factored { .. } => None,
        }
    }
}

/// Posterior over a class, one normalized weight vector per component.
/// The joint belief is the product of the components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    weights: Vec<Vec<f64>>,
}

impl BeliefState {
    pub fn uniform(class: &ModelClass) -> Self {
        let weights = class.components().iter().map(|&k| vec![1.0 / k as f64; k]).collect();
        Self { weights }
    }

    pub fn from_weights(weights: Vec<Vec<f64>>) -> Result<Self> {
        for w in &weights {
            let total: f64 = w.iter().sum();
            if w.is_empty() || w.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                return Err(SteerError::InvalidArgument(format!("belief weights {w:?} are not a distribution")));
            }
        }
        Ok(Self { weights })
    }

    /// Belief concentrated on one model.
    pub fn point(class: &ModelClass, id: &[usize]) -> Result<Self> {
        class.check_id(id)?;
        let weights = class
            .components()
            .iter()
            .zip(id)
            .map(|(&k, &i)| (0..k).map(|j| if j == i { 1.0 } else { 0.0 }).collect())
            .collect();
        Ok(Self { weights })
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    pub fn joint_weight(&self, id: &[usize]) -> f64 {
        self.weights.iter().zip(id).map(|(w, &i)| w[i]).product()
    }

    /// Most probable model, lowest index on ties.
    pub fn mode(&self) -> ModelId {
        self.weights.iter().map(|w| argmax_first(w)).collect()
    }

    /// Bayes update with per-component log-likelihoods, in log space.
    pub fn update(&self, log_lik: &[Vec<f64>]) -> Result<Self> {
        if log_lik.len() != self.weights.len() || log_lik.iter().zip(&self.weights).any(|(l, w)| l.len() != w.len()) {
            return Err(SteerError::Shape("log-likelihood table does not match belief".into()));
        }
        let mut weights = Vec::with_capacity(self.weights.len());
        for (w, ll) in self.weights.iter().zip(log_lik) {
            let lw: Vec<f64> = w.iter().zip(ll).map(|(&p, &l)| p.ln() + l).collect();
            if lw.iter().any(|x| x.is_nan()) {
                return Err(SteerError::Numeric("NaN log-likelihood".into()));
            }
            let z = log_sum_exp(&lw);
            if z == f64::NEG_INFINITY {
                return Err(SteerError::DegeneratePosterior);
            }
            weights.push(lw.iter().map(|&x| (x - z).exp()).collect());
        }
        Ok(Self { weights })
    }
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// What the mediator records after one step.
#[derive(Clone, Debug, PartialEq)]
pub enum StepObservation {
    Transition {
        from: JointPolicy<f64>,
        reward: SteeringReward<f64>,
        to: JointPolicy<f64>,
    },
    /// One realized rate per agent, with the value spreads that parameterize the rate law.
    Rates {
        rates: Vec<f64>,
        gaps: Vec<f64>,
    },
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Log-density of `alpha = max(xi, 0)` with `xi ~ N(mean, std^2)`: the normal density
/// for `alpha > 0` and the atom `Phi(-mean / std)` at zero.
pub fn rate_log_density(alpha: f64, mean: f64, std: f64) -> f64 {
    if alpha < 0.0 || alpha.is_nan() {
        return f64::NEG_INFINITY;
    }
    if std == 0.0 {
        return if alpha == mean.max(0.0) { 0.0 } else { f64::NEG_INFINITY };
    }
    if alpha == 0.0 {
        return std_normal_cdf(-mean / std).ln();
    }
    let z = (alpha - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Deterministic transitions match when every probability agrees to this tolerance.
const TRANSITION_MATCH_TOL: f64 = 1e-9;

/// Log-probability of one observation under `model`.
pub fn log_likelihood(model: &DynamicsModel, game: &MarkovGame<f64>, obs: &StepObservation) -> Result<f64> {
    match obs {
        StepObservation::Rates { rates, gaps } => {
            let mut total = 0.0;
            for (n, (&a, &g)) in rates.iter().zip(gaps).enumerate() {
                let (mean, std) = model.rate_distribution(n, g).ok_or_else(|| {
                    SteerError::UnsupportedObservation("rate samples under a fixed-rate model".into())
                })?;
                total += rate_log_density(a, mean, std);
            }
            Ok(total)
        }
        StepObservation::Transition { from, reward, to } => {
            if !model.is_deterministic() {
                return Err(SteerError::UnsupportedObservation(
                    "transition likelihood needs deterministic dynamics".into(),
                ));
            }
            let predicted = step_dynamics(model, game, from, reward, &mut stream(0, &[]))?.policy;
            Ok(if predicted.sup_distance(to) <= TRANSITION_MATCH_TOL { 0.0 } else { f64::NEG_INFINITY })
        }
    }
}

/// Log-likelihoods laid out like the belief components.
pub fn component_log_likelihoods(
    class: &ModelClass,
    game: &MarkovGame<f64>,
    obs: &StepObservation,
) -> Result<Vec<Vec<f64>>> {
    match class {
        ModelClass::Explicit { models } => {
            Ok(vec![models.iter().map(|m| log_likelihood(m, game, obs)).collect::<Result<Vec<_>>>()?])
        }
        ModelClass::Factored { candidates, base, std } => {
            let StepObservation::Rates { rates, gaps } = obs else {
                return Err(SteerError::UnsupportedObservation("factored classes observe rates".into()));
            };
            if rates.len() != candidates.len() || gaps.len() != candidates.len() {
                return Err(SteerError::Shape("one rate and gap per agent expected".into()));
            }
            Ok(candidates
                .iter()
                .enumerate()
                .map(|(n, c)| c.iter().map(|t| rate_log_density(rates[n], base + t.excess(gaps[n]), *std)).collect())
                .collect())
        }
    }
}

pub fn belief_update(
    belief: &BeliefState,
    obs: &StepObservation,
    class: &ModelClass,
    game: &MarkovGame<f64>,
) -> Result<BeliefState> {
    belief.update(&component_log_likelihoods(class, game, obs)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MleResult {
    pub id: ModelId,
    /// Summed log-likelihoods, laid out like the belief components.
    pub log_likelihoods: Vec<Vec<f64>>,
}

/// Maximum-likelihood model; lowest index on ties. For factored classes the joint
/// maximizer is the per-agent maximizer.
pub fn mle_estimate(obs: &[StepObservation], class: &ModelClass, game: &MarkovGame<f64>) -> Result<MleResult> {
    let mut sums: Vec<Vec<f64>> = class.components().iter().map(|&k| vec![0.0; k]).collect();
    for o in obs {
        for (s, l) in sums.iter_mut().zip(component_log_likelihoods(class, game, o)?) {
            s.iter_mut().zip(l).for_each(|(a, b)| *a += b);
        }
    }
    Ok(MleResult { id: mle_of_sums(&sums), log_likelihoods: sums })
}

pub(crate) fn mle_of_sums(sums: &[Vec<f64>]) -> ModelId {
    sums.iter().map(|s| argmax_first(s)).collect()
}
