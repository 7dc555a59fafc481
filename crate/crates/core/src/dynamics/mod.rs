//! Markovian policy-update rules: replicator/NPG, policy mirror descent, and
//! agents with random or value-dependent learning rates.

mod estimator;
mod mirror;

pub use estimator::AdvantageEstimator;
pub use mirror::{dual_of_policy, policy_of_dual, project_simplex, softmax, DualVariables, MirrorMap};

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::env::SteeringReward;
use crate::error::{Result, SteerError};
use crate::game::{own_action_values, AgentTable, JointPolicy, MarkovGame, OwnValues, RewardSource};
use crate::scalar::Scalar;

/// Probabilities produced by a multiplicative update never drop below this value.
pub const MIN_PROB: f64 = 1e-12;

/// Opportunistic threshold; `+inf` means the agent never speeds up.
/// Serialized as a number or the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Threshold(pub f64);

impl Threshold {
    pub const NEVER: Threshold = Threshold(f64::INFINITY);

    pub fn excess(self, gap: f64) -> f64 {
        if self.0.is_infinite() {
            0.0
        } else {
            (gap - self.0).max(0.0)
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Threshold {
    fn serialize<Se: Serializer>(&self, s: Se) -> std::result::Result<Se::Ok, Se::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Threshold(x)),
            Raw::Str(s) if matches!(s.as_str(), "inf" | "+inf" | "infinity") => Ok(Threshold::NEVER),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad threshold {s:?}"))),
        }
    }
}

/// Agent update rule `f(. | pi, r + u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum UpdateRule {
    /// `pi' ∝ pi * exp(lr * A)`.
    ExactNpg { lr: f64 },
    /// NPG with `lr = max(xi, 0)`, `xi ~ N(mean, std^2)` drawn per agent per step.
    NoisyLrNpg { mean: f64, std: f64 },
    /// NPG with `xi_n ~ N(base + [gap_n - lambda_n]^+, std^2)`, where `gap_n` is the
    /// spread of agent n's own-action values at the first step and initial state.
    Opportunistic {
        thresholds: Vec<Threshold>,
        #[serde(default = "default_base")]
        base: f64,
        #[serde(default = "default_opportunistic_std")]
        std: f64,
    },
    /// Mirror ascent with a possibly noisy advantage estimate.
    Pmd {
        map: MirrorMap,
        lr: f64,
        #[serde(default)]
        estimator: AdvantageEstimator,
    },
}

fn default_base() -> f64 {
    1.0
}

fn default_opportunistic_std() -> f64 {
    0.5
}

/// What a mediator sees after each step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationChannel {
    /// The next joint policy.
    #[default]
    Transition,
    /// One realized learning rate per agent.
    Rates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsModel {
    #[serde(flatten)]
    pub rule: UpdateRule,
    #[serde(default)]
    pub channel: ObservationChannel,
}

/// Result of one update.
#[derive(Clone, Debug)]
pub struct StepResult<S> {
    pub policy: JointPolicy<S>,
    /// Realized per-agent learning rates.
    pub rates: Vec<f64>,
    /// Per-agent value spread used by rate-dependent rules (also recorded for the others).
    pub gaps: Vec<f64>,
    /// Euclidean projection clipped at least one coordinate.
    pub projection_active: bool,
}

impl DynamicsModel {
    pub fn new(rule: UpdateRule, channel: ObservationChannel) -> Self {
        Self { rule, channel }
    }

    pub fn exact_npg(lr: f64) -> Self {
        Self::new(UpdateRule::ExactNpg { lr }, ObservationChannel::Transition)
    }

    pub fn noisy_lr(mean: f64, std: f64) -> Self {
        Self::new(UpdateRule::NoisyLrNpg { mean, std }, ObservationChannel::Rates)
    }

    pub fn opportunistic(thresholds: Vec<Threshold>) -> Self {
        let rule = UpdateRule::Opportunistic { thresholds, base: default_base(), std: default_opportunistic_std() };
        Self::new(rule, ObservationChannel::Rates)
    }

    pub fn pmd(map: MirrorMap, lr: f64, estimator: AdvantageEstimator) -> Self {
        Self::new(UpdateRule::Pmd { map, lr, estimator }, ObservationChannel::Transition)
    }

    pub fn validate(&self, num_agents: usize) -> Result<()> {
        let bad = |m: String| Err(SteerError::InvalidArgument(m));
        match &self.rule {
            UpdateRule::ExactNpg { lr } | UpdateRule::Pmd { lr, .. } if !(lr.is_finite() && *lr > 0.0) => {
                return bad(format!("learning rate must be positive, got {lr}"));
            }
            UpdateRule::NoisyLrNpg { mean, std } if !(mean.is_finite() && std.is_finite() && *std >= 0.0) => {
                return bad(format!("bad rate distribution N({mean}, {std}^2)"));
            }
            UpdateRule::Opportunistic { thresholds, base, std } => {
                if thresholds.len() != num_agents {
                    return bad(format!("{} thresholds for {num_agents} agents", thresholds.len()));
                }
                if !(base.is_finite() && std.is_finite() && *std >= 0.0) {
                    return bad(format!("bad rate distribution base {base}, std {std}"));
                }
                if thresholds.iter().any(|t| t.0.is_nan()) {
                    return bad("NaN threshold".into());
                }
            }
            UpdateRule::Pmd { estimator, .. } => estimator.validate()?,
            _ => {}
        }
        if self.channel == ObservationChannel::Rates && self.rate_distribution(0, 0.0).is_none() {
            return bad("rate observations need a random-rate update rule".into());
        }
        Ok(())
    }

    pub fn mirror_map(&self) -> MirrorMap {
        match &self.rule {
            UpdateRule::Pmd { map, .. } => *map,
            _ => MirrorMap::NegativeEntropy,
        }
    }

    /// Fixed learning rate, if the rule has one.
    pub fn fixed_lr(&self) -> Option<f64> {
        match &self.rule {
            UpdateRule::ExactNpg { lr } | UpdateRule::Pmd { lr, .. } => Some(*lr),
            _ => None,
        }
    }

    pub fn lambda_bounds(&self) -> (f64, f64) {
        match &self.rule {
            UpdateRule::Pmd { estimator, .. } => estimator.lambda_bounds(),
            _ => (1.0, 1.0),
        }
    }

    /// Whether the next policy is a deterministic function of `(pi, u)`.
    pub fn is_deterministic(&self) -> bool {
        match &self.rule {
            UpdateRule::ExactNpg { .. } => true,
            UpdateRule::NoisyLrNpg { std, .. } | UpdateRule::Opportunistic { std, .. } => *std == 0.0,
            UpdateRule::Pmd { estimator, .. } => matches!(estimator, AdvantageEstimator::Exact),
        }
    }

    /// `(mean, std)` of the pre-truncation rate `xi_n` given agent n's value gap.
    pub fn rate_distribution(&self, n: usize, gap: f64) -> Option<(f64, f64)> {
        match &self.rule {
            UpdateRule::NoisyLrNpg { mean, std } => Some((*mean, *std)),
            UpdateRule::Opportunistic { thresholds, base, std } => {
                let t = thresholds.get(n).copied().unwrap_or(Threshold::NEVER);
                Some((base + t.excess(gap), *std))
            }
            _ => None,
        }
    }
}

/// Spread `max_a Q - min_a Q` of agent n's own-action values at step 0, state `s`.
pub fn value_gap<S: Scalar>(own_q: &AgentTable<S>, n: usize, s: usize) -> f64 {
    let block = own_q.block(n, 0, s);
    let hi = block.iter().copied().fold(S::neg_infinity(), S::max);
    let lo = block.iter().copied().fold(S::infinity(), S::min);
    (hi - lo).as_f64()
}

/// Replicator step with per-agent rates, computed in log space.
pub fn replicator_step<S: Scalar>(policy: &JointPolicy<S>, adv: &AgentTable<S>, rates: &[S]) -> Result<JointPolicy<S>> {
    policy.check_same_shape(adv)?;
    let floor = S::of(MIN_PROB);
    let mut out = AgentTable::zeros(policy.shape());
    let mut logits = Vec::new();
    for (n, h, s) in policy.shape().blocks().collect::<Vec<_>>() {
        let pi = policy.block(n, h, s);
        let a = adv.block(n, h, s);
        logits.clear();
        logits.extend(pi.iter().zip(a).map(|(&p, &x)| p.ln() + rates[n] * x));
        if logits.iter().any(|x| x.is_nan()) || logits.iter().all(|x| !x.is_finite()) {
            return Err(SteerError::Numeric(format!("non-finite logits at agent {n}, step {h}, state {s}")));
        }
        let dst = out.block_mut(n, h, s);
        softmax(&logits, dst);
        if dst.iter().any(|&p| p < floor) {
            dst.iter_mut().for_each(|p| *p = p.max(floor));
            let total: S = dst.iter().copied().sum();
            dst.iter_mut().for_each(|p| *p /= total);
        }
    }
    JointPolicy::new(out)
}

fn sample_rate<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> Result<f64> {
    let xi =
        Normal::new(mean, std).map_err(|e| SteerError::InvalidArgument(format!("rate distribution: {e}")))?.sample(rng);
    Ok(xi.max(0.0))
}

/// One update given own-action values of `policy` under `r + u`.
pub fn step_with_values<S: Scalar, R: Rng + ?Sized>(
    model: &DynamicsModel,
    game: &MarkovGame<S>,
    policy: &JointPolicy<S>,
    values: &OwnValues<S>,
    rng: &mut R,
) -> Result<StepResult<S>> {
    let num_agents = game.num_agents();
    let s1 = game.initial_state();
    let gaps: Vec<f64> = (0..num_agents).map(|n| value_gap(&values.own_q, n, s1)).collect();
    let rates: Vec<f64> = match &model.rule {
        UpdateRule::ExactNpg { lr } | UpdateRule::Pmd { lr, .. } => vec![*lr; num_agents],
        _ => {
            let mut rates = Vec::with_capacity(num_agents);
            for (n, &gap) in gaps.iter().enumerate() {
                let (mean, std) = model.rate_distribution(n, gap).expect("random-rate rule");
                rates.push(sample_rate(mean, std, rng)?);
            }
            rates
        }
    };
    let scaled: Vec<S> = rates.iter().map(|&r| S::of(r)).collect();
    let (policy, projection_active) = match &model.rule {
        UpdateRule::Pmd { map, estimator, .. } => {
            let a_hat = estimator.estimate(&values.adv, policy, rng)?;
            match map {
                MirrorMap::NegativeEntropy => (replicator_step(policy, &a_hat, &scaled)?, false),
                MirrorMap::SquaredEuclidean => {
                    let mut dual = policy.table().clone();
                    for n in 0..num_agents {
                        for (d, &a) in dual.agent_mut(n).iter_mut().zip(a_hat.agent(n)) {
                            *d += scaled[n] * a;
                        }
                    }
                    let next = policy_of_dual(&DualVariables::from_table(dual), *map)?;
                    let clipped = next.iter().any(|p| p <= S::zero());
                    (next, clipped)
                }
            }
        }
        _ => (replicator_step(policy, &values.adv, &scaled)?, false),
    };
    Ok(StepResult { policy, rates, gaps, projection_active })
}

/// `pi_{t+1} ~ f(. | pi_t, r + u_t)`.
pub fn step_dynamics<S: Scalar, R: Rng + ?Sized>(
    model: &DynamicsModel,
    game: &MarkovGame<S>,
    policy: &JointPolicy<S>,
    u: &SteeringReward<S>,
    rng: &mut R,
) -> Result<StepResult<S>> {
    let values = own_action_values(game, policy, RewardSource::GamePlus(u))?;
    step_with_values(model, game, policy, &values, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{make_coop_game, stag_hunt, PolicyShape};
    use crate::rng::stream;

    #[test]
    fn stag_hunt_uniform_npg_step() {
        let game = stag_hunt::<f64>();
        let pi = JointPolicy::uniform(game.policy_shape());
        let u = SteeringReward::zeros(game.policy_shape());
        let mut rng = stream(0, &[]);
        let next = step_dynamics(&DynamicsModel::exact_npg(0.01), &game, &pi, &u, &mut rng).unwrap();
        let expected = 1.0 / (1.0 + 0.005f64.exp());
        for n in 0..2 {
            assert!((next.policy.block(n, 0, 0)[0] - expected).abs() < 1e-14);
        }
        assert!((expected - 0.49875).abs() < 1e-5);
    }

    #[test]
    fn zero_advantage_is_fixed_point() {
        let shape = PolicyShape::new(2, 2, vec![2, 3]);
        let pi = JointPolicy::<f64>::stationary(&shape, &[vec![0.2, 0.8], vec![0.1, 0.3, 0.6]]).unwrap();
        let adv = AgentTable::zeros(&shape);
        let next = replicator_step(&pi, &adv, &[0.5, 2.0]).unwrap();
        assert!(next.sup_distance(&pi) < 1e-15);
    }

    #[test]
    fn negative_xi_leaves_policy_unchanged() {
        let game = stag_hunt::<f64>();
        let pi = JointPolicy::from_first_action_probs(game.policy_shape(), &[0.3, 0.6]).unwrap();
        let u = SteeringReward::zeros(game.policy_shape());
        let model = DynamicsModel::noisy_lr(-100.0, 0.1);
        let mut rng = stream(3, &[]);
        let next = step_dynamics(&model, &game, &pi, &u, &mut rng).unwrap();
        assert_eq!(next.rates, vec![0.0, 0.0]);
        assert!(next.policy.sup_distance(&pi) < 1e-15);
    }

    #[test]
    fn opportunistic_mean_is_base_below_threshold() {
        let model = DynamicsModel::opportunistic(vec![Threshold(1.5), Threshold::NEVER]);
        assert_eq!(model.rate_distribution(0, 1.2), Some((1.0, 0.5)));
        assert_eq!(model.rate_distribution(0, 2.0), Some((1.5, 0.5)));
        assert_eq!(model.rate_distribution(1, 1e9), Some((1.0, 0.5)));
    }

    #[test]
    fn opportunistic_sample_mean() {
        let game = make_coop_game::<f64>(1, 2.0, 1.0).unwrap();
        let pi = JointPolicy::uniform(game.policy_shape());
        let u = SteeringReward::zeros(game.policy_shape());
        // single agent: Q(A) = 2, Q(B) = 1, gap 1, lambda 0.25 -> mean 1.75
        let model = DynamicsModel::new(
            UpdateRule::Opportunistic { thresholds: vec![Threshold(0.25)], base: 1.0, std: 0.5 },
            ObservationChannel::Rates,
        );
        let values = own_action_values(&game, &pi, RewardSource::GamePlus(&u)).unwrap();
        let mut rng = stream(11, &[]);
        let draws = 100_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            let (mean, std) = model.rate_distribution(0, value_gap(&values.own_q, 0, 0)).unwrap();
            sum += Normal::new(mean, std).unwrap().sample(&mut rng);
        }
        let mean = sum / draws as f64;
        assert!((mean - 1.75).abs() < 3.0 * 0.5 / (draws as f64).sqrt());
        let res = step_with_values(&model, &game, &pi, &values, &mut rng).unwrap();
        assert!((res.gaps[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_serde_accepts_inf() {
        let m = DynamicsModel::opportunistic(vec![Threshold(0.5), Threshold::NEVER]);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"inf\""));
        let back: DynamicsModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn euclidean_pmd_reports_clipping() {
        let game = stag_hunt::<f64>();
        let pi = JointPolicy::from_first_action_probs(game.policy_shape(), &[0.05, 0.5]).unwrap();
        let u = SteeringReward::zeros(game.policy_shape());
        let model = DynamicsModel::pmd(MirrorMap::SquaredEuclidean, 1.0, AdvantageEstimator::Exact);
        let mut rng = stream(0, &[]);
        let res = step_dynamics(&model, &game, &pi, &u, &mut rng).unwrap();
        assert!(res.projection_active);
        let small = DynamicsModel::pmd(MirrorMap::SquaredEuclidean, 0.001, AdvantageEstimator::Exact);
        assert!(!step_dynamics(&small, &game, &pi, &u, &mut rng).unwrap().projection_active);
    }

    #[test]
    fn validate_catches_bad_models() {
        assert!(DynamicsModel::exact_npg(0.0).validate(2).is_err());
        assert!(DynamicsModel::opportunistic(vec![Threshold(1.0)]).validate(2).is_err());
        let mut m = DynamicsModel::exact_npg(0.1);
        m.channel = ObservationChannel::Rates;
        assert!(m.validate(2).is_err());
    }
}
