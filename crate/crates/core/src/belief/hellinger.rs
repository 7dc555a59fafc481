use rayon::prelude::*;
use serde::Serialize;

use super::{std_normal_cdf, BeliefTracker, ModelClass, ModelId};
use crate::dynamics::{step_dynamics, value_gap, DynamicsModel};
use crate::env::{rollout, GoalKind, RolloutContext, SteeringObjective, SteeringReward, SteeringStrategy};
use crate::error::{Result, SteerError};
use crate::game::{own_action_values, JointPolicy, MarkovGame, RewardSource};
use crate::rng::{derive_seed, stream};

/// Squared Hellinger distance `1 - BC` between two untruncated normals.
pub fn gaussian_hellinger_sq(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let v = s1 * s1 + s2 * s2;
    let bc = (2.0 * s1 * s2 / v).sqrt() * (-(m1 - m2).powi(2) / (4.0 * v)).exp();
    (1.0 - bc).clamp(0.0, 1.0)
}

fn atom_at_zero(mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        if mean <= 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        std_normal_cdf(-mean / std)
    }
}

/// Bhattacharyya coefficient `int sqrt(p q)` of two rate laws `max(xi, 0)`,
/// `xi ~ N(m, s^2)`: the overlap of the positive parts plus that of the atoms at 0.
pub fn rate_bhattacharyya(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let atoms = (atom_at_zero(m1, s1) * atom_at_zero(m2, s2)).sqrt();
    let positive = match (s1 > 0.0, s2 > 0.0) {
        (true, true) => {
            let v = s1 * s1 + s2 * s2;
            let scale = (2.0 * s1 * s2 / v).sqrt() * (-(m1 - m2).powi(2) / (4.0 * v)).exp();
            let m = (m1 * s2 * s2 + m2 * s1 * s1) / v;
            let s = (2.0 * s1 * s1 * s2 * s2 / v).sqrt();
            scale * std_normal_cdf(m / s)
        }
        (false, false) if m1 > 0.0 && m1 == m2 => 1.0,
        _ => 0.0,
    };
    (atoms + positive).clamp(0.0, 1.0)
}

fn gaps_at(game: &MarkovGame<f64>, pi: &JointPolicy<f64>, u: &SteeringReward<f64>) -> Result<Vec<f64>> {
    let values = own_action_values(game, pi, RewardSource::GamePlus(u))?;
    Ok((0..game.num_agents()).map(|n| value_gap(&values.own_q, n, game.initial_state())).collect())
}

/// `H^2 = 1 - int sqrt(p q)` between the observation laws of two models at `(pi, u)`.
pub fn hellinger_sq(
    f: &DynamicsModel,
    g: &DynamicsModel,
    game: &MarkovGame<f64>,
    pi: &JointPolicy<f64>,
    u: &SteeringReward<f64>,
) -> Result<f64> {
    if f.rate_distribution(0, 0.0).is_some() && g.rate_distribution(0, 0.0).is_some() {
        let gaps = gaps_at(game, pi, u)?;
        let bc: f64 = gaps
            .iter()
            .enumerate()
            .map(|(n, &gap)| {
                let (m1, s1) = f.rate_distribution(n, gap).expect("rate model");
                let (m2, s2) = g.rate_distribution(n, gap).expect("rate model");
                rate_bhattacharyya(m1, s1, m2, s2)
            })
            .product();
        return Ok((1.0 - bc).clamp(0.0, 1.0));
    }
    if f.is_deterministic() && g.is_deterministic() {
        let mut rng = stream(0, &[]);
        let a = step_dynamics(f, game, pi, u, &mut rng)?.policy;
        let b = step_dynamics(g, game, pi, u, &mut rng)?.policy;
        return Ok(if a.sup_distance(&b) <= 1e-9 { 0.0 } else { 1.0 });
    }
    Err(SteerError::UnsupportedObservation("no closed form for this pair of observation channels".into()))
}

/// Per-agent Bhattacharyya coefficients between two members of a factored class.
fn factored_bcs(class: &ModelClass, a: &[usize], b: &[usize], gaps: &[f64]) -> Vec<f64> {
    let ModelClass::Factored { candidates, base, std } = class else { unreachable!("factored class") };
    (0..candidates.len())
        .map(|n| {
            let ma = base + candidates[n][a[n]].excess(gaps[n]);
            let mb = base + candidates[n][b[n]].excess(gaps[n]);
            rate_bhattacharyya(ma, *std, mb, *std)
        })
        .collect()
}

/// [`hellinger_sq`] for two members of a class.
pub fn class_hellinger_sq(
    class: &ModelClass,
    a: &[usize],
    b: &[usize],
    game: &MarkovGame<f64>,
    pi: &JointPolicy<f64>,
    u: &SteeringReward<f64>,
) -> Result<f64> {
    class.check_id(a)?;
    class.check_id(b)?;
    match class {
        ModelClass::Explicit { models } => hellinger_sq(&models[a[0]], &models[b[0]], game, pi, u),
        ModelClass::Factored { .. } => {
            let gaps = gaps_at(game, pi, u)?;
            Ok((1.0 - factored_bcs(class, a, b, &gaps).iter().product::<f64>()).clamp(0.0, 1.0))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    /// Smallest per-step squared Hellinger separation between two distinct models.
    pub zeta: f64,
    pub closest_pair: Option<(ModelId, ModelId)>,
    /// Recommended exploration horizon; `None` when the probe cannot separate the class.
    pub horizon: Option<usize>,
}

/// Separation `zeta` of a class along probe points `(pi, u_pi)` and the exploration
/// horizon `ceil(4 / zeta * log(|F| / delta)) + 1` it implies.
pub fn identifiability_probe(
    class: &ModelClass,
    game: &MarkovGame<f64>,
    probes: &[(JointPolicy<f64>, SteeringReward<f64>)],
    delta: f64,
) -> Result<ProbeReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SteerError::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if class.size() <= 1.0 {
        return Ok(ProbeReport { zeta: f64::INFINITY, closest_pair: None, horizon: Some(0) });
    }
    if probes.is_empty() {
        return Err(SteerError::InvalidArgument("identifiability probe needs at least one point".into()));
    }
    let mut zeta = f64::INFINITY;
    let mut closest = None;
    match class {
        ModelClass::Explicit { models } => {
            for i in 0..models.len() {
                for j in i + 1..models.len() {
                    let mut h = f64::INFINITY;
                    for (pi, u) in probes {
                        h = h.min(hellinger_sq(&models[i], &models[j], game, pi, u)?);
                    }
                    if h < zeta {
                        zeta = h;
                        closest = Some((vec![i], vec![j]));
                    }
                }
            }
        }
        ModelClass::Factored { candidates, .. } => {
            // The closest pairs of a product class differ in a single agent.
            let gaps: Vec<Vec<f64>> = probes.iter().map(|(pi, u)| gaps_at(game, pi, u)).collect::<Result<_>>()?;
            let n_agents = candidates.len();
            for n in 0..n_agents {
                for k in 0..candidates[n].len() {
                    for l in k + 1..candidates[n].len() {
                        let mut a = vec![0; n_agents];
                        let mut b = vec![0; n_agents];
                        a[n] = k;
                        b[n] = l;
                        let h =
                            gaps.iter().map(|g| 1.0 - factored_bcs(class, &a, &b, g)[n]).fold(f64::INFINITY, f64::min);
                        if h < zeta {
                            zeta = h;
                            closest = Some((a, b));
                        }
                    }
                }
            }
        }
    }
    let horizon = (zeta > 0.0).then(|| (4.0 / zeta * (class.log_size() - delta.ln())).ceil() as usize + 1);
    Ok(ProbeReport { zeta, closest_pair: closest, horizon })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub trials: usize,
    pub violations: usize,
    pub violation_rate: f64,
    /// `log(|F| / delta)`.
    pub bound: f64,
    /// `delta + 3 sqrt(delta (1 - delta) / trials)`.
    pub allowed_rate: f64,
    pub mle_accuracy: f64,
    pub mean_lhs: f64,
}

/// Monte Carlo check of `sum_t H^2(f_MLE, f*) <= log(|F| / delta)` along trajectories
/// generated by `strategy` on the true model.
#[allow(clippy::too_many_arguments)]
pub fn mle_concentration_trial(
    class: &ModelClass,
    truth: &[usize],
    game: &MarkovGame<f64>,
    strategy: &dyn SteeringStrategy<f64>,
    start: &JointPolicy<f64>,
    horizon: usize,
    delta: f64,
    trials: usize,
    u_max: f64,
    seed: u64,
) -> Result<ConcentrationReport> {
    if trials == 0 {
        return Err(SteerError::InvalidArgument("need at least one trial".into()));
    }
    let model = class.model(truth)?;
    let evaluator = SteeringObjective::new(GoalKind::TotalUtility, 0.0, u_max).prepare(game)?;
    let ctx = RolloutContext { game, model: &model, evaluator: &evaluator, horizon };
    let bound = class.log_size() - delta.ln();
    let results = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut tracker = BeliefTracker::new(class.clone(), game).with_truth(truth.to_vec())?;
            let traj = rollout(&ctx, strategy, start, derive_seed(seed, &[k as u64]), Some(&mut tracker))?;
            let mle = tracker.mle();
            let mut lhs = 0.0;
            if mle != truth {
                for (pi, u) in traj.policies.iter().zip(&traj.rewards) {
                    lhs += class_hellinger_sq(class, &mle, truth, game, pi, u)?;
                }
            }
            Ok((lhs, mle == truth))
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = results.iter().filter(|r| r.0 > bound).count();
    let correct = results.iter().filter(|r| r.1).count();
    Ok(ConcentrationReport {
        trials,
        violations,
        violation_rate: violations as f64 / trials as f64,
        bound,
        allowed_rate: delta + 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt(),
        mle_accuracy: correct as f64 / trials as f64,
        mean_lhs: results.iter().map(|r| r.0).sum::<f64>() / trials as f64,
    })
}
