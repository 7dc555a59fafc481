use rayon::prelude::*;
use serde::Serialize;

use super::{rollout, GoalEvaluator, RolloutContext, SteeringOutcome, SteeringStrategy};
use crate::dynamics::DynamicsModel;
use crate::error::{Result, SteerError};
use crate::game::{JointPolicy, MarkovGame, PolicyShape};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

/// Sample mean with standard error and a normal 95% interval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    /// Half width `1.96 * sd / sqrt(n)`.
    pub ci95: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        let se = sd / (n as f64).sqrt();
        Self { n, mean, sd, se, ci95: 1.96 * se }
    }

    pub fn lo(&self) -> f64 {
        self.mean - self.ci95
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.ci95
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelStats {
    pub gap: Summary,
    pub cost: Summary,
    pub objective: Summary,
    pub outcomes: Vec<SteeringOutcome>,
}

impl ModelStats {
    fn from_outcomes(outcomes: Vec<SteeringOutcome>) -> Self {
        let col = |f: fn(&SteeringOutcome) -> f64| outcomes.iter().map(f).collect::<Vec<_>>();
        Self {
            gap: Summary::of(&col(|o| o.gap)),
            cost: Summary::of(&col(|o| o.cost)),
            objective: Summary::of(&col(|o| o.objective)),
            outcomes,
        }
    }

    /// Fraction of episodes with gap at most `eps`.
    pub fn success_rate(&self, eps: f64) -> f64 {
        let hits = self.outcomes.iter().filter(|o| o.gap <= eps).count();
        hits as f64 / self.outcomes.len().max(1) as f64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Evaluation {
    /// Mean over models of each model's mean objective.
    pub objective: f64,
    pub objective_se: f64,
    pub per_model: Vec<ModelStats>,
}

/// Monte Carlo estimate of the average objective over a model class, with
/// `rollouts` episodes per (model, start) pair. Episodes run in parallel.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_objective<S: Scalar>(
    strategy: &dyn SteeringStrategy<S>,
    models: &[DynamicsModel],
    game: &MarkovGame<S>,
    horizon: usize,
    evaluator: &GoalEvaluator<S>,
    starts: &[JointPolicy<S>],
    rollouts: usize,
    seed: u64,
) -> Result<Evaluation> {
    if models.is_empty() {
        return Err(SteerError::InvalidArgument("empty model class".into()));
    }
    if rollouts == 0 || starts.is_empty() {
        return Err(SteerError::InvalidArgument("need at least one start and one rollout".into()));
    }
    let mut per_model = Vec::with_capacity(models.len());
    for (mi, model) in models.iter().enumerate() {
        let ctx = RolloutContext { game, model, evaluator, horizon };
        let jobs: Vec<(usize, usize)> = (0..starts.len()).flat_map(|si| (0..rollouts).map(move |k| (si, k))).collect();
        let outcomes = jobs
            .par_iter()
            .map(|&(si, k)| {
                let s = derive_seed(seed, &[mi as u64, si as u64, k as u64]);
                rollout(&ctx, strategy, &starts[si], s, None).map(|tr| tr.outcome(evaluator.objective.shaping))
            })
            .collect::<Result<Vec<_>>>()?;
        per_model.push(ModelStats::from_outcomes(outcomes));
    }
    let means: Vec<f64> = per_model.iter().map(|m| m.objective.mean).collect();
    let objective = means.iter().sum::<f64>() / means.len() as f64;
    let objective_se = per_model.iter().map(|m| m.objective.se.powi(2)).sum::<f64>().sqrt() / means.len() as f64;
    Ok(Evaluation { objective, objective_se, per_model })
}

/// For each strategy, the strategies that dominate it: no worse in gap and cost on
/// every model and strictly better in one of them on some model.
///
/// `points[i][f] = (gap, cost)` of strategy `i` on model `f`.
pub fn dominators(points: &[Vec<(f64, f64)>]) -> Vec<Vec<usize>> {
    let dominates = |b: &[(f64, f64)], a: &[(f64, f64)]| {
        let weak = b.iter().zip(a).all(|(pb, pa)| pb.0 <= pa.0 && pb.1 <= pa.1);
        let strict = b.iter().zip(a).any(|(pb, pa)| pb.0 < pa.0 || pb.1 < pa.1);
        weak && strict
    };
    (0..points.len())
        .map(|i| (0..points.len()).filter(|&j| j != i && dominates(&points[j], &points[i])).collect())
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ParetoReport {
    /// `points[i][f] = (mean gap, mean cost)`.
    pub points: Vec<Vec<(f64, f64)>>,
    pub objectives: Vec<f64>,
    pub dominated_by: Vec<Vec<usize>>,
}

impl ParetoReport {
    pub fn is_optimal(&self, i: usize) -> bool {
        self.dominated_by[i].is_empty()
    }

    /// Index of the highest average objective (first on ties).
    pub fn best_objective(&self) -> usize {
        let mut best = 0;
        for (i, &o) in self.objectives.iter().enumerate() {
            if o > self.objectives[best] {
                best = i;
            }
        }
        best
    }
}

/// Evaluates every strategy and reports Pareto dominance within the set.
#[allow(clippy::too_many_arguments)]
pub fn pareto_check<S: Scalar>(
    strategies: &[&dyn SteeringStrategy<S>],
    models: &[DynamicsModel],
    game: &MarkovGame<S>,
    horizon: usize,
    evaluator: &GoalEvaluator<S>,
    starts: &[JointPolicy<S>],
    rollouts: usize,
    seed: u64,
) -> Result<ParetoReport> {
    let mut points = Vec::with_capacity(strategies.len());
    let mut objectives = Vec::with_capacity(strategies.len());
    for &psi in strategies {
        let ev = evaluate_objective(psi, models, game, horizon, evaluator, starts, rollouts, seed)?;
        points.push(ev.per_model.iter().map(|m| (m.gap.mean, m.cost.mean)).collect());
        objectives.push(ev.objective);
    }
    let dominated_by = dominators(&points);
    Ok(ParetoReport { points, objectives, dominated_by })
}

/// `i * i` starting policies for a 2-agent, 2-action, single-state game: each agent's
/// first-action probability ranges over `(2k - 1) / (2i)`, agent 0 slowest.
pub fn init_grid<S: Scalar>(shape: &PolicyShape, i: usize) -> Result<Vec<JointPolicy<S>>> {
    if shape.actions != [2, 2] || shape.num_states != 1 {
        return Err(SteerError::InvalidArgument(format!(
            "grid initialization needs 2 agents with 2 actions and one state, got {:?} actions and {} states",
            shape.actions, shape.num_states
        )));
    }
    if i == 0 {
        return Err(SteerError::InvalidArgument("grid resolution must be positive".into()));
    }
    let coords: Vec<f64> = (1..=i).map(|k| (2 * k - 1) as f64 / (2 * i) as f64).collect();
    let mut out = Vec::with_capacity(i * i);
    for &x in &coords {
        for &y in &coords {
            out.push(JointPolicy::from_first_action_probs(shape, &[S::of(x), S::of(y)])?);
        }
    }
    Ok(out)
}
