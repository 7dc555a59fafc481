use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cem::{cem, CemConfig, IterationLog, Scored};
use super::features::{FeatureEncoder, FeatureKind};
use super::mlp::{MlpStrategy, OutputHead};
use crate::belief::{BeliefTracker, ModelClass, ModelId};
use crate::dynamics::DynamicsModel;
use crate::env::{
    init_grid, random_interior_policy, rollout, GoalKind, RolloutContext, SteeringObjective, SteeringStrategy, Summary,
};
use crate::error::{Result, SteerError};
use crate::game::{JointPolicy, MarkovGame, PolicyShape};
use crate::rng::{derive_seed, stream};

/// How training episodes pick `pi_1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartRule {
    /// Uniform on each simplex, mixed with `floor_mix` of the uniform policy.
    Random {
        #[serde(default = "default_floor_mix")]
        floor_mix: f64,
    },
    /// Cycles through the `i x i` grid of a 2x2 game.
    Grid {
        resolution: usize,
    },
    Fixed {
        policy: JointPolicy<f64>,
    },
}

fn default_floor_mix() -> f64 {
    0.02
}

impl Default for StartRule {
    fn default() -> Self {
        Self::Random { floor_mix: default_floor_mix() }
    }
}

/// Draws starting policies for a fixed game shape.
#[derive(Clone, Debug)]
pub struct StartSampler {
    rule: StartRule,
    shape: PolicyShape,
    grid: Vec<JointPolicy<f64>>,
}

impl StartSampler {
    pub fn new(rule: &StartRule, shape: &PolicyShape) -> Result<Self> {
        let grid = match rule {
            StartRule::Grid { resolution } => init_grid(shape, *resolution)?,
            StartRule::Fixed { policy } if policy.shape() != shape => {
                return Err(SteerError::Shape("fixed start has the wrong shape".into()))
            }
            StartRule::Random { floor_mix } if !(0.0..1.0).contains(floor_mix) => {
                return Err(SteerError::Config(format!("floor_mix must be in [0, 1), got {floor_mix}")))
            }
            _ => Vec::new(),
        };
        Ok(Self { rule: rule.clone(), shape: shape.clone(), grid })
    }

    /// Start of episode `e`; `seed` only matters for random starts.
    pub fn draw(&self, seed: u64, e: usize) -> JointPolicy<f64> {
        match &self.rule {
            StartRule::Random { floor_mix } => random_interior_policy(&self.shape, *floor_mix, &mut stream(seed, &[])),
            StartRule::Grid { .. } => self.grid[e % self.grid.len()].clone(),
            StartRule::Fixed { policy } => policy.clone(),
        }
    }
}

/// Gaps closer than this count as equal when selecting checkpoints.
const GAP_TIE: f64 = 1e-3;

/// Which parameters training returns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keep {
    #[default]
    Final,
    /// Lowest mean gap on the held-out episodes, ties broken by objective.
    BestGap,
    BestObjective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    #[serde(flatten)]
    pub cem: CemConfig,
    /// Episodes per candidate per iteration, shared by all candidates.
    pub episodes: usize,
    pub hidden: usize,
    pub features: FeatureKind,
    pub time_feature: bool,
    pub init_output_bias: f64,
    pub head: OutputHead,
    /// See [`MlpStrategy::subtract_min`].
    pub subtract_min: bool,
    /// See [`MlpStrategy::with_shared_action_bias`].
    pub shared_action_bias: bool,
    pub starts: StartRule,
    pub keep: Keep,
    /// Held-out episodes for `Keep::BestGap` and `Keep::BestObjective`.
    pub eval_episodes: usize,
    /// Independent CEM runs; the best on held-out episodes is returned.
    pub restarts: usize,
    /// Explorer only: weight of the steering cost in the training score.
    pub cost_weight: f64,
    /// Explorer only: iterations trained with `cost_weight = 0` first.
    pub cost_warmup: usize,
    /// Explorer only: extra weight on the final posterior, on top of the per-step sum.
    pub terminal_weight: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            cem: CemConfig::default(),
            episodes: 8,
            hidden: 16,
            features: FeatureKind::DualLogit,
            time_feature: true,
            init_output_bias: -3.0,
            head: OutputHead::Sigmoid,
            subtract_min: false,
            shared_action_bias: false,
            starts: StartRule::default(),
            keep: Keep::Final,
            eval_episodes: 16,
            restarts: 1,
            cost_weight: 0.0,
            cost_warmup: 0,
            terminal_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        self.cem.validate()?;
        if self.episodes == 0 || self.hidden == 0 {
            return Err(SteerError::Config("episodes and hidden width must be positive".into()));
        }
        if self.keep != Keep::Final && self.eval_episodes == 0 {
            return Err(SteerError::Config("checkpoint selection needs eval_episodes > 0".into()));
        }
        if !(self.cost_weight >= 0.0 && self.cost_weight.is_finite()) {
            return Err(SteerError::Config("cost_weight must be finite and nonnegative".into()));
        }
        if self.restarts == 0 {
            return Err(SteerError::Config("restarts must be at least 1".into()));
        }
        if !(self.terminal_weight >= 0.0 && self.terminal_weight.is_finite()) {
            return Err(SteerError::Config("terminal_weight must be finite and nonnegative".into()));
        }
        Ok(())
    }

    fn initial_strategy(&self, shape: &PolicyShape, belief_dim: usize, u_max: f64) -> Result<MlpStrategy> {
        let enc = FeatureEncoder::new(self.features, self.time_feature, belief_dim);
        let st = MlpStrategy::new(enc, shape.clone(), self.hidden, u_max, self.init_output_bias)
            .with_head(self.head)
            .with_subtract_min(self.subtract_min);
        if self.shared_action_bias {
            st.with_shared_action_bias()
        } else {
            Ok(st)
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedStrategy {
    pub strategy: MlpStrategy,
    pub log: Vec<IterationLog>,
    pub diverged: bool,
    /// Iteration whose parameters were kept, when selection is on.
    pub kept_iteration: Option<usize>,
    /// Restart the strategy came from.
    pub restart: usize,
}

/// Training log as CSV.
pub fn training_log_csv(log: &[IterationLog]) -> String {
    let mut s = String::from("iteration,mean_objective,max_objective,mean_gap,mean_cost,center_objective\n");
    for r in log {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.iteration, r.mean_objective, r.max_objective, r.mean_gap, r.mean_cost, r.center_objective
        );
    }
    s
}

fn mean_scored(xs: &[Scored]) -> Scored {
    let k = xs.len().max(1) as f64;
    Scored {
        score: xs.iter().map(|s| s.score).sum::<f64>() / k,
        gap: xs.iter().map(|s| s.gap).sum::<f64>() / k,
        cost: xs.iter().map(|s| s.cost).sum::<f64>() / k,
    }
}

/// Runs CEM `cfg.restarts` times and applies the checkpoint rule. `episode(strategy,
/// key, e)` scores one episode; keys `[0, it]` are used for training and `[1]` for
/// held-out evaluation, which also picks the best restart.
fn train_with<E>(init: MlpStrategy, cfg: &TrainerConfig, episode: E) -> Result<TrainedStrategy>
where
    E: Fn(&MlpStrategy, &[u64], usize) -> Result<Scored> + Sync,
{
    cfg.validate()?;
    let score_params = |params: &[f64], key: &[u64], n: usize, parallel: bool| -> Result<Scored> {
        let st = init.with_params(params)?;
        let runs = if parallel {
            (0..n).into_par_iter().map(|e| episode(&st, key, e)).collect::<Result<Vec<_>>>()?
        } else {
            (0..n).map(|e| episode(&st, key, e)).collect::<Result<Vec<_>>>()?
        };
        Ok(mean_scored(&runs))
    };
    let better = |a: &Scored, b: &Scored| match cfg.keep {
        Keep::BestGap => a.gap < b.gap - GAP_TIE || (a.gap <= b.gap + GAP_TIE && a.score > b.score),
        _ => a.score > b.score,
    };

    let mut chosen: Option<(Scored, TrainedStrategy)> = None;
    for r in 0..cfg.restarts {
        let sampling = if r == 0 { derive_seed(cfg.seed, &[9]) } else { derive_seed(cfg.seed, &[9, r as u64]) };
        let mut best: Option<(Scored, Vec<f64>, usize)> = None;
        let res = cem(
            init.params().to_vec(),
            &cfg.cem,
            sampling,
            |p, it| score_params(p, &[0, it as u64], cfg.episodes, false),
            |it, mean, _| {
                if cfg.keep == Keep::Final {
                    return Ok(true);
                }
                let sc = score_params(mean, &[1], cfg.eval_episodes, true)?;
                if sc.score.is_finite() && best.as_ref().is_none_or(|b| better(&sc, &b.0)) {
                    best = Some((sc, mean.to_vec(), it));
                }
                Ok(true)
            },
        )?;
        let (params, kept, held_out) = match best {
            Some((sc, p, it)) => (p, Some(it), Some(sc)),
            None => (res.mean, None, None),
        };
        let run = TrainedStrategy {
            strategy: init.with_params(&params)?,
            log: res.log,
            diverged: res.diverged,
            kept_iteration: kept,
            restart: r,
        };
        if cfg.restarts == 1 {
            return Ok(run);
        }
        let sc = match held_out {
            Some(sc) => sc,
            None => score_params(&params, &[1], cfg.eval_episodes, true)?,
        };
        if sc.score.is_finite() && chosen.as_ref().is_none_or(|c| better(&sc, &c.0)) {
            chosen = Some((sc, run));
        }
    }
    chosen.map(|c| c.1).ok_or_else(|| SteerError::Numeric("every restart produced a non-finite score".into()))
}

fn episode_seed(cfg: &TrainerConfig, key: &[u64], e: usize, salt: u64) -> u64 {
    let mut path = vec![salt];
    path.extend_from_slice(key);
    path.push(e as u64);
    derive_seed(cfg.seed, &path)
}

/// Trains a feedback strategy for a known dynamics model.
pub fn train_known_model(
    game: &MarkovGame<f64>,
    model: &DynamicsModel,
    objective: &SteeringObjective,
    horizon: usize,
    cfg: &TrainerConfig,
) -> Result<TrainedStrategy> {
    train_on_models(game, std::slice::from_ref(model), None, objective, horizon, cfg)
}

/// Trains a strategy on a uniform mixture over an explicit class. With `track_belief`
/// the strategy sees the running posterior and `beta_t` follows it.
pub fn train_belief_strategy(
    game: &MarkovGame<f64>,
    class: &ModelClass,
    objective: &SteeringObjective,
    horizon: usize,
    track_belief: bool,
    cfg: &TrainerConfig,
) -> Result<TrainedStrategy> {
    let models = class
        .explicit_models()
        .ok_or_else(|| SteerError::InvalidArgument("belief training needs an explicit model class".into()))?;
    train_on_models(game, models, track_belief.then_some(class), objective, horizon, cfg)
}

fn train_on_models(
    game: &MarkovGame<f64>,
    models: &[DynamicsModel],
    class: Option<&ModelClass>,
    objective: &SteeringObjective,
    horizon: usize,
    cfg: &TrainerConfig,
) -> Result<TrainedStrategy> {
    if models.is_empty() {
        return Err(SteerError::InvalidArgument("empty model class".into()));
    }
    for m in models {
        m.validate(game.num_agents())?;
    }
    objective.validate()?;
    let ev = objective.prepare(game)?;
    let shape = game.policy_shape();
    let sampler = StartSampler::new(&cfg.starts, shape)?;
    let belief_dim = class.map_or(0, |c| c.components().iter().sum());
    let features = if class.is_some() { FeatureKind::BeliefAugmented } else { cfg.features };
    let cfg_local = TrainerConfig { features, ..cfg.clone() };
    let init = cfg_local.initial_strategy(shape, belief_dim, objective.u_max)?;

    train_with(init, cfg, |st, key, e| {
        let model = &models[e % models.len()];
        let ctx = RolloutContext { game, model, evaluator: &ev, horizon };
        let start = sampler.draw(episode_seed(cfg, key, e, 1), e / models.len());
        let mut tracker = class.map(|c| BeliefTracker::new(c.clone(), game));
        let tr = rollout(&ctx, st, &start, episode_seed(cfg, key, e, 2), tracker.as_mut())?;
        let o = tr.outcome(objective.shaping);
        Ok(Scored { score: o.shaped_return, gap: o.gap, cost: o.cost })
    })
}

/// Draws a model id uniformly, independently per component.
pub fn sample_model_id(class: &ModelClass, seed: u64) -> ModelId {
    let mut rng = stream(seed, &[]);
    class.components().iter().map(|&k| rng.random_range(0..k)).collect()
}

fn explore_objective(u_max: f64) -> SteeringObjective {
    SteeringObjective::new(GoalKind::AverageUtility, 0.0, u_max)
}

/// Trains an exploration strategy that maximizes the posterior mass on the true model,
/// summed over steps, with the true model drawn uniformly per episode. The training
/// log reports `1 - identified` in its gap column.
pub fn train_exploration_strategy(
    game: &MarkovGame<f64>,
    class: &ModelClass,
    horizon: usize,
    u_max: f64,
    cfg: &TrainerConfig,
) -> Result<TrainedStrategy> {
    class.validate(game.num_agents())?;
    if horizon == 0 {
        return Err(SteerError::InvalidArgument("exploration horizon must be positive".into()));
    }
    let objective = explore_objective(u_max);
    let ev = objective.prepare(game)?;
    let shape = game.policy_shape();
    let sampler = StartSampler::new(&cfg.starts, shape)?;
    let belief_dim = class.components().iter().sum();
    let init = cfg.initial_strategy(shape, belief_dim, u_max)?;

    train_with(init, cfg, |st, key, e| {
        let truth = sample_model_id(class, episode_seed(cfg, key, e, 3));
        let model = class.model(&truth)?;
        let ctx = RolloutContext { game, model: &model, evaluator: &ev, horizon };
        let start = sampler.draw(episode_seed(cfg, key, e, 1), e);
        let mut tracker = BeliefTracker::new(class.clone(), game).with_truth(truth)?;
        let tr = rollout(&ctx, st, &start, episode_seed(cfg, key, e, 2), Some(&mut tracker))?;
        let p = &tr.truth_posterior;
        let signal = p[1..].iter().sum::<f64>() + cfg.terminal_weight * p[horizon];
        let cost = tr.steering_cost();
        let miss = if tr.identified() == Some(true) { 0.0 } else { 1.0 };
        let weight = match key {
            [0, it] if (*it as usize) < cfg.cost_warmup => 0.0,
            _ => cfg.cost_weight,
        };
        Ok(Scored { score: signal - weight * cost, gap: miss, cost })
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentificationReport {
    pub episodes: usize,
    /// Fraction of episodes whose final MLE is the true model.
    pub rate: f64,
    /// `by_step[t]`: the same fraction after `t` observations.
    pub by_step: Vec<f64>,
    pub cost: Summary,
    pub truth_posterior: Summary,
}

/// Runs `strategy` for `horizon` steps against each true model and measures how often
/// the MLE recovers it.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_identification(
    strategy: &dyn SteeringStrategy<f64>,
    game: &MarkovGame<f64>,
    class: &ModelClass,
    truths: &[ModelId],
    horizon: usize,
    start: &JointPolicy<f64>,
    episodes_per_truth: usize,
    u_max: f64,
    seed: u64,
) -> Result<IdentificationReport> {
    if truths.is_empty() || episodes_per_truth == 0 {
        return Err(SteerError::InvalidArgument("need at least one truth and one episode".into()));
    }
    let objective = explore_objective(u_max);
    let ev = objective.prepare(game)?;
    let jobs: Vec<(usize, usize)> =
        (0..truths.len()).flat_map(|i| (0..episodes_per_truth).map(move |k| (i, k))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(i, k)| {
            let model = class.model(&truths[i])?;
            let ctx = RolloutContext { game, model: &model, evaluator: &ev, horizon };
            let mut tracker = BeliefTracker::new(class.clone(), game).with_truth(truths[i].clone())?;
            rollout(&ctx, strategy, start, derive_seed(seed, &[i as u64, k as u64]), Some(&mut tracker))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = runs.len() as f64;
    let by_step =
        (0..=horizon).map(|t| runs.iter().filter(|r| r.identified_path[t]).count() as f64 / n).collect::<Vec<_>>();
    let costs: Vec<f64> = runs.iter().map(|r| r.steering_cost()).collect();
    let post: Vec<f64> = runs.iter().map(|r| r.truth_posterior[horizon]).collect();
    Ok(IdentificationReport {
        episodes: runs.len(),
        rate: by_step[horizon],
        by_step,
        cost: Summary::of(&costs),
        truth_posterior: Summary::of(&post),
    })
}
