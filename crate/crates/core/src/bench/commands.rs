use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::output::{trajectory_csv, Aggregate, EpisodeRecord, OutputDir, SimulationSummary};
use super::scenario::{format_id, Scenario};
use super::SCHEMA_VERSION;
use crate::belief::{BeliefTracker, ModelClass, ModelId};
use crate::construct::{Contraction, ExactPath};
use crate::dynamics::DynamicsModel;
use crate::env::{
    pareto_check, rollout, ConstantStrategy, RolloutContext, SteeringReward, SteeringStrategy, SteeringTrajectory,
    Summary, UniformRandomStrategy, ZeroStrategy,
};
use crate::error::{Result, SteerError};
use crate::game::{JointPolicy, MarkovGame};
use crate::learn::{
    evaluate_identification, run_fete, sample_model_id, train_belief_strategy, train_exploration_strategy,
    train_known_model, training_log_csv, Checkpoint, ExploitCache, FeteOutcome, FeteSetup, IdentificationReport,
    MlpStrategy, StartRule, TrainerConfig,
};
use crate::rng::derive_seed;

/// Options shared by every command.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: u64,
    pub out: PathBuf,
    /// Overrides the scenario's rollouts per (model, start).
    pub rollouts: Option<usize>,
}

impl RunOptions {
    pub fn new(seed: u64, out: impl Into<PathBuf>) -> Self {
        Self { seed, out: out.into(), rollouts: None }
    }
}

#[derive(Clone, Debug)]
pub enum StrategySource {
    Zero,
    Checkpoint(PathBuf),
    Construct,
}

impl StrategySource {
    fn label(&self) -> String {
        match self {
            Self::Zero => "zero".into(),
            Self::Checkpoint(p) => format!("checkpoint:{}", p.display()),
            Self::Construct => "construct".into(),
        }
    }
}

fn trainer_for(cfg: &TrainerConfig, seed: u64) -> TrainerConfig {
    TrainerConfig { seed: derive_seed(seed, &[cfg.seed]), ..cfg.clone() }
}

/// Pure joint action maximizing the goal, for one-shot single-state games.
pub fn goal_maximizer(sc: &Scenario, game: &MarkovGame<f64>) -> Result<JointPolicy<f64>> {
    if let Some(t) = &sc.objective.target {
        return Ok(t.clone());
    }
    let shape = game.policy_shape();
    if shape.horizon != 1 || shape.num_states != 1 {
        return Err(SteerError::Config("construction target must be given for multi-step games".into()));
    }
    let ev = sc.objective.prepare(game)?;
    let mut best: Option<(f64, JointPolicy<f64>)> = None;
    for j in 0..game.joint_count() {
        let acts = game.decode_joint(j);
        let mut pi = JointPolicy::uniform(shape);
        for (n, &a) in acts.iter().enumerate() {
            let block = pi.block_mut(n, 0, 0);
            block.fill(0.0);
            block[a] = 1.0;
        }
        let g = ev.goal(game, &pi)?;
        if best.as_ref().is_none_or(|(b, _)| g > *b) {
            best = Some((g, pi));
        }
    }
    Ok(best.expect("at least one joint action").1)
}

/// The construction target: the goal maximizer mixed with the uniform policy.
pub fn construct_target(sc: &Scenario, game: &MarkovGame<f64>) -> Result<JointPolicy<f64>> {
    let m = goal_maximizer(sc, game)?;
    Ok(if sc.objective.target.is_some() { m } else { m.mix_with_uniform(sc.construct_mix) })
}

enum Loaded {
    Shared(Box<dyn SteeringStrategy<f64>>),
    Construct(JointPolicy<f64>),
}

struct Job {
    model: usize,
    start: usize,
    rollout: usize,
    seed: u64,
}

struct Simulated {
    records: Vec<EpisodeRecord>,
    trajectories: Vec<SteeringTrajectory<f64>>,
    max_goal: f64,
    u_bounds: Vec<f64>,
}

fn simulate_all(sc: &Scenario, source: &StrategySource, opts: &RunOptions) -> Result<Simulated> {
    let game = sc.game.build()?;
    let ev = sc.objective.prepare(&game)?;
    let models = sc.eval_models()?;
    let starts = sc.eval_starts(&game, opts.seed)?;
    let rollouts = opts.rollouts.unwrap_or(sc.rollouts);
    let mut belief_class: Option<&ModelClass> = None;
    let loaded = match source {
        StrategySource::Zero => Loaded::Shared(Box::new(ZeroStrategy)),
        StrategySource::Checkpoint(path) => {
            let ck = Checkpoint::load(path)?;
            if &ck.strategy.shape != game.policy_shape() {
                return Err(SteerError::Config("checkpoint was trained on a different game shape".into()));
            }
            if ck.strategy.encoder.belief_dim > 0 {
                belief_class = Some(
                    sc.class
                        .as_ref()
                        .ok_or_else(|| SteerError::Config("belief strategy needs a model class".into()))?,
                );
            }
            Loaded::Shared(Box::new(ck.strategy))
        }
        StrategySource::Construct => Loaded::Construct(construct_target(sc, &game)?),
    };

    let jobs: Vec<Job> = (0..models.len())
        .flat_map(|m| (0..starts.len()).flat_map(move |s| (0..rollouts).map(move |k| (m, s, k))))
        .map(|(m, s, k)| Job {
            model: m,
            start: s,
            rollout: k,
            seed: derive_seed(opts.seed, &[m as u64, s as u64, k as u64]),
        })
        .collect();
    let runs = jobs
        .par_iter()
        .map(|job| -> Result<(SteeringTrajectory<f64>, f64)> {
            let model = &models[job.model].1;
            let ctx = RolloutContext { game: &game, model, evaluator: &ev, horizon: sc.horizon };
            let start = &starts[job.start];
            let mut tracker = match belief_class {
                Some(c) => {
                    let tr = BeliefTracker::new(c.clone(), &game);
                    Some(match sc.truths.get(job.model) {
                        Some(t) if sc.model.is_none() => tr.with_truth(t.clone())?,
                        _ => tr,
                    })
                }
                None => None,
            };
            match &loaded {
                Loaded::Shared(st) => Ok((rollout(&ctx, st.as_ref(), start, job.seed, tracker.as_mut())?, f64::NAN)),
                Loaded::Construct(target) => {
                    if model.is_deterministic() && model.fixed_lr().is_some() {
                        let st = ExactPath::new(&game, model, start, target, sc.horizon)?;
                        let tr = rollout(&ctx, &st, start, job.seed, None)?;
                        Ok((tr, st.u_bound()))
                    } else {
                        let st = Contraction::new(&game, model, target)?;
                        Ok((rollout(&ctx, &st, start, job.seed, None)?, f64::NAN))
                    }
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::with_capacity(runs.len());
    let mut trajectories = Vec::with_capacity(runs.len());
    let mut u_bounds = Vec::with_capacity(runs.len());
    for (job, (tr, bound)) in jobs.iter().zip(runs) {
        let o = tr.outcome(false);
        records.push(EpisodeRecord {
            file: format!("trajectories/{}_s{}_r{}.csv", models[job.model].0, job.start, job.rollout),
            model: models[job.model].0.clone(),
            start: job.start,
            rollout: job.rollout,
            seed: job.seed,
            terminal_policy: tr.terminal().to_flat(),
            gap: o.gap,
            cost: o.cost,
            objective: o.objective,
            success: o.gap <= sc.epsilon,
            clamped: o.clamped,
        });
        trajectories.push(tr);
        u_bounds.push(bound);
    }
    Ok(Simulated { records, trajectories, max_goal: ev.max_goal(), u_bounds })
}

fn summarize(sc: &Scenario, strategy: &str, seed: u64, sim: &Simulated) -> SimulationSummary {
    let mut names: Vec<&str> = Vec::new();
    for r in &sim.records {
        if !names.contains(&r.model.as_str()) {
            names.push(&r.model);
        }
    }
    let per_model = names
        .iter()
        .map(|name| {
            let eps: Vec<&EpisodeRecord> = sim.records.iter().filter(|r| r.model == *name).collect();
            Aggregate::of(name, sc.epsilon, &eps)
        })
        .collect();
    SimulationSummary {
        schema_version: SCHEMA_VERSION,
        scenario: sc.name.clone(),
        config_hash: sc.config_hash(),
        strategy: strategy.into(),
        seed,
        epsilon: sc.epsilon,
        max_goal: sim.max_goal,
        episodes: sim.records.clone(),
        per_model,
    }
}

fn write_simulation(out: &mut OutputDir, sim: &Simulated, summary: &SimulationSummary) -> Result<()> {
    for (rec, tr) in sim.records.iter().zip(&sim.trajectories) {
        out.write(&rec.file, &trajectory_csv(tr, true))?;
    }
    out.write_json("summary.json", summary)?;
    Ok(())
}

/// Rolls out a strategy from every evaluation start against every evaluation model
/// and writes one trajectory CSV per episode plus `summary.json`.
pub fn cmd_simulate(sc: &Scenario, source: &StrategySource, opts: &RunOptions) -> Result<SimulationSummary> {
    let sim = simulate_all(sc, source, opts)?;
    let summary = summarize(sc, &source.label(), opts.seed, &sim);
    let mut out = OutputDir::create(&opts.out)?;
    write_simulation(&mut out, &sim, &summary)?;
    let seeds = sim.records.iter().map(|r| r.seed).collect();
    out.finish("simulate", &sc.name, &summary.config_hash, opts.seed, seeds)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstructReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub target: Vec<f64>,
    /// Per episode: largest constructed entry and the bound it must respect.
    pub max_entry: Vec<f64>,
    pub u_bound: Vec<f64>,
    pub within_bound: bool,
    pub max_terminal_distance: f64,
}

/// Runs the constructive strategy and checks its reward bound and terminal accuracy.
pub fn cmd_construct(sc: &Scenario, opts: &RunOptions) -> Result<(SimulationSummary, ConstructReport)> {
    let game = sc.game.build()?;
    let target = construct_target(sc, &game)?;
    let sim = simulate_all(sc, &StrategySource::Construct, opts)?;
    let summary = summarize(sc, "construct", opts.seed, &sim);
    let max_entry: Vec<f64> =
        sim.trajectories.iter().map(|tr| tr.rewards.iter().map(|u| u.max_abs()).fold(0.0, f64::max)).collect();
    let within_bound = max_entry.iter().zip(&sim.u_bounds).all(|(m, b)| b.is_nan() || *m <= b * (1.0 + 1e-12) + 1e-12);
    let max_terminal_distance =
        sim.trajectories.iter().map(|tr| tr.terminal().sup_distance(&target)).fold(0.0, f64::max);
    let report = ConstructReport {
        schema_version: SCHEMA_VERSION,
        config_hash: summary.config_hash.clone(),
        target: target.to_flat(),
        max_entry,
        u_bound: sim.u_bounds.clone(),
        within_bound,
        max_terminal_distance,
    };
    let mut out = OutputDir::create(&opts.out)?;
    write_simulation(&mut out, &sim, &summary)?;
    out.write_json("construct.json", &report)?;
    let seeds = sim.records.iter().map(|r| r.seed).collect();
    out.finish("construct", &sc.name, &summary.config_hash, opts.seed, seeds)?;
    Ok((summary, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Known,
    Belief,
    Explore,
}

impl std::str::FromStr for TrainMode {
    type Err = SteerError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known" => Ok(Self::Known),
            "belief" => Ok(Self::Belief),
            "explore" => Ok(Self::Explore),
            other => Err(SteerError::Config(format!("unknown training mode '{other}'"))),
        }
    }
}

fn known_model(sc: &Scenario) -> Result<DynamicsModel> {
    if let Some(m) = &sc.model {
        return Ok(m.clone());
    }
    match (&sc.class, sc.truths.first()) {
        (Some(c), Some(t)) => c.model(t),
        _ => Err(SteerError::Config("known-model training needs a model or a class with a truth".into())),
    }
}

fn need_class(sc: &Scenario) -> Result<&ModelClass> {
    sc.class.as_ref().ok_or_else(|| SteerError::Config("this command needs a model class".into()))
}

fn need_explore_horizon(sc: &Scenario) -> Result<usize> {
    sc.explore_horizon.ok_or_else(|| SteerError::Config("this command needs explore_horizon".into()))
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub iterations: usize,
    pub diverged: bool,
    pub kept_iteration: Option<usize>,
}

/// Trains a strategy and writes `checkpoint.json` and `training_log.csv`.
pub fn cmd_train(sc: &Scenario, mode: TrainMode, opts: &RunOptions) -> Result<TrainReport> {
    let game = sc.game.build()?;
    let trained = match mode {
        TrainMode::Known => train_known_model(
            &game,
            &known_model(sc)?,
            &sc.objective,
            sc.horizon,
            &trainer_for(&sc.trainer, opts.seed),
        )?,
        TrainMode::Belief => train_belief_strategy(
            &game,
            need_class(sc)?,
            &sc.objective,
            sc.horizon,
            true,
            &trainer_for(&sc.trainer, opts.seed),
        )?,
        TrainMode::Explore => {
            let cfg = sc.explorer.as_ref().unwrap_or(&sc.trainer);
            train_exploration_strategy(
                &game,
                need_class(sc)?,
                need_explore_horizon(sc)?,
                sc.objective.u_max,
                &trainer_for(cfg, opts.seed),
            )?
        }
    };
    let hash = sc.config_hash();
    let mut out = OutputDir::create(&opts.out)?;
    let checkpoint = out.write_json("checkpoint.json", &Checkpoint::new(trained.strategy, hash.clone()))?;
    out.write("training_log.csv", &training_log_csv(&trained.log))?;
    out.finish("train", &sc.name, &hash, opts.seed, vec![opts.seed])?;
    Ok(TrainReport {
        checkpoint,
        iterations: trained.log.len(),
        diverged: trained.diverged,
        kept_iteration: trained.kept_iteration,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FeteTruthReport {
    pub truth: String,
    pub identification_rate: f64,
    pub gap: Summary,
    pub cost: Summary,
    pub explore_cost: Summary,
    pub exploit_cost: Summary,
    pub oracle_gap: Summary,
    pub oracle_cost: Summary,
    pub episodes: Vec<FeteOutcome>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FeteReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub initial_gap: f64,
    pub truths: Vec<FeteTruthReport>,
}

/// Runs explore-then-exploit against every listed truth and compares with an oracle
/// trained on the true model.
pub fn cmd_fete(
    sc: &Scenario,
    explorer: &dyn SteeringStrategy<f64>,
    seeds: usize,
    opts: &RunOptions,
) -> Result<FeteReport> {
    let game = sc.game.build()?;
    let class = need_class(sc)?;
    let t_explore = need_explore_horizon(sc)?;
    if sc.truths.is_empty() || seeds == 0 {
        return Err(SteerError::Config("fete needs truths and at least one seed".into()));
    }
    let start = sc.eval_starts(&game, opts.seed)?.swap_remove(0);
    let ev = sc.objective.prepare(&game)?;
    let setup = FeteSetup {
        game: &game,
        class,
        objective: &sc.objective,
        horizon: sc.horizon,
        explore_horizon: t_explore,
        start: start.clone(),
    };
    let exploit_cfg =
        TrainerConfig { starts: StartRule::default(), ..trainer_for(&sc.trainer, derive_seed(opts.seed, &[1])) };
    let oracle_cfg = TrainerConfig {
        starts: StartRule::Fixed { policy: start.clone() },
        ..trainer_for(&sc.trainer, derive_seed(opts.seed, &[2]))
    };
    let mut cache = ExploitCache::new();
    let mut truths = Vec::with_capacity(sc.truths.len());
    for (ti, truth) in sc.truths.iter().enumerate() {
        let mut episodes = Vec::with_capacity(seeds);
        for k in 0..seeds {
            let s = derive_seed(opts.seed, &[3, ti as u64, k as u64]);
            episodes.push(run_fete(&setup, truth, explorer, &exploit_cfg, &mut cache, s)?);
        }
        let model = class.model(truth)?;
        let oracle = train_known_model(&game, &model, &sc.objective, sc.horizon, &oracle_cfg)?.strategy;
        let ctx = RolloutContext { game: &game, model: &model, evaluator: &ev, horizon: sc.horizon };
        let oracle_runs = (0..seeds)
            .into_par_iter()
            .map(|k| rollout(&ctx, &oracle, &start, derive_seed(opts.seed, &[4, ti as u64, k as u64]), None))
            .collect::<Result<Vec<_>>>()?;
        let col = |f: fn(&FeteOutcome) -> f64| Summary::of(&episodes.iter().map(f).collect::<Vec<_>>());
        truths.push(FeteTruthReport {
            truth: format_id(truth),
            identification_rate: episodes.iter().filter(|e| e.identified).count() as f64 / seeds as f64,
            gap: col(|e| e.gap),
            cost: col(|e| e.cost),
            explore_cost: col(|e| e.explore_cost),
            exploit_cost: col(|e| e.exploit_cost),
            oracle_gap: Summary::of(&oracle_runs.iter().map(|r| r.steering_gap()).collect::<Vec<_>>()),
            oracle_cost: Summary::of(&oracle_runs.iter().map(|r| r.steering_cost()).collect::<Vec<_>>()),
            episodes,
        });
    }
    let report = FeteReport {
        schema_version: SCHEMA_VERSION,
        config_hash: sc.config_hash(),
        initial_gap: ev.gap(&game, &start)?,
        truths,
    };
    let mut out = OutputDir::create(&opts.out)?;
    out.write_json("fete.json", &report)?;
    out.finish("fete", &sc.name, &report.config_hash, opts.seed, (0..seeds as u64).collect())?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub seeds: usize,
    pub gap: Summary,
    pub cost: Summary,
    /// Per-seed mean gap and cost over the evaluation starts.
    pub per_seed: Vec<(f64, f64)>,
}

/// Header and rows of the sweep CSV.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("beta,seeds,gap_mean,gap_ci95,cost_mean,cost_ci95\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.beta, r.seeds, r.gap.mean, r.gap.ci95, r.cost.mean, r.cost.ci95);
    }
    s
}

/// Trains one strategy per (beta, seed) on the known model and evaluates each from
/// the scenario's starts.
pub fn cmd_beta_sweep(sc: &Scenario, betas: &[f64], seeds: usize, opts: &RunOptions) -> Result<Vec<SweepRow>> {
    if betas.is_empty() || seeds == 0 {
        return Err(SteerError::Config("beta sweep needs betas and at least one seed".into()));
    }
    let game = sc.game.build()?;
    let model = known_model(sc)?;
    let starts = sc.eval_starts(&game, opts.seed)?;
    let rollouts = opts.rollouts.unwrap_or(sc.rollouts);
    let mut rows = Vec::with_capacity(betas.len());
    for (bi, &beta) in betas.iter().enumerate() {
        let obj = crate::env::SteeringObjective { beta, ..sc.objective.clone() };
        let ev = obj.prepare(&game)?;
        let mut per_seed = Vec::with_capacity(seeds);
        for k in 0..seeds {
            let cfg = trainer_for(&sc.trainer, derive_seed(opts.seed, &[bi as u64, k as u64]));
            let st = train_known_model(&game, &model, &obj, sc.horizon, &cfg)?.strategy;
            let e = crate::env::evaluate_objective(
                &st,
                std::slice::from_ref(&model),
                &game,
                sc.horizon,
                &ev,
                &starts,
                rollouts,
                derive_seed(opts.seed, &[99, k as u64]),
            )?;
            per_seed.push((e.per_model[0].gap.mean, e.per_model[0].cost.mean));
        }
        rows.push(SweepRow {
            beta,
            seeds,
            gap: Summary::of(&per_seed.iter().map(|p| p.0).collect::<Vec<_>>()),
            cost: Summary::of(&per_seed.iter().map(|p| p.1).collect::<Vec<_>>()),
            per_seed,
        });
    }
    let hash = sc.config_hash();
    let mut out = OutputDir::create(&opts.out)?;
    out.write("beta_sweep.csv", &sweep_csv(&rows))?;
    out.write_json("beta_sweep.json", &rows)?;
    out.finish("beta-sweep", &sc.name, &hash, opts.seed, (0..seeds as u64).collect())?;
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExploreBenchReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub horizon: usize,
    pub episodes: usize,
    pub trained: Option<IdentificationReport>,
    pub random: IdentificationReport,
}

/// Identification probability over steps for a trained explorer and for uniformly
/// random rewards, with the true model drawn uniformly per episode.
pub fn cmd_explore_bench(
    sc: &Scenario,
    explorer: Option<&dyn SteeringStrategy<f64>>,
    episodes: usize,
    horizon: Option<usize>,
    opts: &RunOptions,
) -> Result<ExploreBenchReport> {
    let game = sc.game.build()?;
    let class = need_class(sc)?;
    let horizon = match horizon {
        Some(h) => h,
        None => need_explore_horizon(sc)?,
    };
    let start = sc.eval_starts(&game, opts.seed)?.swap_remove(0);
    let truths: Vec<ModelId> =
        (0..episodes).map(|i| sample_model_id(class, derive_seed(opts.seed, &[5, i as u64]))).collect();
    let u_max = sc.objective.u_max;
    let trained = explorer
        .map(|st| {
            evaluate_identification(st, &game, class, &truths, horizon, &start, 1, u_max, derive_seed(opts.seed, &[6]))
        })
        .transpose()?;
    let rnd = UniformRandomStrategy { u_max };
    let random =
        evaluate_identification(&rnd, &game, class, &truths, horizon, &start, 1, u_max, derive_seed(opts.seed, &[6]))?;
    let report = ExploreBenchReport {
        schema_version: SCHEMA_VERSION,
        config_hash: sc.config_hash(),
        horizon,
        episodes,
        trained,
        random,
    };
    let mut out = OutputDir::create(&opts.out)?;
    out.write_json("explore_bench.json", &report)?;
    out.finish("explore-bench", &sc.name, &report.config_hash, opts.seed, vec![opts.seed])?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ParetoBenchReport {
    pub schema_version: u32,
    pub config_hash: String,
    /// Constant reward level and rewarded action of each strategy.
    pub strategies: Vec<(f64, usize)>,
    pub points: Vec<Vec<(f64, f64)>>,
    pub objectives: Vec<f64>,
    pub dominated_by: Vec<Vec<usize>>,
    pub best: usize,
    pub best_is_optimal: bool,
}

/// Constant strategies paying `level` on one action for every agent, for each level
/// in `levels` and each action index shared by all agents.
pub fn constant_strategies(game: &MarkovGame<f64>, levels: &[f64]) -> Vec<((f64, usize), ConstantStrategy<f64>)> {
    let shape = game.policy_shape();
    let common = *shape.actions.iter().min().expect("at least one agent");
    let mut out = Vec::new();
    for &level in levels {
        for a in 0..common {
            let mut u = SteeringReward::zeros(shape);
            for (n, h, s) in shape.blocks() {
                u.block_mut(n, h, s)[a] = level;
            }
            out.push(((level, a), ConstantStrategy(u)));
        }
    }
    out
}

/// Evaluates an enumerated set of constant strategies and reports whether the
/// objective maximizer is Pareto optimal within the set.
pub fn cmd_pareto(sc: &Scenario, levels: &[f64], opts: &RunOptions) -> Result<ParetoBenchReport> {
    let game = sc.game.build()?;
    let ev = sc.objective.prepare(&game)?;
    let models: Vec<DynamicsModel> = sc.eval_models()?.into_iter().map(|m| m.1).collect();
    let starts = sc.eval_starts(&game, opts.seed)?;
    let cands = constant_strategies(&game, levels);
    let refs: Vec<&dyn SteeringStrategy<f64>> = cands.iter().map(|c| &c.1 as &dyn SteeringStrategy<f64>).collect();
    let rollouts = opts.rollouts.unwrap_or(sc.rollouts);
    let rep = pareto_check(&refs, &models, &game, sc.horizon, &ev, &starts, rollouts, opts.seed)?;
    let best = rep.best_objective();
    let report = ParetoBenchReport {
        schema_version: SCHEMA_VERSION,
        config_hash: sc.config_hash(),
        strategies: cands.iter().map(|c| c.0).collect(),
        best_is_optimal: rep.is_optimal(best),
        best,
        points: rep.points,
        objectives: rep.objectives,
        dominated_by: rep.dominated_by,
    };
    let mut out = OutputDir::create(&opts.out)?;
    out.write_json("pareto.json", &report)?;
    out.finish("pareto", &sc.name, &report.config_hash, opts.seed, vec![opts.seed])?;
    Ok(report)
}

/// Loads a checkpoint's strategy.
pub fn load_strategy(path: &Path) -> Result<MlpStrategy> {
    Ok(Checkpoint::load(path)?.strategy)
}
