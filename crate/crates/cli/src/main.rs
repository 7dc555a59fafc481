//! `steer`: command-line experiments for steering Markovian agents.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use steering::bench::{
    cmd_beta_sweep, cmd_construct, cmd_explore_bench, cmd_fete, cmd_pareto, cmd_simulate, cmd_train, load_strategy,
    RunOptions, Scenario, StrategySource, TrainMode,
};
use steering::env::SteeringStrategy;
use steering::SteerError;

#[derive(Parser, Debug)]
#[command(name = "steer", version, about = "Steer learning agents in Markov games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Built-in scenario name or path to a scenario JSON file.
    scenario: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Episodes per (model, start) pair; defaults to the scenario's value.
    #[arg(long)]
    rollouts: Option<usize>,
    /// Dotted `key=value` override applied to the scenario, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the resolved scenario as JSON.
    Scenario {
        #[command(flatten)]
        common: Common,
    },
    /// Roll out a strategy and write trajectory CSVs and a summary.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// `zero`, `construct`, or a checkpoint path.
        #[arg(long, default_value = "zero")]
        strategy: String,
    },
    /// Train a strategy and write a checkpoint and a training log.
    Train {
        #[command(flatten)]
        common: Common,
        /// `known`, `belief` or `explore`.
        #[arg(long, default_value = "known")]
        mode: String,
    },
    /// Explore, estimate the model, then exploit; compare with an oracle.
    Fete {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        explorer: PathBuf,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Train at several regularization weights and report gap and cost.
    BetaSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "10,25,100")]
        betas: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Run the constructive strategy and check its reward bound.
    Construct {
        #[command(flatten)]
        common: Common,
    },
    /// Identification probability of an explorer and of random rewards.
    ExploreBench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        explorer: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Pareto check over constant-reward strategies.
    Pareto {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2,3,4,5,7.5,10")]
        levels: Vec<f64>,
    },
}

fn prepare(common: &Common) -> Result<(Scenario, RunOptions), SteerError> {
    let sc = Scenario::load(&common.scenario)?.with_overrides(&common.overrides)?;
    let opts = RunOptions { seed: common.seed, out: common.out.clone(), rollouts: common.rollouts };
    Ok((sc, opts))
}

fn run(cli: Cli) -> Result<serde_json::Value, SteerError> {
    Ok(match cli.command {
        Command::Scenario { common } => serde_json::to_value(prepare(&common)?.0)?,
        Command::Simulate { common, strategy } => {
            let (sc, opts) = prepare(&common)?;
            let source = match strategy.as_str() {
                "zero" => StrategySource::Zero,
                "construct" => StrategySource::Construct,
                path => StrategySource::Checkpoint(PathBuf::from(path)),
            };
            let s = cmd_simulate(&sc, &source, &opts)?;
            json!({ "out": opts.out, "config_hash": s.config_hash, "per_model": s.per_model })
        }
        Command::Train { common, mode } => {
            let (sc, opts) = prepare(&common)?;
            let mode: TrainMode = mode.parse()?;
            serde_json::to_value(cmd_train(&sc, mode, &opts)?)?
        }
        Command::Fete { common, explorer, seeds } => {
            let (sc, opts) = prepare(&common)?;
            let st = load_strategy(&explorer)?;
            let r = cmd_fete(&sc, &st, seeds, &opts)?;
            let rows: Vec<_> = r
                .truths
                .iter()
                .map(|t| {
                    json!({
                        "truth": t.truth, "identification_rate": t.identification_rate,
                        "gap": t.gap.mean, "cost": t.cost.mean,
                        "oracle_gap": t.oracle_gap.mean, "oracle_cost": t.oracle_cost.mean,
                    })
                })
                .collect();
            json!({ "out": opts.out, "initial_gap": r.initial_gap, "truths": rows })
        }
        Command::BetaSweep { common, betas, seeds } => {
            let (sc, opts) = prepare(&common)?;
            serde_json::to_value(cmd_beta_sweep(&sc, &betas, seeds, &opts)?)?
        }
        Command::Construct { common } => {
            let (sc, opts) = prepare(&common)?;
            let (s, r) = cmd_construct(&sc, &opts)?;
            json!({
                "out": opts.out, "within_bound": r.within_bound,
                "max_terminal_distance": r.max_terminal_distance, "per_model": s.per_model,
            })
        }
        Command::ExploreBench { common, explorer, episodes, horizon } => {
            let (sc, opts) = prepare(&common)?;
            let st = explorer.as_deref().map(load_strategy).transpose()?;
            let st_ref = st.as_ref().map(|s| s as &dyn SteeringStrategy<f64>);
            let r = cmd_explore_bench(&sc, st_ref, episodes, horizon, &opts)?;
            json!({
                "out": opts.out,
                "trained_rate": r.trained.as_ref().map(|t| t.rate),
                "random_rate": r.random.rate,
            })
        }
        Command::Pareto { common, levels } => {
            let (sc, opts) = prepare(&common)?;
            let r = cmd_pareto(&sc, &levels, &opts)?;
            json!({ "out": opts.out, "best": r.best, "best_is_optimal": r.best_is_optimal })
        }
    })
}

fn exit_code(err: &SteerError) -> u8 {
    match err {
        SteerError::Numeric(_) | SteerError::DegeneratePosterior => 3,
        SteerError::Io(_) => 1,
        _ => 2,
    }
}

fn configure_threads() -> Result<(), SteerError> {
    if let Ok(v) = std::env::var("STEER_THREADS") {
        let n: usize =
            v.parse().map_err(|_| SteerError::Config(format!("STEER_THREADS must be a count, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| SteerError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json value"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
