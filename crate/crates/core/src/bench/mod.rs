//! Scenario registry, experiment commands and their CSV/JSON outputs.

mod commands;
mod output;
mod scenario;

pub use commands::{
    cmd_beta_sweep, cmd_construct, cmd_explore_bench, cmd_fete, cmd_pareto, cmd_simulate, cmd_train,
    constant_strategies, construct_target, goal_maximizer, load_strategy, sweep_csv, ConstructReport,
    ExploreBenchReport, FeteReport, FeteTruthReport, ParetoBenchReport, RunOptions, StrategySource, SweepRow,
    TrainMode, TrainReport,
};
pub use output::{table_columns, trajectory_csv, Aggregate, EpisodeRecord, Manifest, OutputDir, SimulationSummary};
pub use scenario::{format_id, GameSource, Scenario, SCHEMA_VERSION};
