//! Gradient-free training of feedback steering strategies.

mod cem;
mod features;
mod fete;
mod mlp;
mod train;

pub use cem::{cem, CemConfig, CemResult, IterationLog, Scored};
pub use features::{FeatureEncoder, FeatureKind};
pub use fete::{run_fete, ExploitCache, FeteOutcome, FeteSetup};
pub use mlp::{Checkpoint, Mlp, MlpStrategy, OutputHead};
pub use train::{
    evaluate_identification, sample_model_id, train_belief_strategy, train_exploration_strategy, train_known_model,
    training_log_csv, IdentificationReport, Keep, StartRule, StartSampler, TrainedStrategy, TrainerConfig,
};
