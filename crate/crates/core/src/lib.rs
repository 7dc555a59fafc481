//! Steering Markovian learning agents in finite-horizon Markov games.
//!
//! The numerical core (games, values, dynamics, constructions, rollouts) is generic
//! over [`Scalar`]; belief tracking and training work in `f64`.

pub mod belief;
pub mod bench;
pub mod construct;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod game;
pub mod learn;
pub mod rng;
pub mod scalar;

pub use error::{Result, SteerError};
pub use scalar::Scalar;

pub type MarkovGame64 = game::MarkovGame<f64>;
pub type MarkovGame32 = game::MarkovGame<f32>;
pub type JointPolicy64 = game::JointPolicy<f64>;
pub type JointPolicy32 = game::JointPolicy<f32>;
pub type SteeringReward64 = env::SteeringReward<f64>;
pub type SteeringReward32 = env::SteeringReward<f32>;
pub type SteeringTrajectory64 = env::SteeringTrajectory<f64>;
