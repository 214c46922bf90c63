//! Sequence reinforcement learning.
//!
//! An actor emits `J` actions from a single observation; a learned dynamics
//! model imagines the intermediate states so that twin soft critics can score
//! every action of the sequence. Evaluation measures how returns degrade as
//! the decision interval grows, summarized as a frequency-averaged score.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the precision.

pub mod actor;
pub mod agent;
pub mod checkpoint;
pub mod config;
pub mod critic;
pub mod dynamics;
pub mod envs;
pub mod error;
pub mod eval;
pub mod latent;
pub mod nets;
pub mod replay;
pub mod rng;
pub mod scalar;
pub mod trainer;
pub mod transition;

pub use error::{Result, SrlError};
pub use scalar::Scalar;

pub type Agent32 = agent::AgentBundle<f32>;
pub type Agent64 = agent::AgentBundle<f64>;
pub type Trainer32 = trainer::Trainer<f32>;
pub type Trainer64 = trainer::Trainer<f64>;
pub type Policy32 = actor::SequencePolicy<f32>;
pub type Policy64 = actor::SequencePolicy<f64>;
pub type Critic32 = critic::TwinCritic<f32>;
pub type Critic64 = critic::TwinCritic<f64>;
pub type Model32 = dynamics::DynamicsModel<f32>;
pub type Model64 = dynamics::DynamicsModel<f64>;
