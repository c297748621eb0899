//! Learning stack: declarative reward/evaluation specs, GAE, PPO with DoF
//! masking, per-stage training, subtask chaining, and success-trajectory
//! collection.

#![forbid(unsafe_code)]

pub mod chain;
pub mod collect;
pub mod gae;
pub mod linalg;
pub mod net;
pub mod ppo;
pub mod spec;
pub mod tasks;
pub mod trainer;
pub mod trajstore;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("spec parse error: {0}")]
    SpecParse(String),
    #[error("spec invalid: {0}")]
    SpecInvalid(String),
    #[error("unresolved reference '{0}'")]
    UnresolvedReference(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite reward in env {0}")]
    NonFiniteReward(usize),
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error("stage '{0}' is not an RL stage")]
    WrongMethod(String),
    #[error("simulation error: {0}")]
    Sim(String),
    #[error("collection exhausted: {attempts} attempts, {total_env_steps} env steps, zero successes")]
    CollectionExhausted { attempts: u64, total_env_steps: u64 },
}
