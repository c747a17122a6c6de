//! Self-contained deep RL stack: MLPs with manual backpropagation, Gaussian and
//! categorical policy heads, GAE and the PPO clipped-surrogate update.

mod checkpoint;
mod gae;
mod mlp;
mod policy;
mod ppo;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, RngState};
pub use gae::gae;
pub use mlp::{ForwardCache, Mlp};
pub use policy::{Action, HeadKind, Policy, LOG_STD_MAX, LOG_STD_MIN};
pub use ppo::{
    clipped_surrogate, ppo_loss, ppo_update, MinibatchLoss, PpoConfig, PpoDiagnostics,
    RolloutBuffer, TrainingBatch,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite loss during PPO update")]
    NonFiniteLoss,
    #[error("rollout buffer is empty")]
    EmptyBuffer,
}
