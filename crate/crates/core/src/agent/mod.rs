//! The dueling deep Q-learning signal controller.

mod dqn;
mod dueling;
mod replay;
mod state;

pub use dqn::{apply_extension, ActionSpace, AgentConfig, DqnAgent, TrainOutcome, AGENT_CHECKPOINT_VERSION};
pub use dueling::{argmax, dueling_backward, dueling_q, select_action, DuelingQNet};
pub use replay::{ReplayBuffer, Transition};
pub use state::{build_state, compute_reward, ObservedState, RewardSign, StateCaps, StateError, STATE_DIM};

use thiserror::Error;

use crate::neural::NeuralError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("action set is empty")]
    EmptyActionSet,
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("bad agent checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Network(#[from] NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
