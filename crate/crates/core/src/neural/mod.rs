//! Small dense networks with hand-written backpropagation and Adam.

mod adam;
mod checkpoint;
mod net;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_net, write_net, CHECKPOINT_VERSION};
pub use net::{Activation, DenseNet, ForwardCache, Mode};

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("expected input of length {expected}, got {got}")]
    InputDim { expected: usize, got: usize },
    #[error("expected output gradient of length {expected}, got {got}")]
    OutputDim { expected: usize, got: usize },
    #[error("parameter buffer has length {got}, network has {expected} parameters")]
    ParamDim { expected: usize, got: usize },
    #[error("forward cache predates the latest parameter update")]
    StaleCache,
    #[error("invalid network layout: {0}")]
    Layout(String),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Huber loss with threshold `delta`.
pub fn huber<S: Scalar>(x: S, delta: S) -> S {
    let a = x.abs();
    if a <= delta {
        S::of(0.5) * x * x
    } else {
        delta * (a - S::of(0.5) * delta)
    }
}

/// Derivative of [`huber`] with respect to `x`.
pub fn huber_grad<S: Scalar>(x: S, delta: S) -> S {
    if x.abs() <= delta {
        x
    } else {
        delta * x.signum()
    }
}
