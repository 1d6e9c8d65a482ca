//! Traffic-signal control benchmark: a single-intersection microsimulator,
//! classical and deep Q-learning controllers, scenario library and
//! experiment harness.

pub mod agent;
pub mod config;
pub mod control;
pub mod harness;
pub mod neural;
pub mod rng;
pub mod scalar;
pub mod scenarios;
pub mod sim;

pub use scalar::Scalar;

/// Double-precision Q-learning agent, the one the harness drives.
pub type Agent = agent::DqnAgent<f64>;
pub type Net = neural::DenseNet<f64>;
pub type QNet = agent::DuelingQNet<f64>;
pub type Adam = neural::AdamState<f64>;
pub type Agent32 = agent::DqnAgent<f32>;
pub type Net32 = neural::DenseNet<f32>;
