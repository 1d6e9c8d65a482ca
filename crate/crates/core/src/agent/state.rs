//! Observation assembly and the queue-based reward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{IntersectionGeometry, Phase, LANE_COUNT, PHASE_COUNT};

/// Length of the network input vector: one queue and one elapsed-green
/// value per phase.
pub const STATE_DIM: usize = 2 * PHASE_COUNT;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("lane {lane} reports an invalid queue reading {value}")]
    InvalidQueue { lane: usize, value: f64 },
    #[error("phase {phase} reports an invalid elapsed-green time {value}")]
    InvalidElapsed { phase: usize, value: f64 },
}

/// Normalization constants for the network input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateCaps {
    /// Vehicles; the per-lane storage capacity.
    pub queue_cap: f64,
    /// Seconds.
    pub elapsed_cap: f64,
}

impl Default for StateCaps {
    fn default() -> Self {
        StateCaps { queue_cap: 76.0, elapsed_cap: 300.0 }
    }
}

/// Per-phase maximum queue plus time since each phase was last green.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedState {
    pub phase_queue_max: [f64; PHASE_COUNT],
    pub time_since_green: [f64; PHASE_COUNT],
    pub normalized: [f64; STATE_DIM],
    caps: StateCaps,
}

impl ObservedState {
    fn assemble(phase_queue_max: [f64; PHASE_COUNT], time_since_green: [f64; PHASE_COUNT], caps: StateCaps) -> Self {
        let mut normalized = [0.0; STATE_DIM];
        for p in 0..PHASE_COUNT {
            normalized[p] = (phase_queue_max[p] / caps.queue_cap).clamp(0.0, 1.0);
            normalized[PHASE_COUNT + p] = time_since_green[p].min(caps.elapsed_cap) / caps.elapsed_cap;
        }
        ObservedState { phase_queue_max, time_since_green, normalized, caps }
    }

    /// Same observation with phase `p`'s aggregated reading replaced by zero.
    pub fn with_phase_zeroed(&self, p: Phase) -> Self {
        self.with_phase_value(p, 0.0)
    }

    /// Same observation with phase `p`'s aggregated reading replaced.
    pub fn with_phase_value(&self, p: Phase, value: f64) -> Self {
        let mut q = self.phase_queue_max;
        q[p.index()] = value;
        Self::assemble(q, self.time_since_green, self.caps)
    }

    /// `Σ_p s_p²`, the potential the reward differences.
    pub fn squared_queue_sum(&self) -> f64 {
        self.phase_queue_max.iter().map(|s| s * s).sum()
    }
}

/// Aggregates per-lane queue readings to the per-phase maximum.
pub fn build_state(
    geometry: &IntersectionGeometry,
    per_lane_queues: &[f64; LANE_COUNT],
    time_since_green: &[f64; PHASE_COUNT],
    caps: StateCaps,
) -> Result<ObservedState, StateError> {
    for (lane, &value) in per_lane_queues.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(StateError::InvalidQueue { lane, value });
        }
    }
    for (phase, &value) in time_since_green.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(StateError::InvalidElapsed { phase, value });
        }
    }
    let mut s = [0.0; PHASE_COUNT];
    for p in Phase::all() {
        s[p.index()] = geometry.phase_lanes(p).map(|l| per_lane_queues[l.index()]).fold(0.0, f64::max);
    }
    Ok(ObservedState::assemble(s, *time_since_green, caps))
}

/// Orientation of the squared-queue difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardSign {
    /// `Σ prev² − Σ cur²`: positive when queues shrink.
    #[default]
    QueueDecrease,
    /// `Σ cur² − Σ prev²`.
    QueueIncrease,
}

pub fn compute_reward(prev: &[f64; PHASE_COUNT], cur: &[f64; PHASE_COUNT], sign: RewardSign) -> f64 {
    let sq = |s: &[f64; PHASE_COUNT]| s.iter().map(|x| x * x).sum::<f64>();
    match sign {
        RewardSign::QueueDecrease => sq(prev) - sq(cur),
        RewardSign::QueueIncrease => sq(cur) - sq(prev),
    }
}
