//! Signal-phase machinery and the controller callback interface.
//!
//! The harness owns the simulation clock. Controllers are only called at
//! their decision instants and answer with a [`ControllerDecision`]; the
//! [`SignalMachine`] turns decisions into indications, inserting the
//! yellow and all-red clearance between greens.

mod actuated;
mod fixed;
mod machine;

pub use actuated::{ActuatedController, ActuatedParams};
pub use fixed::{
    build_fixed_plan, FixedPlan, FixedPlanSearch, FixedTimeController, PlanCacheError, PLAN_ARTIFACT_VERSION,
};
pub use machine::{DecisionError, SignalMachine};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::ObservedState;
use crate::sim::{IntersectionGeometry, LaneId, Phase, SignalState, LANE_COUNT, PHASE_COUNT};

/// Phase sequence and clearance timings shared by every controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhasePlan {
    pub yellow: f64,
    pub all_red: f64,
    pub min_green: f64,
    pub max_green: f64,
}

impl Default for PhasePlan {
    fn default() -> Self {
        PhasePlan { yellow: 3.0, all_red: 1.0, min_green: 10.0, max_green: 60.0 }
    }
}

impl PhasePlan {
    /// Time lost to clearance between two greens.
    pub fn clearance(&self) -> f64 {
        self.yellow + self.all_red
    }

    /// Lanes released by each phase, in ring order.
    pub fn phase_lanes(geometry: &IntersectionGeometry) -> [Vec<LaneId>; PHASE_COUNT] {
        std::array::from_fn(|p| geometry.phase_lanes(Phase(p as u8)).collect())
    }

    pub fn greens_in_bounds(&self, greens: &[f64; PHASE_COUNT]) -> bool {
        greens.iter().all(|&g| g >= self.min_green && g <= self.max_green)
    }

    pub fn clamp_green(&self, g: f64) -> f64 {
        g.clamp(self.min_green, self.max_green)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerDecision {
    Hold,
    SwitchTo(Phase),
    /// Per-phase green durations for a fixed-sequence cycle, seconds.
    SetCycleTimings([f64; PHASE_COUNT]),
}

/// When the harness calls a controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cadence {
    /// Every `n` seconds of simulated time, whenever no clearance interval
    /// is running.
    Every(f64),
    /// At the start of the episode and whenever a signal cycle completes.
    CycleEnd,
}

/// What a controller sees at a decision instant.
#[derive(Clone, Debug)]
pub struct Observation {
    pub time: f64,
    pub signal: SignalState,
    /// Lane queue readings as reported by the sensors.
    pub lane_queues: [f64; LANE_COUNT],
    /// Agent state built from the sensor readings (after any fault injection).
    pub state: ObservedState,
    /// Ground-truth per-phase maximum queues.
    pub true_phase_max: [f64; PHASE_COUNT],
    /// Seconds since each lane's presence detector was last occupied.
    pub detector_gaps: [f64; LANE_COUNT],
    /// Green durations of the running cycle, if the signal is cycling.
    pub cycle_greens: Option<[f64; PHASE_COUNT]>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("controller failed: {0}")]
    Failed(String),
}

/// Summary of learning activity during one episode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningStats {
    pub train_steps: u64,
    pub mean_loss: Option<f64>,
    pub losses: Vec<f64>,
    pub total_reward: f64,
    /// `(initial, final)` squared-queue potential seen by the reward.
    pub potential: Option<(f64, f64)>,
}

/// A signal controller driven by the simulation harness.
pub trait Controller: Send {
    fn name(&self) -> String;

    fn cadence(&self) -> Cadence;

    fn begin_episode(&mut self, _episode: usize) {}

    /// Called at decision instants only; never advances simulated time.
    fn decide(&mut self, t: f64, observation: &Observation) -> Result<ControllerDecision, ControllerError>;

    /// Called once after the last tick with the final observation.
    fn end_episode(&mut self, _t: f64, _observation: &Observation) -> Result<(), ControllerError> {
        Ok(())
    }

    /// Learning activity since the last call.
    fn take_stats(&mut self) -> LearningStats {
        LearningStats::default()
    }
}
