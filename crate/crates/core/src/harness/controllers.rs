use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{HarnessConfig, HarnessError};
use crate::agent::{ActionSpace, AgentConfig, DqnAgent};
use crate::control::{
    ActuatedController, Cadence, Controller, ControllerDecision, ControllerError, FixedTimeController, LearningStats,
    Observation,
};
use crate::sim::{IntersectionGeometry, PHASE_COUNT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Fixed,
    Actuated,
    RlPhaseSelection,
    RlTimeExtension,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Fixed,
        ControllerKind::Actuated,
        ControllerKind::RlPhaseSelection,
        ControllerKind::RlTimeExtension,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Fixed => "fixed",
            ControllerKind::Actuated => "actuated",
            ControllerKind::RlPhaseSelection => "rl_phase_selection",
            ControllerKind::RlTimeExtension => "rl_time_extension",
        }
    }

    pub fn action_space(self) -> Option<ActionSpace> {
        match self {
            ControllerKind::RlPhaseSelection => Some(ActionSpace::PhaseSelection),
            ControllerKind::RlTimeExtension => Some(ActionSpace::TimeExtension),
            _ => None,
        }
    }

    pub fn is_learning(self) -> bool {
        self.action_space().is_some()
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ControllerKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = ControllerKind::ALL.iter().map(|k| k.as_str()).collect();
            format!("unknown controller `{s}`; expected one of {}", names.join(", "))
        })
    }
}

/// Any of the built-in controllers behind one concrete type.
#[derive(Clone, Debug)]
pub enum AnyController {
    Fixed(FixedTimeController),
    Actuated(ActuatedController),
    Rl(Box<DqnAgent<f64>>),
}

impl AnyController {
    /// Builds a controller; `fixed_greens` is the fixed plan, also used as
    /// the starting cycle of the time-extension agent.
    pub fn build(
        kind: ControllerKind,
        harness: &HarnessConfig,
        agent: &AgentConfig,
        fixed_greens: [f64; PHASE_COUNT],
        seed: u64,
    ) -> Result<Self, HarnessError> {
        Ok(match kind {
            ControllerKind::Fixed => AnyController::Fixed(FixedTimeController::new(fixed_greens)),
            ControllerKind::Actuated => {
                let geometry = IntersectionGeometry::new(harness.sim.lane_length)?;
                AnyController::Actuated(ActuatedController::new(harness.actuated.clone(), &geometry, harness.sim.dt))
            }
            ControllerKind::RlPhaseSelection | ControllerKind::RlTimeExtension => {
                let config = AgentConfig { action_space: kind.action_space().expect("rl kind"), ..agent.clone() };
                let mut a = DqnAgent::new(config, seed)?;
                a.set_initial_greens(fixed_greens);
                AnyController::Rl(Box::new(a))
            }
        })
    }

    pub fn agent(&self) -> Option<&DqnAgent<f64>> {
        match self {
            AnyController::Rl(a) => Some(a),
            _ => None,
        }
    }

    pub fn agent_mut(&mut self) -> Option<&mut DqnAgent<f64>> {
        match self {
            AnyController::Rl(a) => Some(a),
            _ => None,
        }
    }
}

impl Controller for AnyController {
    fn name(&self) -> String {
        match self {
            AnyController::Fixed(c) => c.name(),
            AnyController::Actuated(c) => c.name(),
            AnyController::Rl(c) => c.name(),
        }
    }

    fn cadence(&self) -> Cadence {
        match self {
            AnyController::Fixed(c) => c.cadence(),
            AnyController::Actuated(c) => c.cadence(),
            AnyController::Rl(c) => c.cadence(),
        }
    }

    fn begin_episode(&mut self, episode: usize) {
        match self {
            AnyController::Fixed(c) => c.begin_episode(episode),
            AnyController::Actuated(c) => c.begin_episode(episode),
            AnyController::Rl(c) => c.begin_episode(episode),
        }
    }

    fn decide(&mut self, t: f64, obs: &Observation) -> Result<ControllerDecision, ControllerError> {
        match self {
            AnyController::Fixed(c) => c.decide(t, obs),
            AnyController::Actuated(c) => c.decide(t, obs),
            AnyController::Rl(c) => c.decide(t, obs),
        }
    }

    fn end_episode(&mut self, t: f64, obs: &Observation) -> Result<(), ControllerError> {
        match self {
            AnyController::Fixed(c) => c.end_episode(t, obs),
            AnyController::Actuated(c) => c.end_episode(t, obs),
            AnyController::Rl(c) => c.end_episode(t, obs),
        }
    }

    fn take_stats(&mut self) -> LearningStats {
        match self {
            AnyController::Fixed(c) => c.take_stats(),
            AnyController::Actuated(c) => c.take_stats(),
            AnyController::Rl(c) => c.take_stats(),
        }
    }
}
