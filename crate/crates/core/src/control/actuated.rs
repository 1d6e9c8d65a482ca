use serde::{Deserialize, Serialize};

use super::{Cadence, Controller, ControllerDecision, ControllerError, Observation, PhasePlan};
use crate::sim::{IntersectionGeometry, LaneId, Phase, PHASE_COUNT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatedParams {
    pub min_green: f64,
    pub max_green: f64,
    /// Seconds without a detector actuation after which the green gaps out.
    pub passage_gap: f64,
}

impl Default for ActuatedParams {
    fn default() -> Self {
        ActuatedParams { min_green: 10.0, max_green: 60.0, passage_gap: 3.0 }
    }
}

/// Single-ring gap-out controller serving the phases in fixed order.
#[derive(Clone, Debug)]
pub struct ActuatedController {
    params: ActuatedParams,
    phase_lanes: [Vec<LaneId>; PHASE_COUNT],
    dt: f64,
}

impl ActuatedController {
    pub fn new(params: ActuatedParams, geometry: &IntersectionGeometry, dt: f64) -> Self {
        ActuatedController { params, phase_lanes: PhasePlan::phase_lanes(geometry), dt }
    }

    fn gap(&self, phase: Phase, obs: &Observation) -> f64 {
        self.phase_lanes[phase.index()].iter().map(|l| obs.detector_gaps[l.index()]).fold(f64::INFINITY, f64::min)
    }
}

impl Controller for ActuatedController {
    fn name(&self) -> String {
        "actuated".into()
    }

    fn cadence(&self) -> Cadence {
        Cadence::Every(self.dt)
    }

    fn decide(&mut self, _t: f64, obs: &Observation) -> Result<ControllerDecision, ControllerError> {
        let signal = &obs.signal;
        if !signal.is_green(signal.active_phase) || signal.phase_elapsed < self.params.min_green {
            return Ok(ControllerDecision::Hold);
        }
        let next = signal.active_phase.next();
        if signal.phase_elapsed >= self.params.max_green || self.gap(signal.active_phase, obs) > self.params.passage_gap
        {
            return Ok(ControllerDecision::SwitchTo(next));
        }
        Ok(ControllerDecision::Hold)
    }
}
