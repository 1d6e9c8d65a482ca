use serde::{Deserialize, Serialize};

use super::demand::TimeWindow;
use super::geometry::{Direction, LaneId, LaneRef};
use super::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidentKind {
    /// No vehicles arrive from `direction` during the window.
    DemandCut,
    /// An immovable obstacle covers the stop-line end of the blocked lanes.
    LaneBlockage,
}

/// Supply-side disruption, timed in scenario seconds (after warm-up).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncidentSpec {
    pub kind: IncidentKind,
    pub direction: u8,
    #[serde(default)]
    pub blocked_lanes: Vec<LaneRef>,
    #[serde(default)]
    pub blockage_length: f64,
    pub start: f64,
    pub end: f64,
}

impl IncidentSpec {
    pub fn demand_cut(direction: u8, start: f64, end: f64) -> Self {
        IncidentSpec {
            kind: IncidentKind::DemandCut,
            direction,
            blocked_lanes: vec![],
            blockage_length: 0.0,
            start,
            end,
        }
    }

    pub fn lane_blockage(direction: u8, lanes: &[u8], length: f64, start: f64, end: f64) -> Self {
        IncidentSpec {
            kind: IncidentKind::LaneBlockage,
            direction,
            blocked_lanes: lanes.iter().map(|&l| LaneRef::new(direction, l)).collect(),
            blockage_length: length,
            start,
            end,
        }
    }

    pub fn window(&self) -> TimeWindow {
        TimeWindow::new(self.start, self.end)
    }

    pub(crate) fn resolve(&self, lane_length: f64) -> Result<ResolvedIncident, SimError> {
        let direction = Direction::new(self.direction)?;
        if !self.window().is_valid() {
            return Err(SimError::InvalidIncident("start must precede end".into()));
        }
        let lanes = self.blocked_lanes.iter().map(|l| l.resolve()).collect::<Result<Vec<_>, _>>()?;
        if self.kind == IncidentKind::LaneBlockage {
            if lanes.is_empty() {
                return Err(SimError::InvalidIncident("lane blockage without lanes".into()));
            }
            if !(self.blockage_length > 0.0 && self.blockage_length <= lane_length) {
                return Err(SimError::InvalidIncident(format!(
                    "blockage length {} outside (0, {lane_length}]",
                    self.blockage_length
                )));
            }
        }
        Ok(ResolvedIncident { kind: self.kind, direction, lanes, length: self.blockage_length, window: self.window() })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ResolvedIncident {
    pub kind: IncidentKind,
    pub direction: Direction,
    pub lanes: Vec<LaneId>,
    pub length: f64,
    /// Absolute simulation time.
    pub window: TimeWindow,
}
