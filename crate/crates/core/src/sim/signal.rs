use serde::{Deserialize, Serialize};

use super::geometry::{Phase, PHASE_COUNT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indication {
    Green,
    Yellow,
    AllRed,
}

/// What the stop line of a phase looks like to approaching drivers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineStatus {
    Open,
    /// Stop if a comfortable stop is still possible.
    Yellow,
    Closed,
}

/// Instantaneous signal indication plus elapsed-green bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalState {
    pub active_phase: Phase,
    pub indication: Indication,
    /// Seconds since the current indication started.
    pub phase_elapsed: f64,
    /// Seconds since each phase last showed green; zero while green.
    pub time_since_green: [f64; PHASE_COUNT],
}

impl SignalState {
    pub fn green(phase: Phase) -> Self {
        SignalState {
            active_phase: phase,
            indication: Indication::Green,
            phase_elapsed: 0.0,
            time_since_green: [0.0; PHASE_COUNT],
        }
    }

    pub fn all_red() -> Self {
        SignalState { indication: Indication::AllRed, ..SignalState::green(Phase(0)) }
    }

    pub fn line(&self, phase: Phase) -> LineStatus {
        if phase != self.active_phase {
            return LineStatus::Closed;
        }
        match self.indication {
            Indication::Green => LineStatus::Open,
            Indication::Yellow => LineStatus::Yellow,
            Indication::AllRed => LineStatus::Closed,
        }
    }

    pub fn is_green(&self, phase: Phase) -> bool {
        self.active_phase == phase && self.indication == Indication::Green
    }
}
