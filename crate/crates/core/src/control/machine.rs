use thiserror::Error;

use super::{ControllerDecision, PhasePlan};
use crate::sim::{Indication, Phase, SignalState, PHASE_COUNT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("phase index {0} does not exist")]
    InvalidPhase(u8),
    #[error("green {green} s for phase {phase} outside [{min}, {max}]")]
    GreenOutOfRange { phase: usize, green: f64, min: f64, max: f64 },
    #[error("green {0} s is not a whole number of ticks")]
    GreenNotTickAligned(f64),
}

#[derive(Clone, Debug, PartialEq)]
enum Mode {
    Manual,
    Cyclic { greens: [u32; PHASE_COUNT] },
}

/// Signal state machine advanced one tick at a time.
#[derive(Clone, Debug)]
pub struct SignalMachine {
    plan: PhasePlan,
    dt: f64,
    yellow_ticks: u32,
    all_red_ticks: u32,
    state: SignalState,
    ticks_in_indication: u32,
    ticks_since_green: [u64; PHASE_COUNT],
    target: Phase,
    mode: Mode,
    cycle_end: bool,
    completed_greens: Vec<(Phase, f64)>,
}

fn to_ticks(seconds: f64, dt: f64) -> Option<u32> {
    let t = seconds / dt;
    (t >= 0.0 && (t - t.round()).abs() < 1e-9).then(|| t.round() as u32)
}

impl SignalMachine {
    pub fn new(plan: PhasePlan, dt: f64) -> Self {
        let yellow_ticks = to_ticks(plan.yellow, dt).expect("yellow must be tick aligned");
        let all_red_ticks = to_ticks(plan.all_red, dt).expect("all-red must be tick aligned");
        SignalMachine {
            plan,
            dt,
            yellow_ticks,
            all_red_ticks,
            state: SignalState::green(Phase(0)),
            ticks_in_indication: 0,
            ticks_since_green: [0; PHASE_COUNT],
            target: Phase(0),
            mode: Mode::Manual,
            cycle_end: false,
            completed_greens: Vec::new(),
        }
    }

    pub fn plan(&self) -> &PhasePlan {
        &self.plan
    }

    pub fn state(&self) -> &SignalState {
        &self.state
    }

    pub fn in_clearance(&self) -> bool {
        self.state.indication != Indication::Green
    }

    pub fn cycle_greens(&self) -> Option<[f64; PHASE_COUNT]> {
        match &self.mode {
            Mode::Manual => None,
            Mode::Cyclic { greens } => Some(greens.map(|g| g as f64 * self.dt)),
        }
    }

    /// True once, right after the last phase of a cycle ends its green.
    pub fn take_cycle_end(&mut self) -> bool {
        std::mem::take(&mut self.cycle_end)
    }

    /// Realized green durations completed so far, in order.
    pub fn completed_greens(&self) -> &[(Phase, f64)] {
        &self.completed_greens
    }

    pub fn validate(&self, decision: &ControllerDecision) -> Result<(), DecisionError> {
        match decision {
            ControllerDecision::Hold => Ok(()),
            ControllerDecision::SwitchTo(p) if p.index() < PHASE_COUNT => Ok(()),
            ControllerDecision::SwitchTo(p) => Err(DecisionError::InvalidPhase(p.0)),
            ControllerDecision::SetCycleTimings(greens) => {
                for (phase, &green) in greens.iter().enumerate() {
                    if !(green >= self.plan.min_green && green <= self.plan.max_green) {
                        return Err(DecisionError::GreenOutOfRange {
                            phase,
                            green,
                            min: self.plan.min_green,
                            max: self.plan.max_green,
                        });
                    }
                    to_ticks(green, self.dt).ok_or(DecisionError::GreenNotTickAligned(green))?;
                }
                Ok(())
            }
        }
    }

    /// Applies a decision; invalid decisions leave the machine untouched.
    pub fn apply(&mut self, decision: &ControllerDecision) -> Result<(), DecisionError> {
        self.validate(decision)?;
        match *decision {
            ControllerDecision::Hold => {}
            ControllerDecision::SwitchTo(p) => {
                self.mode = Mode::Manual;
                let serving = self.state.active_phase == p && self.state.indication == Indication::Green;
                let heading = self.in_clearance() && self.target == p;
                if !serving && !heading {
                    self.start_clearance(p);
                }
            }
            ControllerDecision::SetCycleTimings(greens) => {
                let greens = greens.map(|g| to_ticks(g, self.dt).expect("validated"));
                self.mode = Mode::Cyclic { greens };
            }
        }
        Ok(())
    }

    fn start_clearance(&mut self, to: Phase) {
        if self.state.indication == Indication::Green {
            self.completed_greens.push((self.state.active_phase, self.state.phase_elapsed));
            self.state.indication = Indication::Yellow;
            self.ticks_in_indication = 0;
            self.state.phase_elapsed = 0.0;
        }
        self.target = to;
    }

    /// Moves the clock forward by one tick.
    pub fn advance(&mut self) {
        self.ticks_in_indication += 1;
        for (p, ticks) in self.ticks_since_green.iter_mut().enumerate() {
            if self.state.is_green(Phase(p as u8)) {
                *ticks = 0;
            } else {
                *ticks += 1;
            }
        }
        match self.state.indication {
            Indication::Yellow if self.ticks_in_indication >= self.yellow_ticks => {
                self.state.indication = Indication::AllRed;
                self.ticks_in_indication = 0;
            }
            Indication::AllRed if self.ticks_in_indication >= self.all_red_ticks => {
                self.state.active_phase = self.target;
                self.state.indication = Indication::Green;
                self.ticks_in_indication = 0;
            }
            Indication::Green => {
                if let Mode::Cyclic { greens } = self.mode {
                    let p = self.state.active_phase;
                    if self.ticks_in_indication >= greens[p.index()] {
                        self.state.phase_elapsed = self.ticks_in_indication as f64 * self.dt;
                        if p.index() == PHASE_COUNT - 1 {
                            self.cycle_end = true;
                        }
                        self.start_clearance(p.next());
                    }
                }
            }
            _ => {}
        }
        // yellow of a zero-length clearance falls straight through
        if self.state.indication == Indication::Yellow && self.yellow_ticks == 0 {
            self.state.indication = Indication::AllRed;
        }
        if self.state.indication == Indication::AllRed && self.all_red_ticks == 0 {
            self.state.active_phase = self.target;
            self.state.indication = Indication::Green;
        }
        self.state.phase_elapsed = self.ticks_in_indication as f64 * self.dt;
        for p in 0..PHASE_COUNT {
            self.state.time_since_green[p] =
                if self.state.is_green(Phase(p as u8)) { 0.0 } else { self.ticks_since_green[p] as f64 * self.dt };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine() -> SignalMachine {
        SignalMachine::new(PhasePlan::default(), 0.5)
    }

    #[test]
    fn switch_inserts_yellow_and_all_red() {
        let mut m = machine();
        for _ in 0..20 {
            m.advance();
        }
        m.apply(&ControllerDecision::SwitchTo(Phase(2))).unwrap();
        let mut trace = vec![];
        for _ in 0..12 {
            trace.push((m.state().active_phase, m.state().indication));
            m.advance();
        }
        assert_eq!(trace[..6].iter().filter(|s| s.1 == Indication::Yellow).count(), 6);
        assert_eq!(trace[6..8].iter().filter(|s| s.1 == Indication::AllRed).count(), 2);
        assert_eq!(trace[8], (Phase(2), Indication::Green));
        assert_eq!(m.completed_greens(), &[(Phase(0), 10.0)]);
    }

    #[test]
    fn switch_to_active_green_is_a_noop() {
        let mut m = machine();
        m.apply(&ControllerDecision::SwitchTo(Phase(0))).unwrap();
        m.advance();
        assert_eq!(m.state().indication, Indication::Green);
    }

    #[test]
    fn rejects_invalid_decisions() {
        let mut m = machine();
        assert_eq!(m.apply(&ControllerDecision::SwitchTo(Phase(4))), Err(DecisionError::InvalidPhase(4)));
        assert!(m.apply(&ControllerDecision::SetCycleTimings([5.0, 20.0, 20.0, 20.0])).is_err());
        assert!(m.apply(&ControllerDecision::SetCycleTimings([20.0, 20.0, 61.0, 20.0])).is_err());
        assert!(m.apply(&ControllerDecision::SetCycleTimings([20.25, 20.0, 20.0, 20.0])).is_err());
        assert!(m.cycle_greens().is_none());
    }

    #[test]
    fn elapsed_green_bookkeeping() {
        let mut m = machine();
        m.apply(&ControllerDecision::SetCycleTimings([10.0, 10.0, 10.0, 10.0])).unwrap();
        for _ in 0..400 {
            let s = m.state().clone();
            if s.indication == Indication::Green {
                assert_eq!(s.time_since_green[s.active_phase.index()], 0.0);
            }
            assert!(s.time_since_green.iter().all(|&g| g >= 0.0));
            m.advance();
        }
    }

    #[test]
    fn cyclic_trace_is_periodic() {
        let mut m = machine();
        let greens = [15.0, 25.0, 10.0, 20.0];
        m.apply(&ControllerDecision::SetCycleTimings(greens)).unwrap();
        let cycle_ticks = ((greens.iter().sum::<f64>() + 4.0 * 4.0) / 0.5) as usize;
        let mut trace = vec![];
        let mut ends = vec![];
        for k in 0..cycle_ticks * 4 {
            trace.push((m.state().active_phase, m.state().indication));
            m.advance();
            if m.take_cycle_end() {
                ends.push(k);
            }
        }
        for k in 0..cycle_ticks * 3 {
            assert_eq!(trace[k], trace[k + cycle_ticks], "tick {k}");
        }
        assert_eq!(ends.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>(), vec![cycle_ticks; 3]);
        let realized: Vec<f64> = m.completed_greens().iter().take(4).map(|g| g.1).collect();
        assert_eq!(realized, greens.to_vec());
    }
}
