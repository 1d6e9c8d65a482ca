use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{build_state, ObservedState, StateCaps, StateError};
use crate::rng::Stream;
use crate::sim::{IntersectionGeometry, LaneRef, Phase, LANE_COUNT, PHASE_COUNT};

/// Where faulty readings enter the state computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    /// Individual lane sensors fail; the per-phase max sees zeros.
    #[default]
    BeforeMax,
    /// Whole phase groups fail; the aggregated reading is zero.
    AfterMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureModel {
    /// Independent two-state chain per sensor.
    Markov { p_fail: f64, p_recover: f64 },
    /// One sensor (lane or phase group, depending on the injection point)
    /// fails for a fixed window.
    FixedWindow { start: f64, end: f64, lane: LaneRef, phase: u8 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSpec {
    pub injection: Injection,
    pub model: FailureModel,
    /// Reading reported by a failed sensor.
    #[serde(default)]
    pub failed_value: f64,
    /// Seconds between failure-process steps.
    #[serde(default = "default_step")]
    pub step_interval: f64,
}

fn default_step() -> f64 {
    10.0
}

impl FailureSpec {
    pub fn markov(injection: Injection, p_fail: f64, p_recover: f64) -> Self {
        FailureSpec {
            injection,
            model: FailureModel::Markov { p_fail, p_recover },
            failed_value: 0.0,
            step_interval: default_step(),
        }
    }

    /// Fixed-window failure of lane 4 of direction 2, or of phase group 2.
    pub fn fixed_window(injection: Injection, start: f64, end: f64) -> Self {
        FailureSpec {
            injection,
            model: FailureModel::FixedWindow { start, end, lane: LaneRef::new(2, 4), phase: 2 },
            failed_value: 0.0,
            step_interval: default_step(),
        }
    }

    pub fn sensor_count(&self) -> usize {
        match self.injection {
            Injection::BeforeMax => LANE_COUNT,
            Injection::AfterMax => PHASE_COUNT,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if !(self.failed_value >= 0.0 && self.failed_value.is_finite()) {
            return Err("failed_value must be a non-negative reading".into());
        }
        if !(self.step_interval > 0.0) {
            return Err("step_interval must be positive".into());
        }
        match &self.model {
            FailureModel::Markov { p_fail, p_recover } => {
                if !(0.0..=1.0).contains(p_fail) || !(0.0..=1.0).contains(p_recover) {
                    return Err("failure probabilities must lie in [0, 1]".into());
                }
            }
            FailureModel::FixedWindow { start, end, lane, phase } => {
                if !(start < end) {
                    return Err("failure window must have start < end".into());
                }
                lane.resolve().map_err(|e| e.to_string())?;
                if !(1..=PHASE_COUNT as u8).contains(phase) {
                    return Err(format!("phase group {phase} does not exist"));
                }
            }
        }
        Ok(())
    }
}

/// Long-run counters of a failure process.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FailureStats {
    pub steps: u64,
    pub sensor_steps: u64,
    pub failed_sensor_steps: u64,
    /// Failure bursts that ended in recovery.
    pub completed_bursts: u64,
    pub completed_burst_steps: u64,
}

impl FailureStats {
    pub fn failed_fraction(&self) -> f64 {
        self.failed_sensor_steps as f64 / self.sensor_steps.max(1) as f64
    }

    pub fn mean_burst(&self) -> f64 {
        self.completed_burst_steps as f64 / self.completed_bursts.max(1) as f64
    }
}

/// Per-episode sensor state; all sensors start healthy.
#[derive(Clone, Debug)]
pub struct FailureProcess {
    spec: FailureSpec,
    failed: Vec<bool>,
    run: Vec<u64>,
    rng: Stream,
    stats: FailureStats,
}

impl FailureProcess {
    pub fn new(spec: FailureSpec, rng: Stream) -> Self {
        let n = spec.sensor_count();
        FailureProcess { spec, failed: vec![false; n], run: vec![0; n], rng, stats: FailureStats::default() }
    }

    pub fn spec(&self) -> &FailureSpec {
        &self.spec
    }

    pub fn failed(&self) -> &[bool] {
        &self.failed
    }

    pub fn stats(&self) -> &FailureStats {
        &self.stats
    }

    /// Advances the process to scenario time `t`. Markov chains draw one
    /// uniform per sensor on every step.
    pub fn step(&mut self, t: f64) {
        match self.spec.model {
            FailureModel::Markov { p_fail, p_recover } => {
                for i in 0..self.failed.len() {
                    let u: f64 = self.rng.random();
                    let was = self.failed[i];
                    self.failed[i] = if was { u >= p_recover } else { u < p_fail };
                    if was && !self.failed[i] {
                        self.stats.completed_bursts += 1;
                        self.stats.completed_burst_steps += self.run[i];
                        self.run[i] = 0;
                    }
                }
            }
            FailureModel::FixedWindow { start, end, lane, phase } => {
                let target = match self.spec.injection {
                    Injection::BeforeMax => lane.resolve().map(|l| l.index()).unwrap_or(0),
                    Injection::AfterMax => (phase - 1) as usize,
                };
                for (i, f) in self.failed.iter_mut().enumerate() {
                    *f = i == target && t >= start && t < end;
                }
            }
        }
        self.stats.steps += 1;
        for (f, run) in self.failed.iter().zip(&mut self.run) {
            if *f {
                *run += 1;
            }
        }
        self.stats.sensor_steps += self.failed.len() as u64;
        self.stats.failed_sensor_steps += self.failed.iter().filter(|&&f| f).count() as u64;
    }

    /// Faulted lane readings and the state the agent observes. The true
    /// readings are not modified.
    pub fn observe(
        &self,
        geometry: &IntersectionGeometry,
        lane_queues: &[f64; LANE_COUNT],
        time_since_green: &[f64; PHASE_COUNT],
        caps: StateCaps,
    ) -> Result<([f64; LANE_COUNT], ObservedState), StateError> {
        apply_failures(
            self.spec.injection,
            &self.failed,
            self.spec.failed_value,
            geometry,
            lane_queues,
            time_since_green,
            caps,
        )
    }
}

/// Replaces failed readings before or after the per-phase max.
pub fn apply_failures(
    injection: Injection,
    failed: &[bool],
    failed_value: f64,
    geometry: &IntersectionGeometry,
    lane_queues: &[f64; LANE_COUNT],
    time_since_green: &[f64; PHASE_COUNT],
    caps: StateCaps,
) -> Result<([f64; LANE_COUNT], ObservedState), StateError> {
    match injection {
        Injection::BeforeMax => {
            let mut faulted = *lane_queues;
            for (q, &f) in faulted.iter_mut().zip(failed) {
                if f {
                    *q = failed_value;
                }
            }
            Ok((faulted, build_state(geometry, &faulted, time_since_green, caps)?))
        }
        Injection::AfterMax => {
            let mut state = build_state(geometry, lane_queues, time_since_green, caps)?;
            let mut faulted = *lane_queues;
            for p in Phase::all() {
                if failed[p.index()] {
                    state = state.with_phase_value(p, failed_value);
                    for l in geometry.phase_lanes(p) {
                        faulted[l.index()] = failed_value;
                    }
                }
            }
            Ok((faulted, state))
        }
    }
}
