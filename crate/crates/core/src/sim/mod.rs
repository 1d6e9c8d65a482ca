//! Deterministic microsimulation of the 4-leg intersection.
//!
//! Time advances in fixed ticks. Each tick moves every vehicle with a
//! Gipps-style safe-speed rule, discharges vehicles that cross an open stop
//! line, draws Poisson arrivals and admits waiting vehicles at lane entry.

mod demand;
mod geometry;
mod incident;
mod signal;

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use demand::{DemandProfile, DemandSampling, DemandTable, DemandTransform, TimeWindow, INTERVAL_SECONDS};
pub use geometry::{
    Direction, IntersectionGeometry, LaneId, LaneInfo, LaneRef, Od, Phase, Turn, APPROACH_COUNT, LANES_PER_APPROACH,
    LANE_COUNT, OD_COUNT, PHASE_COUNT,
};
pub use incident::{IncidentKind, IncidentSpec};
pub use signal::{Indication, LineStatus, SignalState};

use incident::ResolvedIncident;

use crate::rng::Stream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("direction {0} does not exist (expected 1..=4)")]
    NoSuchDirection(u8),
    #[error("lane {0} does not exist")]
    NoSuchLane(LaneRef),
    #[error("movement {0}-{0} is a U-turn")]
    UTurn(u8),
    #[error("invalid demand for OD {0}")]
    InvalidDemand(Od),
    #[error("invalid incident: {0}")]
    InvalidIncident(String),
    #[error("invalid simulation parameter `{0}`")]
    InvalidParameter(&'static str),
    #[error("cannot place vehicle: {0}")]
    Placement(String),
}

/// Vehicle dynamics and measurement constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Tick length, s.
    pub dt: f64,
    pub lane_length: f64,
    /// m/s.
    pub desired_speed: f64,
    /// m/s².
    pub max_accel: f64,
    /// m/s².
    pub max_decel: f64,
    /// Front-to-front distance of stopped vehicles, m.
    pub jam_spacing: f64,
    /// Reaction time used in the safe-speed rule, s.
    pub reaction_time: f64,
    /// Vehicles slower than this are queued / stopped, m/s.
    pub queue_speed_threshold: f64,
    /// Presence detector length upstream of the stop line, m.
    pub detector_length: f64,
    pub queue_measure: QueueMeasure,
}

/// Which vehicles [`Simulator::measure_queues`] counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QueueMeasure {
    /// Vehicles currently below the queued-speed threshold.
    Stopped,
    /// Vehicles that have dropped below the threshold at some point and
    /// have not yet crossed the stop line.
    #[default]
    StoppedUntilDischarge,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.5,
            lane_length: 500.0,
            desired_speed: 50.0 / 3.6,
            max_accel: 2.0,
            max_decel: 4.0,
            jam_spacing: 6.5,
            reaction_time: 1.5,
            queue_speed_threshold: 4.0 / 3.6,
            detector_length: 30.0,
            queue_measure: QueueMeasure::default(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            (self.dt, "dt"),
            (self.lane_length, "lane_length"),
            (self.desired_speed, "desired_speed"),
            (self.max_accel, "max_accel"),
            (self.max_decel, "max_decel"),
            (self.jam_spacing, "jam_spacing"),
            (self.queue_speed_threshold, "queue_speed_threshold"),
        ];
        for (v, name) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidParameter(name));
            }
        }
        if !(self.reaction_time.is_finite() && self.reaction_time >= 0.0) {
            return Err(SimError::InvalidParameter("reaction_time"));
        }
        if !(self.detector_length >= 0.0 && self.detector_length <= self.lane_length) {
            return Err(SimError::InvalidParameter("detector_length"));
        }
        if self.jam_spacing > self.lane_length {
            return Err(SimError::InvalidParameter("jam_spacing"));
        }
        Ok(())
    }

    /// Vehicles a lane can store: `floor(lane_length / jam_spacing)`.
    pub fn lane_capacity(&self) -> usize {
        (self.lane_length / self.jam_spacing).floor() as usize
    }

    /// Highest speed from which a stop within `gap` metres is guaranteed
    /// when the obstacle ahead moves at `leader_speed` and may brake hard.
    pub fn safe_speed(&self, gap: f64, leader_speed: f64) -> f64 {
        let bt = self.max_decel * self.reaction_time;
        let gap = gap.max(0.0);
        -bt + (bt * bt + leader_speed * leader_speed + 2.0 * self.max_decel * gap).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vehicle {
    pub id: u64,
    pub lane: LaneId,
    /// Front position measured from lane entry, m.
    pub position: f64,
    pub speed: f64,
    pub desired_speed: f64,
    /// When the vehicle was generated (it may wait before entering), s.
    pub entry_time: f64,
    pub od: Od,
    pub cumulative_stop_time: f64,
}

#[derive(Clone, Debug)]
struct Pending {
    id: u64,
    spawn_time: f64,
}

#[derive(Clone, Debug, Default)]
struct Lane {
    /// Front of the deque is nearest the stop line.
    vehicles: VecDeque<Vehicle>,
    entry_queue: VecDeque<Pending>,
    last_presence: f64,
}

/// Flows and accumulated costs over one tick.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TickMetrics {
    /// veh·s
    pub travel_time: f64,
    /// veh·s lost against free-flow travel.
    pub delay: f64,
    /// veh·s spent below the stopped-speed threshold.
    pub stop_time: f64,
    /// veh·m covered.
    pub distance: f64,
    /// Vehicles generated (including those held at entry).
    pub vehicles_in: u32,
    pub vehicles_out: u32,
    pub per_lane_queue: [u32; LANE_COUNT],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    Entry,
    Discharge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub vehicle_id: u64,
    pub lane: LaneId,
    pub od: Od,
}

/// Vehicle population audit; `spawned == in_network + in_entry_queues + discharged`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Population {
    pub spawned: u64,
    pub in_network: u64,
    pub in_entry_queues: u64,
    pub discharged: u64,
}

impl Population {
    pub fn is_conserved(&self) -> bool {
        self.spawned == self.in_network + self.in_entry_queues + self.discharged
    }
}

pub struct Simulator {
    params: SimParams,
    geometry: IntersectionGeometry,
    lanes: Vec<Lane>,
    capacity: usize,
    tick: u64,
    next_id: u64,
    spawned: u64,
    discharged: u64,
    incidents: Vec<ResolvedIncident>,
    events: Option<Vec<SimEvent>>,
}

impl Simulator {
    pub fn new(params: SimParams) -> Result<Self, SimError> {
        params.validate()?;
        let geometry = IntersectionGeometry::new(params.lane_length)?;
        Ok(Simulator {
            capacity: params.lane_capacity(),
            params,
            geometry,
            lanes: vec![Lane::default(); LANE_COUNT],
            tick: 0,
            next_id: 0,
            spawned: 0,
            discharged: 0,
            incidents: Vec::new(),
            events: None,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn geometry(&self) -> &IntersectionGeometry {
        &self.geometry
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Simulation clock at the start of the next tick.
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.params.dt
    }

    pub fn lane_capacity(&self) -> usize {
        self.capacity
    }

    pub fn enable_event_log(&mut self) {
        self.events.get_or_insert_with(Vec::new);
    }

    pub fn take_events(&mut self) -> Vec<SimEvent> {
        self.events.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Registers an incident whose times are shifted by `offset` seconds
    /// (the warm-up length, for scenario-relative specs).
    pub fn add_incident(&mut self, spec: &IncidentSpec, offset: f64) -> Result<(), SimError> {
        let mut resolved = spec.resolve(self.params.lane_length)?;
        resolved.window = resolved.window.shifted(offset);
        self.incidents.push(resolved);
        Ok(())
    }

    pub fn vehicles(&self, lane: LaneId) -> impl Iterator<Item = &Vehicle> {
        self.lanes[lane.index()].vehicles.iter()
    }

    pub fn entry_queue_len(&self, lane: LaneId) -> usize {
        self.lanes[lane.index()].entry_queue.len()
    }

    pub fn population(&self) -> Population {
        Population {
            spawned: self.spawned,
            in_network: self.lanes.iter().map(|l| l.vehicles.len() as u64).sum(),
            in_entry_queues: self.lanes.iter().map(|l| l.entry_queue.len() as u64).sum(),
            discharged: self.discharged,
        }
    }

    /// Puts a vehicle directly on a lane, behind all existing vehicles.
    pub fn place_vehicle(&mut self, lane: LaneId, position: f64, speed: f64) -> Result<u64, SimError> {
        let p = &self.params;
        if !(0.0..=p.lane_length).contains(&position) || !(0.0..=p.desired_speed).contains(&speed) {
            return Err(SimError::Placement(format!("position {position} / speed {speed} out of range")));
        }
        let lane_state = &self.lanes[lane.index()];
        if lane_state.vehicles.len() >= self.capacity {
            return Err(SimError::Placement(format!("lane {lane} is full")));
        }
        if let Some(last) = lane_state.vehicles.back() {
            if last.position - position < p.jam_spacing {
                return Err(SimError::Placement(format!("too close to vehicle {}", last.id)));
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        self.spawned += 1;
        let od = self.geometry.lane(lane).od;
        let v = Vehicle {
            id,
            lane,
            position,
            speed,
            desired_speed: p.desired_speed,
            entry_time: self.time(),
            od,
            cumulative_stop_time: 0.0,
        };
        self.lanes[lane.index()].vehicles.push_back(v);
        Ok(id)
    }

    /// Queued vehicles per lane, anywhere on the lane.
    pub fn measure_queues(&self) -> [u32; LANE_COUNT] {
        let threshold = self.params.queue_speed_threshold;
        let latch = self.params.queue_measure == QueueMeasure::StoppedUntilDischarge;
        let queued = |v: &Vehicle| v.speed < threshold || (latch && v.cumulative_stop_time > 0.0);
        std::array::from_fn(|i| self.lanes[i].vehicles.iter().filter(|v| queued(v)).count() as u32)
    }

    /// Seconds since each lane's presence detector was last occupied.
    pub fn detector_gaps(&self) -> [f64; LANE_COUNT] {
        let now = self.time();
        std::array::from_fn(|i| now - self.lanes[i].last_presence)
    }

    fn blocked(&self, lane: LaneId, t: f64) -> Option<f64> {
        self.incidents
            .iter()
            .filter(|i| i.kind == IncidentKind::LaneBlockage && i.window.contains(t) && i.lanes.contains(&lane))
            .map(|i| i.length)
            .reduce(f64::max)
    }

    fn inflow_cut(&self, direction: Direction, t: f64) -> bool {
        self.incidents
            .iter()
            .any(|i| i.kind == IncidentKind::DemandCut && i.direction == direction && i.window.contains(t))
    }

    /// Draws this tick's arrivals into the entry queues; returns how many.
    ///
    /// Exactly one uniform is consumed per lane per call, whatever the
    /// rates, so arrival streams stay aligned across scenarios.
    pub fn spawn_arrivals(&mut self, lane_rates: &[f64; LANE_COUNT], rng: &mut Stream) -> u32 {
        let t = self.time();
        let dt = self.params.dt;
        let mut total = 0;
        for lane in LaneId::all() {
            let u: f64 = rng.random();
            let mut rate = lane_rates[lane.index()].max(0.0);
            if self.inflow_cut(lane.direction(), t) {
                rate = 0.0;
            }
            let n = poisson_inverse(rate * dt, u);
            for _ in 0..n {
                let id = self.next_id;
                self.next_id += 1;
                self.lanes[lane.index()].entry_queue.push_back(Pending { id, spawn_time: t });
                if let Some(ev) = self.events.as_mut() {
                    ev.push(SimEvent {
                        time: t,
                        kind: EventKind::Arrival,
                        vehicle_id: id,
                        lane,
                        od: self.geometry.lane(lane).od,
                    });
                }
            }
            total += n;
        }
        self.spawned += total as u64;
        total
    }

    fn admit_entries(&mut self) {
        let p = &self.params;
        let t = self.time();
        for lane in LaneId::all() {
            let state = &mut self.lanes[lane.index()];
            let Some(head) = state.entry_queue.front() else { continue };
            if state.vehicles.len() >= self.capacity {
                continue;
            }
            let speed = match state.vehicles.back() {
                None => p.desired_speed,
                Some(last) => {
                    let gap = last.position - p.jam_spacing;
                    if gap < 0.0 {
                        continue;
                    }
                    let v = p.safe_speed(gap, last.speed).min(p.desired_speed);
                    // join a moving platoon only at a non-queued speed
                    if v < p.queue_speed_threshold && last.speed >= p.queue_speed_threshold {
                        continue;
                    }
                    v
                }
            };
            let od = self.geometry.lane(lane).od;
            state.vehicles.push_back(Vehicle {
                id: head.id,
                lane,
                position: 0.0,
                speed,
                desired_speed: p.desired_speed,
                entry_time: head.spawn_time,
                od,
                cumulative_stop_time: 0.0,
            });
            let id = head.id;
            state.entry_queue.pop_front();
            if let Some(ev) = self.events.as_mut() {
                ev.push(SimEvent { time: t, kind: EventKind::Entry, vehicle_id: id, lane, od });
            }
        }
    }

    /// Advances one tick under `signal`, with arrivals at `lane_rates`.
    pub fn step(&mut self, signal: &SignalState, lane_rates: &[f64; LANE_COUNT], rng: &mut Stream) -> TickMetrics {
        let mut m = TickMetrics::default();
        let t0 = self.time();
        let t1 = t0 + self.params.dt;
        for lane in LaneId::all() {
            let blocked = self.blocked(lane, t0);
            let line = match blocked {
                Some(_) => LineStatus::Closed,
                None => signal.line(self.geometry.lane(lane).phase),
            };
            self.advance_lane(lane, line, blocked, t1, &mut m);
        }
        let dt = self.params.dt;
        for lane in &self.lanes {
            let waiting = lane.entry_queue.len() as f64 * dt;
            m.travel_time += waiting;
            m.delay += waiting;
            m.stop_time += waiting;
        }
        m.vehicles_in = self.spawn_arrivals(lane_rates, rng);
        self.tick += 1;
        self.admit_entries();
        m.per_lane_queue = self.measure_queues();
        m
    }

    fn advance_lane(&mut self, lane: LaneId, line: LineStatus, blocked: Option<f64>, t1: f64, m: &mut TickMetrics) {
        let p = self.params.clone();
        let dt = p.dt;
        let stop_line = p.lane_length;
        let edge = blocked.map(|len| stop_line - len);
        let detector_start = stop_line - p.detector_length;
        let state = &mut self.lanes[lane.index()];
        let mut leader: Option<(f64, f64, f64)> = None;
        let mut departed = 0;
        for v in state.vehicles.iter_mut() {
            let (x0, v0) = (v.position, v.speed);
            let mut vmax = (v0 + p.max_accel * dt).min(v.desired_speed);
            let mut cap = f64::INFINITY;
            if let Some((lx, lv, lx1)) = leader {
                vmax = vmax.min(p.safe_speed(lx - x0 - p.jam_spacing, lv));
                cap = cap.min(lx1 - p.jam_spacing);
            }
            let target = match (edge, line) {
                (Some(e), _) if x0 <= e => Some(e),
                (Some(_), _) | (None, LineStatus::Closed) => Some(stop_line),
                (None, LineStatus::Yellow) if v0 * v0 <= 2.0 * p.max_decel * (stop_line - x0) => Some(stop_line),
                _ => None,
            };
            if let Some(target) = target {
                vmax = vmax.min(p.safe_speed(target - x0, 0.0));
                cap = cap.min(target);
            }
            let mut v1 = vmax.max(0.0);
            let mut x1 = x0 + v1 * dt;
            if x1 > cap {
                x1 = cap.max(x0);
                v1 = (x1 - x0) / dt;
            }
            v.position = x1;
            v.speed = v1;
            m.travel_time += dt;
            m.distance += x1 - x0;
            m.delay += (dt - (x1 - x0) / v.desired_speed).max(0.0);
            if v1 < p.queue_speed_threshold {
                m.stop_time += dt;
                v.cumulative_stop_time += dt;
            }
            if x1 >= detector_start {
                state.last_presence = t1;
            }
            if x1 > stop_line {
                departed += 1;
            }
            leader = Some((x0, v0, x1));
        }
        for _ in 0..departed {
            let v = state.vehicles.pop_front().expect("departed vehicles are at the front");
            if let Some(ev) = self.events.as_mut() {
                ev.push(SimEvent { time: t1, kind: EventKind::Discharge, vehicle_id: v.id, lane, od: v.od });
            }
        }
        self.discharged += departed as u64;
        m.vehicles_out += departed;
    }

    /// Checks ordering, spacing and stop-line bounds; returns the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let p = &self.params;
        if !self.population().is_conserved() {
            return Err(format!("population not conserved: {:?}", self.population()));
        }
        for lane in LaneId::all() {
            let vs = &self.lanes[lane.index()].vehicles;
            if vs.len() > self.capacity {
                return Err(format!("lane {lane} over capacity"));
            }
            for v in vs {
                if !(0.0..=p.lane_length).contains(&v.position) || v.speed < 0.0 {
                    return Err(format!("vehicle {} out of bounds: x={} v={}", v.id, v.position, v.speed));
                }
            }
            for pair in vs.iter().zip(vs.iter().skip(1)) {
                let (lead, follow) = pair;
                if lead.position - follow.position < p.jam_spacing - 1e-9 {
                    return Err(format!(
                        "lane {lane}: vehicles {} and {} are {:.6} m apart",
                        lead.id,
                        follow.id,
                        lead.position - follow.position
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Smallest `k` with `P(X <= k) >= u` for `X ~ Poisson(lambda)`.
fn poisson_inverse(lambda: f64, u: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let mut k = 0u32;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf && k < 10_000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        if p == 0.0 {
            break;
        }
    }
    k
}

/// Writes the arrival/entry/discharge log as CSV.
pub fn write_event_log<W: Write>(events: &[SimEvent], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_s", "event", "vehicle_id", "lane", "od"])?;
    for e in events {
        let kind = match e.kind {
            EventKind::Arrival => "arrival",
            EventKind::Entry => "entry",
            EventKind::Discharge => "discharge",
        };
        w.write_record([
            format!("{:.1}", e.time),
            kind.to_string(),
            e.vehicle_id.to_string(),
            e.lane.to_string(),
            e.od.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
