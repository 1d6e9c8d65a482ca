use super::{HarnessConfig, HarnessError};
use crate::control::{
    Cadence, Controller, ControllerDecision, DecisionError, LearningStats, Observation, SignalMachine,
};
use crate::rng::{self, StreamTag};
use crate::scenarios::{FailureProcess, FailureStats, ScenarioSpec};
use crate::sim::{DemandProfile, Phase, Simulator, LANE_COUNT};

/// Costs binned over fixed intervals of post-warm-up time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricSeries {
    pub interval: f64,
    /// veh·s per bin.
    pub travel_time: Vec<f64>,
    pub delay: Vec<f64>,
    pub stop_time: Vec<f64>,
    /// veh·m per bin.
    pub distance: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeTotals {
    pub travel_time: f64,
    pub delay: f64,
    pub stop_time: f64,
    pub distance: f64,
    pub vehicles_in: u64,
    pub vehicles_out: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RejectedDecision {
    pub time: f64,
    pub decision: ControllerDecision,
    pub error: DecisionError,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRecord {
    pub time: f64,
    pub decision: ControllerDecision,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub episode: usize,
    pub seed: u64,
    pub controller: String,
    pub scenario: String,
    pub series: MetricSeries,
    /// Sums of the series bins.
    pub totals: EpisodeTotals,
    pub learning: LearningStats,
    pub rejected: Vec<RejectedDecision>,
    pub failures: Option<FailureStats>,
    /// Completed greens (phase, seconds) in order, warm-up included.
    pub realized_greens: Vec<(Phase, f64)>,
    pub decisions: Vec<DecisionRecord>,
}

fn per_km(total: f64, distance: f64) -> f64 {
    if distance > 0.0 {
        total / (distance / 1000.0)
    } else {
        0.0
    }
}

impl EpisodeResult {
    /// Seconds of travel per vehicle-kilometre.
    pub fn travel_time_per_km(&self) -> f64 {
        per_km(self.totals.travel_time, self.totals.distance)
    }

    pub fn delay_per_km(&self) -> f64 {
        per_km(self.totals.delay, self.totals.distance)
    }

    pub fn stop_time_per_km(&self) -> f64 {
        per_km(self.totals.stop_time, self.totals.distance)
    }
}

fn observe(
    cfg: &HarnessConfig,
    sim: &Simulator,
    machine: &SignalMachine,
    failures: Option<&FailureProcess>,
) -> Result<Observation, HarnessError> {
    let caps = cfg.caps();
    let truth: [f64; LANE_COUNT] = sim.measure_queues().map(f64::from);
    let signal = machine.state().clone();
    let clean = crate::agent::build_state(sim.geometry(), &truth, &signal.time_since_green, caps)
        .map_err(|e| HarnessError::Invariant { time: sim.time(), message: e.to_string() })?;
    let (lane_queues, state) = match failures {
        Some(f) => f
            .observe(sim.geometry(), &truth, &signal.time_since_green, caps)
            .map_err(|e| HarnessError::Invariant { time: sim.time(), message: e.to_string() })?,
        None => (truth, clean.clone()),
    };
    Ok(Observation {
        time: sim.time(),
        signal,
        lane_queues,
        state,
        true_phase_max: clean.phase_queue_max,
        detector_gaps: sim.detector_gaps(),
        cycle_greens: machine.cycle_greens(),
    })
}

fn whole_ticks(seconds: f64, dt: f64) -> u64 {
    ((seconds / dt).round() as u64).max(1)
}

/// Runs one episode of `scenario` under `controller`.
///
/// The controller is called only at its decision instants and never
/// advances time. Metrics cover the post-warm-up part of the episode.
pub fn run_episode<C: Controller + ?Sized>(
    cfg: &HarnessConfig,
    scenario: &ScenarioSpec,
    controller: &mut C,
    seed: u64,
    episode: usize,
) -> Result<EpisodeResult, HarnessError> {
    cfg.validate()?;
    scenario.validate()?;
    let dt = cfg.sim.dt;
    let warmup = scenario.warmup;
    let mut sim = Simulator::new(cfg.sim.clone())?;
    for incident in &scenario.incidents {
        sim.add_incident(incident, warmup)?;
    }
    let mut demand_rng = rng::stream(seed, StreamTag::Demand, 0);
    let profile = DemandProfile::build(
        sim.geometry(),
        &cfg.demand,
        cfg.sampling,
        warmup,
        scenario.episode_length,
        &scenario.demand_transforms,
        &mut demand_rng,
    )?;
    let mut warm_rng = rng::stream(seed, StreamTag::WarmupArrivals, 0);
    let mut arrival_rng = rng::stream(seed, StreamTag::Arrivals, 0);
    let mut failures =
        scenario.failure.clone().map(|spec| FailureProcess::new(spec, rng::stream(seed, StreamTag::Failures, 0)));
    let failure_ticks = failures.as_ref().map(|f| whole_ticks(f.spec().step_interval, dt));

    let mut machine = SignalMachine::new(cfg.phases.clone(), dt);
    let cadence = controller.cadence();
    let decision_ticks = match cadence {
        Cadence::Every(p) => Some(whole_ticks(p, dt)),
        Cadence::CycleEnd => None,
    };
    let warmup_ticks = (warmup / dt).round() as u64;
    let total_ticks = warmup_ticks + (scenario.episode_length / dt).round() as u64;
    let bin_ticks = whole_ticks(cfg.metric_interval, dt);
    let n_bins = (total_ticks - warmup_ticks).div_ceil(bin_ticks) as usize;
    let mut series = MetricSeries {
        interval: cfg.metric_interval,
        travel_time: vec![0.0; n_bins],
        delay: vec![0.0; n_bins],
        stop_time: vec![0.0; n_bins],
        distance: vec![0.0; n_bins],
    };
    let (mut vehicles_in, mut vehicles_out) = (0u64, 0u64);
    let mut rejected = Vec::new();
    let mut decisions = Vec::new();

    controller.begin_episode(episode);
    for tick in 0..total_ticks {
        let t = tick as f64 * dt;
        let cycle_end = machine.take_cycle_end();
        if let (Some(f), Some(every)) = (failures.as_mut(), failure_ticks) {
            if tick >= warmup_ticks && (tick - warmup_ticks) % every == 0 {
                f.step(t - warmup);
            }
        }
        let decide = match decision_ticks {
            Some(every) => tick % every == 0 && !machine.in_clearance(),
            None => tick == 0 || cycle_end,
        };
        if decide {
            let obs = observe(cfg, &sim, &machine, failures.as_ref())?;
            let decision = controller.decide(t, &obs).map_err(|source| HarnessError::Controller { time: t, source })?;
            if cfg.record_decisions {
                decisions.push(DecisionRecord { time: t, decision });
            }
            if let Err(error) = machine.apply(&decision) {
                rejected.push(RejectedDecision { time: t, decision, error });
            }
        }
        let rates = profile.lane_rates(t);
        let stream = if tick < warmup_ticks { &mut warm_rng } else { &mut arrival_rng };
        let m = sim.step(machine.state(), &rates, stream);
        machine.advance();
        if cfg.check_invariants {
            let pop = sim.population();
            if !pop.is_conserved() {
                return Err(HarnessError::Invariant { time: t, message: format!("population not conserved: {pop:?}") });
            }
            sim.check_invariants().map_err(|message| HarnessError::Invariant { time: t, message })?;
        }
        if tick >= warmup_ticks {
            let bin = ((tick - warmup_ticks) / bin_ticks) as usize;
            series.travel_time[bin] += m.travel_time;
            series.delay[bin] += m.delay;
            series.stop_time[bin] += m.stop_time;
            series.distance[bin] += m.distance;
            vehicles_in += m.vehicles_in as u64;
            vehicles_out += m.vehicles_out as u64;
        }
    }
    let end = total_ticks as f64 * dt;
    let obs = observe(cfg, &sim, &machine, failures.as_ref())?;
    controller.end_episode(end, &obs).map_err(|source| HarnessError::Controller { time: end, source })?;

    let totals = EpisodeTotals {
        travel_time: series.travel_time.iter().sum(),
        delay: series.delay.iter().sum(),
        stop_time: series.stop_time.iter().sum(),
        distance: series.distance.iter().sum(),
        vehicles_in,
        vehicles_out,
    };
    Ok(EpisodeResult {
        episode,
        seed,
        controller: controller.name(),
        scenario: scenario.name.clone(),
        series,
        totals,
        learning: controller.take_stats(),
        rejected,
        failures: failures.map(|f| f.stats().clone()),
        realized_greens: machine.completed_greens().to_vec(),
        decisions,
    })
}
