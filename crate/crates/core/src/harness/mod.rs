//! Episode loop, multi-episode experiments, transfer runs and reports.

mod controllers;
mod episode;
mod experiment;
mod plan;
mod report;

pub use controllers::{AnyController, ControllerKind};
pub use episode::{run_episode, DecisionRecord, EpisodeResult, EpisodeTotals, MetricSeries, RejectedDecision};
pub use experiment::{
    episode_seed, replication_seed, run_experiment, run_transfer, EpisodeFailure, EpisodeOutcome, ExperimentConfig,
    ExperimentReport, ReportMeta, TransferConfig, TransferReport,
};
pub use plan::{
    builtin_plan, optimize_fixed_plan, plan_cache_key, plan_objective, resolve_fixed_plan, PlanSearchConfig,
};
pub use report::{
    aggregate_rows, compare_reports, format_table, percentile, read_aggregate, read_raw, write_aggregate, write_bands,
    write_comparison, write_loss, write_raw, AggregateRow, RawRow, ReportError, DEFAULT_WINDOWS, REPORT_SCHEMA_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, StateCaps};
use crate::control::{ActuatedParams, ControllerError, PhasePlan};
use crate::scenarios::ScenarioError;
use crate::sim::{DemandSampling, DemandTable, SimError, SimParams};

/// Everything about an episode that is not scenario- or controller-specific.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub sim: SimParams,
    pub phases: PhasePlan,
    pub actuated: ActuatedParams,
    pub demand: DemandTable,
    pub sampling: DemandSampling,
    /// Seconds of elapsed green at which the state input saturates.
    pub elapsed_cap: f64,
    /// Width of the metric series bins, seconds.
    pub metric_interval: f64,
    /// Audit conservation and spacing after every tick.
    pub check_invariants: bool,
    /// Keep every controller decision in the episode result.
    pub record_decisions: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            sim: SimParams::default(),
            phases: PhasePlan::default(),
            actuated: ActuatedParams::default(),
            demand: DemandTable::reference(),
            sampling: DemandSampling::Sampled,
            elapsed_cap: 300.0,
            metric_interval: 5.0,
            check_invariants: false,
            record_decisions: false,
        }
    }
}

impl HarnessConfig {
    pub fn caps(&self) -> StateCaps {
        StateCaps { queue_cap: self.sim.lane_capacity() as f64, elapsed_cap: self.elapsed_cap }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.sim.validate()?;
        self.demand.validate()?;
        let ticks = |s: f64| {
            let t = s / self.sim.dt;
            (t - t.round()).abs() < 1e-9
        };
        if !ticks(self.phases.yellow) || !ticks(self.phases.all_red) || !ticks(self.metric_interval) {
            return Err(HarnessError::Config("yellow, all-red and metric interval must be whole ticks".into()));
        }
        if !(self.metric_interval > 0.0) || !(self.elapsed_cap > 0.0) {
            return Err(HarnessError::Config("metric interval and elapsed cap must be positive".into()));
        }
        if !(self.phases.min_green <= self.phases.max_green) {
            return Err(HarnessError::Config("min_green exceeds max_green".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid harness configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("controller error at t = {time} s: {source}")]
    Controller { time: f64, source: ControllerError },
    #[error("invariant violated at t = {time} s: {message}")]
    Invariant { time: f64, message: String },
    #[error("{0}")]
    Unsupported(String),
}
