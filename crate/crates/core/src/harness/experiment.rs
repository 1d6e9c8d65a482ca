use std::path::PathBuf;

use rayon::prelude::*;

use super::{run_episode, EpisodeResult, HarnessConfig, HarnessError};
use crate::agent::{AgentConfig, DqnAgent};
use crate::control::Controller;
use crate::rng::{derive_seed, StreamTag};
use crate::scenarios::ScenarioSpec;
use crate::sim::PHASE_COUNT;

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub harness: HarnessConfig,
    pub scenario: ScenarioSpec,
    pub episodes: usize,
    pub master_seed: u64,
    /// Run replications on the rayon pool; results are identical either way.
    pub parallel: bool,
}

/// Run description written into every report file.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportMeta {
    pub scenario: String,
    pub controller: String,
    pub episode_length: f64,
    pub warmup: f64,
    pub episodes: usize,
    pub replications: usize,
    pub master_seed: u64,
}

/// An episode that was aborted; the replication carries on without it.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeFailure {
    pub episode: usize,
    pub seed: u64,
    pub message: String,
}

pub type EpisodeOutcome = Result<EpisodeResult, EpisodeFailure>;

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub meta: ReportMeta,
    /// Outer index: replication; inner: episode.
    pub replications: Vec<Vec<EpisodeOutcome>>,
}

impl ExperimentReport {
    /// `metric` for every episode of every replication; `None` for aborted episodes.
    pub fn matrix(&self, metric: impl Fn(&EpisodeResult) -> f64) -> Vec<Vec<Option<f64>>> {
        self.replications.iter().map(|rep| rep.iter().map(|o| o.as_ref().ok().map(&metric)).collect()).collect()
    }

    /// Per-replication mean of `metric` over the last `n` completed episodes.
    pub fn last_window_means(&self, n: usize, metric: impl Fn(&EpisodeResult) -> f64) -> Vec<f64> {
        self.replications
            .iter()
            .map(|rep| {
                let start = rep.len().saturating_sub(n);
                let values: Vec<f64> = rep[start..].iter().filter_map(|o| o.as_ref().ok().map(&metric)).collect();
                values.iter().sum::<f64>() / values.len().max(1) as f64
            })
            .collect()
    }

    /// Every training loss of replication `r`, in order.
    pub fn losses(&self, r: usize) -> Vec<f64> {
        self.replications[r].iter().filter_map(|o| o.as_ref().ok()).flat_map(|e| e.learning.losses.clone()).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, &EpisodeFailure)> {
        self.replications
            .iter()
            .enumerate()
            .flat_map(|(r, rep)| rep.iter().filter_map(move |o| o.as_ref().err().map(|f| (r, f))))
    }
}

pub fn replication_seed(master: u64, replication: usize) -> u64 {
    derive_seed(master, StreamTag::Replication, replication as u64)
}

/// Seed of training episode `episode` within a replication.
pub fn episode_seed(replication_seed: u64, episode: usize) -> u64 {
    derive_seed(replication_seed, StreamTag::Episode, episode as u64)
}

fn pretrain_seed(replication_seed: u64, episode: usize) -> u64 {
    derive_seed(replication_seed, StreamTag::Pretrain, episode as u64)
}

fn run_replication<C: Controller + ?Sized>(
    cfg: &ExperimentConfig,
    controller: &mut C,
    seeds: impl Fn(usize) -> u64,
) -> Vec<EpisodeOutcome> {
    (0..cfg.episodes)
        .map(|e| {
            let seed = seeds(e);
            run_episode(&cfg.harness, &cfg.scenario, controller, seed, e).map_err(|err| EpisodeFailure {
                episode: e,
                seed,
                message: err.to_string(),
            })
        })
        .collect()
}

fn run_all<C: Controller>(
    cfg: &ExperimentConfig,
    controllers: Vec<C>,
    seeds: impl Fn(u64, usize) -> u64 + Sync,
) -> Result<(ExperimentReport, Vec<C>), HarnessError> {
    cfg.harness.validate()?;
    cfg.scenario.validate()?;
    if controllers.is_empty() {
        return Err(HarnessError::Config("at least one replication is required".into()));
    }
    let controller_name = controllers[0].name();
    let job = |(r, mut c): (usize, C)| {
        let rep_seed = replication_seed(cfg.master_seed, r);
        let outcomes = run_replication(cfg, &mut c, |e| seeds(rep_seed, e));
        (outcomes, c)
    };
    let replications = controllers.len();
    let results: Vec<(Vec<EpisodeOutcome>, C)> = if cfg.parallel {
        controllers.into_par_iter().enumerate().map(job).collect()
    } else {
        controllers.into_iter().enumerate().map(job).collect()
    };
    let (outcomes, controllers): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let meta = ReportMeta {
        scenario: cfg.scenario.name.clone(),
        controller: controller_name,
        episode_length: cfg.scenario.episode_length,
        warmup: cfg.scenario.warmup,
        episodes: cfg.episodes,
        replications,
        master_seed: cfg.master_seed,
    };
    Ok((ExperimentReport { meta, replications: outcomes }, controllers))
}

/// Runs one replication per controller. Controllers keep their state
/// across the episodes of their replication, so learning agents train.
pub fn run_experiment<C: Controller>(
    cfg: &ExperimentConfig,
    controllers: Vec<C>,
) -> Result<(ExperimentReport, Vec<C>), HarnessError> {
    run_all(cfg, controllers, episode_seed)
}

#[derive(Clone, Debug)]
pub struct TransferConfig {
    pub harness: HarnessConfig,
    pub agent: AgentConfig,
    pub pretrain: ScenarioSpec,
    pub pretrain_episodes: usize,
    pub target: ScenarioSpec,
    pub target_episodes: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub parallel: bool,
    /// Starting greens of time-extension agents.
    pub fixed_greens: [f64; PHASE_COUNT],
    /// Pretrained agent to start from instead of running the pretraining phase.
    pub checkpoint_in: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TransferReport {
    pub pretrain: Option<ExperimentReport>,
    /// Pretrained agents continuing on the target scenario.
    pub transfer: ExperimentReport,
    /// Fresh agents trained on the target scenario with the same seeds.
    pub scratch: ExperimentReport,
    pub agents: Vec<DqnAgent<f64>>,
}

/// Pretrains on one scenario, then keeps training on another, next to a
/// from-scratch baseline on the target scenario.
///
/// The transferred agent starts the target phase with an empty replay
/// buffer and freshly seeded random streams, exactly as if it had been
/// saved and reloaded.
pub fn run_transfer(cfg: &TransferConfig) -> Result<TransferReport, HarnessError> {
    let fresh = |r: usize| -> Result<DqnAgent<f64>, HarnessError> {
        let mut a = DqnAgent::new(cfg.agent.clone(), replication_seed(cfg.master_seed, r))?;
        a.set_initial_greens(cfg.fixed_greens);
        Ok(a)
    };
    let pre_cfg = ExperimentConfig {
        harness: cfg.harness.clone(),
        scenario: cfg.pretrain.clone(),
        episodes: cfg.pretrain_episodes,
        master_seed: cfg.master_seed,
        parallel: cfg.parallel,
    };
    let (pretrain, mut pretrained) = match &cfg.checkpoint_in {
        Some(path) => {
            let agents = (0..cfg.replications)
                .map(|r| DqnAgent::<f64>::load_checkpoint(path, replication_seed(cfg.master_seed, r)))
                .collect::<Result<Vec<_>, _>>()?;
            (None, agents)
        }
        None => {
            let agents = (0..cfg.replications).map(fresh).collect::<Result<Vec<_>, _>>()?;
            if cfg.pretrain_episodes == 0 {
                (None, agents)
            } else {
                let (report, agents) = run_all(&pre_cfg, agents, pretrain_seed)?;
                (Some(report), agents)
            }
        }
    };
    for (r, a) in pretrained.iter_mut().enumerate() {
        a.begin_transfer(replication_seed(cfg.master_seed, r));
    }
    let target_cfg = ExperimentConfig { scenario: cfg.target.clone(), episodes: cfg.target_episodes, ..pre_cfg };
    let (transfer, agents) = run_experiment(&target_cfg, pretrained)?;
    let scratch_agents = (0..cfg.replications).map(fresh).collect::<Result<Vec<_>, _>>()?;
    let (scratch, _) = run_experiment(&target_cfg, scratch_agents)?;
    Ok(TransferReport { pretrain, transfer, scratch, agents })
}
