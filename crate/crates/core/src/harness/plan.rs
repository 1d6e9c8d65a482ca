use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{run_episode, HarnessConfig, HarnessError};
use crate::control::{build_fixed_plan, FixedPlan, FixedPlanSearch, FixedTimeController};
use crate::rng::{derive_seed, StreamTag};
use crate::scenarios::ScenarioSpec;
use crate::sim::PHASE_COUNT;

/// How the fixed-time baseline is optimized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSearchConfig {
    /// Seeded episodes averaged per grid point.
    pub episodes: usize,
    /// Length of each search episode after warm-up; the scenario's own
    /// length when absent.
    pub episode_length: Option<f64>,
    pub seed: u64,
    pub grid: FixedPlanSearch,
}

impl Default for PlanSearchConfig {
    fn default() -> Self {
        PlanSearchConfig { episodes: 3, episode_length: None, seed: 0, grid: FixedPlanSearch::default() }
    }
}

fn search_scenario(scenario: &ScenarioSpec, cfg: &PlanSearchConfig) -> ScenarioSpec {
    match cfg.episode_length {
        Some(l) => scenario.rescaled(l),
        None => scenario.clone(),
    }
}

/// Mean travel time per vehicle-km of `greens` over the search episodes.
pub fn plan_objective(
    harness: &HarnessConfig,
    scenario: &ScenarioSpec,
    greens: &[f64; PHASE_COUNT],
    cfg: &PlanSearchConfig,
) -> Result<f64, HarnessError> {
    let scenario = search_scenario(scenario, cfg);
    let mut total = 0.0;
    for k in 0..cfg.episodes {
        let mut c = FixedTimeController::new(*greens);
        let seed = derive_seed(cfg.seed, StreamTag::PlanSearch, k as u64);
        total += run_episode(harness, &scenario, &mut c, seed, k)?.travel_time_per_km();
    }
    Ok(total / cfg.episodes.max(1) as f64)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Identifies the inputs of a search; a cached plan is reused only when
/// its key matches.
pub fn plan_cache_key(harness: &HarnessConfig, scenario: &ScenarioSpec, cfg: &PlanSearchConfig) -> String {
    let scenario = search_scenario(scenario, cfg);
    let text = format!(
        "{}\n{}\n{}",
        toml::to_string(harness).unwrap_or_default(),
        toml::to_string(&scenario).unwrap_or_default(),
        toml::to_string(cfg).unwrap_or_default()
    );
    format!(
        "{} len={} warmup={} episodes={} seed={} hash={:016x}",
        scenario.name,
        scenario.episode_length,
        scenario.warmup,
        cfg.episodes,
        cfg.seed,
        fnv1a(text.as_bytes())
    )
}

/// Exhaustive grid search over fixed plans.
pub fn optimize_fixed_plan(
    harness: &HarnessConfig,
    scenario: &ScenarioSpec,
    cfg: &PlanSearchConfig,
) -> Result<FixedPlan, HarnessError> {
    harness.validate()?;
    scenario.validate()?;
    let key = plan_cache_key(harness, scenario, cfg);
    let plan = build_fixed_plan(&cfg.grid, &harness.phases, &key, |g| {
        plan_objective(harness, scenario, g, cfg).unwrap_or(f64::INFINITY)
    });
    if !plan.objective.is_finite() {
        return Err(HarnessError::Config("no fixed plan could be evaluated".into()));
    }
    Ok(plan)
}

/// Plans shipped with the crate for the default base scenario at 1 h and 4 h.
const BUILTIN_PLANS: [&str; 2] =
    [include_str!("../../data/base_3600.plan"), include_str!("../../data/base_14400.plan")];

/// A shipped plan produced by exactly this search, if there is one.
pub fn builtin_plan(key: &str) -> Option<FixedPlan> {
    BUILTIN_PLANS.iter().filter_map(|text| FixedPlan::from_text(text).ok()).find(|p| p.key == key)
}

/// Returns a shipped or cached plan produced by the same search; otherwise
/// searches and (re)writes the cache.
pub fn resolve_fixed_plan(
    harness: &HarnessConfig,
    scenario: &ScenarioSpec,
    cfg: &PlanSearchConfig,
    cache: Option<&Path>,
) -> Result<FixedPlan, HarnessError> {
    let key = plan_cache_key(harness, scenario, cfg);
    if let Some(plan) = builtin_plan(&key) {
        return Ok(plan);
    }
    if let Some(path) = cache {
        if let Ok(plan) = FixedPlan::load(path) {
            if plan.key == key {
                return Ok(plan);
            }
        }
    }
    let plan = optimize_fixed_plan(harness, scenario, cfg)?;
    if let Some(path) = cache {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::Config(format!("plan cache: {e}")))?;
        }
        plan.save(path).map_err(|e| HarnessError::Config(format!("plan cache: {e}")))?;
    }
    Ok(plan)
}
