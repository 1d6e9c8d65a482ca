use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Cadence, Controller, ControllerDecision, ControllerError, Observation, PhasePlan};
use crate::sim::PHASE_COUNT;

pub const PLAN_ARTIFACT_VERSION: u32 = 1;
const PLAN_MAGIC: &str = "signalbench-fixed-plan";

/// Optimized per-phase greens and the objective they achieved.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPlan {
    pub greens: [f64; PHASE_COUNT],
    pub objective: f64,
    /// Free-form description of the search setup that produced the plan.
    pub key: String,
}

impl FixedPlan {
    pub fn cycle_length(&self, plan: &PhasePlan) -> f64 {
        self.greens.iter().sum::<f64>() + PHASE_COUNT as f64 * plan.clearance()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{PLAN_MAGIC} v{PLAN_ARTIFACT_VERSION}\n");
        writeln!(s, "key = {}", self.key).unwrap();
        let greens: Vec<String> = self.greens.iter().map(|g| g.to_string()).collect();
        writeln!(s, "greens = {}", greens.join(" ")).unwrap();
        writeln!(s, "objective = {}", self.objective).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self, PlanCacheError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(PlanCacheError::Malformed("empty file".into()))?;
        let version = header
            .strip_prefix(PLAN_MAGIC)
            .and_then(|v| v.trim().strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| PlanCacheError::Malformed(format!("bad header {header:?}")))?;
        if version != PLAN_ARTIFACT_VERSION {
            return Err(PlanCacheError::Version { found: version, expected: PLAN_ARTIFACT_VERSION });
        }
        let (mut key, mut greens, mut objective) = (None, None, None);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (name, value) =
                line.split_once(" = ").ok_or_else(|| PlanCacheError::Malformed(format!("bad line {line:?}")))?;
            match name {
                "key" => key = Some(value.to_string()),
                "greens" => {
                    let g: Vec<f64> = value
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<Result<_, _>>()
                        .map_err(|_| PlanCacheError::Malformed(format!("bad greens {value:?}")))?;
                    greens = Some(
                        <[f64; PHASE_COUNT]>::try_from(g)
                            .map_err(|_| PlanCacheError::Malformed("expected four greens".into()))?,
                    );
                }
                "objective" => {
                    objective = Some(value.parse().map_err(|_| PlanCacheError::Malformed("bad objective".into()))?)
                }
                other => return Err(PlanCacheError::Malformed(format!("unknown field {other:?}"))),
            }
        }
        match (key, greens, objective) {
            (Some(key), Some(greens), Some(objective)) => Ok(FixedPlan { greens, objective, key }),
            _ => Err(PlanCacheError::Malformed("missing field".into())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), PlanCacheError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PlanCacheError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Error)]
pub enum PlanCacheError {
    #[error("plan artifact version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("malformed plan artifact: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Grid over per-phase greens used by [`build_fixed_plan`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPlanSearch {
    pub green_min: f64,
    pub green_max: f64,
    pub green_step: f64,
    pub cycle_min: f64,
    pub cycle_max: f64,
}

impl Default for FixedPlanSearch {
    fn default() -> Self {
        FixedPlanSearch { green_min: 10.0, green_max: 60.0, green_step: 5.0, cycle_min: 40.0, cycle_max: 120.0 }
    }
}

impl FixedPlanSearch {
    /// All admissible green vectors in lexicographic order.
    pub fn grid(&self, plan: &PhasePlan) -> Vec<[f64; PHASE_COUNT]> {
        let steps = ((self.green_max - self.green_min) / self.green_step).round() as usize;
        let values: Vec<f64> = (0..=steps).map(|k| self.green_min + k as f64 * self.green_step).collect();
        let lost = PHASE_COUNT as f64 * plan.clearance();
        let mut out = Vec::new();
        for &a in &values {
            for &b in &values {
                for &c in &values {
                    for &d in &values {
                        let cycle = a + b + c + d + lost;
                        if cycle >= self.cycle_min - 1e-9 && cycle <= self.cycle_max + 1e-9 {
                            out.push([a, b, c, d]);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Exhaustive search minimizing `objective` over the grid.
///
/// Ties keep the grid point that comes first lexicographically, i.e. the one
/// giving the lowest-indexed phases the shortest greens.
pub fn build_fixed_plan<F>(search: &FixedPlanSearch, plan: &PhasePlan, key: &str, objective: F) -> FixedPlan
where
    F: Fn(&[f64; PHASE_COUNT]) -> f64 + Sync,
{
    let grid = search.grid(plan);
    let scores: Vec<f64> = grid.par_iter().map(|g| objective(g)).collect();
    let (best, score) =
        scores.iter().enumerate().fold((0, f64::INFINITY), |(bi, bs), (i, &s)| if s < bs { (i, s) } else { (bi, bs) });
    FixedPlan { greens: grid[best], objective: score, key: key.to_string() }
}

/// Open-loop controller replaying one cycle of fixed greens.
#[derive(Clone, Debug)]
pub struct FixedTimeController {
    greens: [f64; PHASE_COUNT],
}

impl FixedTimeController {
    pub fn new(greens: [f64; PHASE_COUNT]) -> Self {
        FixedTimeController { greens }
    }

    pub fn greens(&self) -> [f64; PHASE_COUNT] {
        self.greens
    }
}

impl Controller for FixedTimeController {
    fn name(&self) -> String {
        "fixed".into()
    }

    fn cadence(&self) -> Cadence {
        Cadence::CycleEnd
    }

    fn decide(&mut self, _t: f64, _obs: &Observation) -> Result<ControllerDecision, ControllerError> {
        Ok(ControllerDecision::SetCycleTimings(self.greens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_respects_cycle_bounds() {
        let plan = PhasePlan::default();
        let grid = FixedPlanSearch::default().grid(&plan);
        assert_eq!(grid.len(), 1800);
        for g in &grid {
            let cycle: f64 = g.iter().sum::<f64>() + 16.0;
            assert!((40.0..=120.0).contains(&cycle));
            assert!(g.iter().all(|&x| (10.0..=60.0).contains(&x) && x % 5.0 == 0.0));
        }
    }

    #[test]
    fn search_returns_grid_minimum() {
        let plan = PhasePlan::default();
        let search = FixedPlanSearch::default();
        let target = [35.0, 20.0, 10.0, 25.0];
        let f = |g: &[f64; 4]| g.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let best = build_fixed_plan(&search, &plan, "quadratic", f);
        assert_eq!(best.greens, target);
        assert!(search.grid(&plan).iter().all(|g| f(g) >= best.objective));
    }

    #[test]
    fn symmetric_objective_gives_equal_splits() {
        let plan = PhasePlan::default();
        // favours long cycles but penalizes imbalance between phases
        let f = |g: &[f64; 4]| {
            let mean = g.iter().sum::<f64>() / 4.0;
            g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() - mean
        };
        let best = build_fixed_plan(&FixedPlanSearch::default(), &plan, "sym", f);
        assert_eq!(best.greens, [25.0; 4]);
    }

    #[test]
    fn artifact_round_trip() {
        let p = FixedPlan { greens: [15.0, 40.0, 10.0, 25.0], objective: 123.456789, key: "base 3x3600".into() };
        let q = FixedPlan::from_text(&p.to_text()).unwrap();
        assert_eq!(p, q);
        let bumped = p.to_text().replace(" v1", " v9");
        assert!(matches!(FixedPlan::from_text(&bumped), Err(PlanCacheError::Version { found: 9, .. })));
        assert!(FixedPlan::from_text("garbage").is_err());
    }
}
