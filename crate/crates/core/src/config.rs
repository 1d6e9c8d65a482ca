//! The run configuration document.

use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentConfig;
use crate::harness::{ControllerKind, HarnessConfig, PlanSearchConfig};
use crate::scenarios::{lookup, Injection, ScenarioError, ScenarioSpec};
use crate::sim::PHASE_COUNT;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize configuration: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("`{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

/// A library scenario by name, or a full inline definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Named(String),
    Inline(Box<ScenarioSpec>),
}

impl ScenarioRef {
    pub fn resolve(&self) -> Result<ScenarioSpec, ScenarioError> {
        match self {
            ScenarioRef::Named(name) => lookup(name),
            ScenarioRef::Inline(spec) => {
                spec.validate()?;
                Ok((**spec).clone())
            }
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ScenarioRef::Named(name) => name,
            ScenarioRef::Inline(spec) => &spec.name,
        }
    }
}

impl Default for ScenarioRef {
    fn default() -> Self {
        ScenarioRef::Named("base".into())
    }
}

/// Pretraining phase of a transfer run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    pub pretrain_scenario: ScenarioRef,
    pub pretrain_episodes: usize,
}

impl Default for TransferSection {
    fn default() -> Self {
        TransferSection { pretrain_scenario: ScenarioRef::default(), pretrain_episodes: 40 }
    }
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioRef,
    pub controller: ControllerKind,
    pub episodes: usize,
    pub replications: usize,
    pub seed: u64,
    /// Post-warm-up episode length; scenario windows are stretched to fit.
    pub episode_length: Option<f64>,
    pub warmup: Option<f64>,
    /// Overrides the scenario's failure injection point.
    pub failure_injection: Option<Injection>,
    pub parallel: bool,
    pub output_dir: Option<PathBuf>,
    /// Agent to start from.
    pub checkpoint_in: Option<PathBuf>,
    /// File name, relative to the output directory, for the final agent of
    /// replication 0.
    pub checkpoint_out: Option<PathBuf>,
    /// Fixed-plan greens; searched on the base scenario when absent.
    pub fixed_greens: Option<[f64; PHASE_COUNT]>,
    pub harness: HarnessConfig,
    pub agent: AgentConfig,
    pub plan_search: PlanSearchConfig,
    pub transfer: TransferSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: ScenarioRef::default(),
            controller: ControllerKind::RlPhaseSelection,
            episodes: 80,
            replications: 10,
            seed: 0,
            episode_length: None,
            warmup: None,
            failure_injection: None,
            parallel: true,
            output_dir: None,
            checkpoint_in: None,
            checkpoint_out: None,
            fixed_greens: None,
            harness: HarnessConfig::default(),
            agent: AgentConfig::default(),
            plan_search: PlanSearchConfig::default(),
            transfer: TransferSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    fn shape(&self, spec: ScenarioSpec) -> ScenarioSpec {
        let mut spec = match self.episode_length {
            Some(l) => spec.rescaled(l),
            None => spec,
        };
        if let Some(w) = self.warmup {
            spec = spec.with_warmup(w);
        }
        if let Some(i) = self.failure_injection {
            spec = spec.with_injection(i);
        }
        spec
    }

    /// The scenario to run, with length, warm-up and injection overrides applied.
    pub fn resolve_scenario(&self) -> Result<ScenarioSpec, ConfigError> {
        let spec = self.shape(self.scenario.resolve()?);
        spec.validate()?;
        Ok(spec)
    }

    pub fn resolve_pretrain_scenario(&self) -> Result<ScenarioSpec, ConfigError> {
        let spec = self.shape(self.transfer.pretrain_scenario.resolve()?);
        spec.validate()?;
        Ok(spec)
    }

    /// Scenario the fixed plan is optimized on: base demand at the run's scale.
    pub fn plan_scenario(&self) -> Result<ScenarioSpec, ConfigError> {
        let mut spec = lookup("base")?;
        if let Some(l) = self.episode_length {
            spec = spec.rescaled(l);
        }
        if let Some(w) = self.warmup {
            spec = spec.with_warmup(w);
        }
        Ok(spec)
    }

    /// Agent settings with the action space implied by the controller kind.
    pub fn agent_config(&self) -> AgentConfig {
        match self.controller.action_space() {
            Some(space) => AgentConfig { action_space: space, ..self.agent.clone() },
            None => self.agent.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.episodes == 0 {
            return Err(invalid("episodes", "must be at least 1"));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if let Some(l) = self.episode_length {
            if !(l.is_finite() && l > 0.0) {
                return Err(invalid("episode_length", "must be positive"));
            }
        }
        if let Some(w) = self.warmup {
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid("warmup", "must be non-negative"));
            }
        }
        self.resolve_scenario()?;
        self.harness.validate().map_err(|e| invalid("harness", e.to_string()))?;
        self.agent_config().validate().map_err(|e| invalid("agent", e.to_string()))?;
        if let Some(g) = &self.fixed_greens {
            if !self.harness.phases.greens_in_bounds(g) {
                return Err(invalid("fixed_greens", "greens must lie within [min_green, max_green]"));
            }
        }
        if let Some(p) = &self.checkpoint_out {
            if !is_plain_relative(p) {
                return Err(invalid("checkpoint_out", "must be a relative path inside the output directory"));
            }
        }
        if self.transfer.pretrain_episodes > 0 || self.checkpoint_in.is_some() {
            self.resolve_pretrain_scenario()?;
        }
        Ok(())
    }
}

/// Relative path that cannot climb out of its base directory.
pub fn is_plain_relative(p: &Path) -> bool {
    p.components().next().is_some() && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_and_reload_is_identity() {
        let mut cfg = RunConfig::default();
        cfg.scenario = ScenarioRef::Inline(Box::new(lookup("incident_b").unwrap()));
        cfg.controller = ControllerKind::RlTimeExtension;
        cfg.episode_length = Some(3600.0);
        cfg.failure_injection = Some(Injection::AfterMax);
        cfg.fixed_greens = Some([10.0, 15.0, 15.0, 15.0]);
        cfg.agent.learning_rate = Some(0.1 + 0.2);
        cfg.harness.sim.reaction_time = 1.0 / 3.0;
        cfg.checkpoint_out = Some("agent.ckpt".into());
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
        assert_eq!(RunConfig::from_toml(&RunConfig::default().to_toml().unwrap()).unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg =
            RunConfig::from_toml("scenario = \"low_demand\"\ncontroller = \"actuated\"\n[agent]\ndropout = 0.0\n")
                .unwrap();
        assert_eq!(cfg.scenario, ScenarioRef::Named("low_demand".into()));
        assert_eq!(cfg.controller, ControllerKind::Actuated);
        assert_eq!(cfg.agent.dropout, 0.0);
        assert_eq!(cfg.agent.gamma, AgentConfig::default().gamma);
        assert_eq!(cfg.episodes, 80);
    }

    #[test]
    fn unknown_fields_are_reported_with_location() {
        let err = RunConfig::from_toml("episodes = 3\n[agent]\nlearning_rat = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("learning_rat"), "{err}");
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let cfg = RunConfig { scenario: ScenarioRef::Named("nowhere".into()), ..RunConfig::default() };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("nowhere") && err.contains("base"), "{err}");
        let cfg = RunConfig { replications: 0, ..RunConfig::default() };
        assert!(cfg.validate().unwrap_err().to_string().starts_with("`replications`"));
        let cfg = RunConfig { checkpoint_out: Some("../escape.ckpt".into()), ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn scenario_overrides_apply() {
        let cfg = RunConfig {
            scenario: ScenarioRef::Named("failure_c".into()),
            episode_length: Some(3600.0),
            warmup: Some(300.0),
            failure_injection: Some(Injection::AfterMax),
            ..RunConfig::default()
        };
        let s = cfg.resolve_scenario().unwrap();
        assert_eq!((s.episode_length, s.warmup), (3600.0, 300.0));
        assert_eq!(s.failure.unwrap().injection, Injection::AfterMax);
        assert_eq!(cfg.plan_scenario().unwrap().name, "base");
    }
}
