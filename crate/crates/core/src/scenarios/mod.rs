//! Named demand, incident and sensor-failure scenarios.

mod failure;

pub use failure::{apply_failures, FailureModel, FailureProcess, FailureSpec, FailureStats, Injection};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{DemandTransform, IncidentSpec, Od, SimError, TimeWindow};

pub const DEFAULT_EPISODE_LENGTH: f64 = 4.0 * 3600.0;
pub const DEFAULT_WARMUP: f64 = 600.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{name}`; available: {available}")]
    Unknown { name: String, available: String },
    #[error("scenario `{name}`: {reason}")]
    Invalid { name: String, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Declarative description of one episode's disturbances. All times are
/// seconds after the end of warm-up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub episode_length: f64,
    pub warmup: f64,
    #[serde(default)]
    pub demand_transforms: Vec<DemandTransform>,
    #[serde(default)]
    pub incidents: Vec<IncidentSpec>,
    #[serde(default)]
    pub failure: Option<FailureSpec>,
}

impl ScenarioSpec {
    fn plain(name: &str, description: &str) -> Self {
        ScenarioSpec {
            name: name.into(),
            description: description.into(),
            episode_length: DEFAULT_EPISODE_LENGTH,
            warmup: DEFAULT_WARMUP,
            demand_transforms: vec![],
            incidents: vec![],
            failure: None,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |reason: String| Err(ScenarioError::Invalid { name: self.name.clone(), reason });
        if self.name.is_empty() {
            return invalid("empty name".into());
        }
        if !(self.episode_length > 0.0 && self.episode_length.is_finite()) || !(self.warmup >= 0.0) {
            return invalid("episode length must be positive and warm-up non-negative".into());
        }
        let inside = |w: &TimeWindow| w.is_valid() && w.end <= self.episode_length + 1e-9;
        for t in &self.demand_transforms {
            t.resolve()?;
            if !(t.multiplier >= 0.0 && t.multiplier.is_finite()) {
                return invalid(format!("multiplier {} is negative", t.multiplier));
            }
            if !inside(&t.window) {
                return invalid(format!("demand window {:?} outside the episode", t.window));
            }
        }
        for inc in &self.incidents {
            if !inside(&inc.window()) {
                return invalid(format!("incident window [{}, {}] outside the episode", inc.start, inc.end));
            }
        }
        if let Some(f) = &self.failure {
            f.validate().or_else(|reason| invalid(reason))?;
            if let FailureModel::FixedWindow { start, end, .. } = f.model {
                if !inside(&TimeWindow::new(start, end)) {
                    return invalid("failure window outside the episode".into());
                }
            }
        }
        Ok(())
    }

    /// Same scenario with every window stretched to a new episode length.
    pub fn rescaled(&self, episode_length: f64) -> Self {
        let k = episode_length / self.episode_length;
        let mut s = self.clone();
        s.episode_length = episode_length;
        for t in &mut s.demand_transforms {
            t.window = TimeWindow::new(t.window.start * k, t.window.end * k);
        }
        for inc in &mut s.incidents {
            inc.start *= k;
            inc.end *= k;
        }
        if let Some(FailureSpec { model: FailureModel::FixedWindow { start, end, .. }, .. }) = &mut s.failure {
            *start *= k;
            *end *= k;
        }
        s
    }

    pub fn with_warmup(mut self, warmup: f64) -> Self {
        self.warmup = warmup;
        self
    }

    /// Switches the failure injection point, if the scenario has failures.
    pub fn with_injection(mut self, injection: Injection) -> Self {
        if let Some(f) = &mut self.failure {
            f.injection = injection;
        }
        self
    }

    pub fn with_failure(mut self, failure: Option<FailureSpec>) -> Self {
        self.failure = failure;
        self
    }

    pub fn to_toml(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

fn middle(length: f64) -> TimeWindow {
    TimeWindow::new(0.25 * length, 0.75 * length)
}

/// The nine built-in scenarios at full (4 h) length.
pub fn library() -> Vec<ScenarioSpec> {
    let l = DEFAULT_EPISODE_LENGTH;
    let all_ods: Vec<(u8, u8)> = Od::all().map(|od| (od.from.get(), od.to.get())).collect();
    let mid = middle(l);
    vec![
        ScenarioSpec::plain("base", "reference demand, no disturbances"),
        ScenarioSpec {
            demand_transforms: vec![DemandTransform { ods: all_ods, multiplier: 0.7, window: TimeWindow::new(0.0, l) }],
            ..ScenarioSpec::plain("low_demand", "every OD reduced by 30%")
        },
        ScenarioSpec {
            demand_transforms: vec![DemandTransform {
                ods: vec![(1, 4), (2, 4), (3, 4)],
                multiplier: 2.0,
                window: mid,
            }],
            ..ScenarioSpec::plain("before_event", "demand towards the north doubled in hours 2 and 3")
        },
        ScenarioSpec {
            demand_transforms: vec![DemandTransform {
                ods: vec![(4, 1), (4, 2), (4, 3)],
                multiplier: 2.5,
                window: mid,
            }],
            ..ScenarioSpec::plain("after_event", "demand from the north multiplied by 2.5 mid-episode")
        },
        ScenarioSpec {
            incidents: vec![IncidentSpec::demand_cut(1, mid.start, mid.end)],
            ..ScenarioSpec::plain("incident_a", "no arrivals from the east mid-episode")
        },
        ScenarioSpec {
            incidents: vec![IncidentSpec::lane_blockage(1, &[1, 2], 50.0, mid.start, mid.end)],
            ..ScenarioSpec::plain("incident_b", "50 m blockage of the two left-most eastern lanes in hours 2 and 3")
        },
        ScenarioSpec {
            failure: Some(FailureSpec::markov(Injection::BeforeMax, 0.01, 0.05)),
            ..ScenarioSpec::plain("failure_a", "bursty sensor failures, mean burst 20 steps")
        },
        ScenarioSpec {
            failure: Some(FailureSpec::markov(Injection::BeforeMax, 0.001, 0.005)),
            ..ScenarioSpec::plain("failure_b", "bursty sensor failures, mean burst 200 steps")
        },
        ScenarioSpec {
            failure: Some(FailureSpec::fixed_window(Injection::BeforeMax, mid.start, mid.end)),
            ..ScenarioSpec::plain("failure_c", "one sensor reads zero mid-episode")
        },
    ]
}

pub fn scenario_names() -> Vec<String> {
    library().into_iter().map(|s| s.name).collect()
}

/// Library scenario by name.
pub fn lookup(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    library()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ScenarioError::Unknown { name: name.to_string(), available: scenario_names().join(", ") })
}
