//! Run configuration documents and dotted `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::decision::DecisionModel;
use crate::engine::{RunSpec, DEFAULT_HORIZON};
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;
use crate::sweep::{ExperimentGrid, NamedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridAxes {
    pub models: Vec<NamedModel>,
    pub populations: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for GridAxes {
    fn default() -> Self {
        let g = ExperimentGrid::default();
        GridAxes { models: g.models, populations: g.populations, seeds: g.seeds }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon: u32,
    pub record_agents: bool,
    pub scenario: ScenarioConfig,
    pub model: DecisionModel,
    pub grid: GridAxes,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            horizon: DEFAULT_HORIZON,
            record_agents: false,
            scenario: ScenarioConfig::default(),
            model: DecisionModel::logit(),
            grid: GridAxes::default(),
        }
    }
}

fn path_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let p = e.path().to_string();
    Error::config(if p == "." { String::new() } else { p }, e.into_inner().to_string())
}

impl RunConfig {
    /// Parses a configuration document; absent keys take their defaults.
    pub fn from_value(mut value: Value) -> Result<Self> {
        let obj = value.as_object_mut().ok_or_else(|| Error::config("", "configuration must be a JSON object"))?;
        let model = obj.remove("model").map(|m| DecisionModel::from_json(m, "model")).transpose()?;
        let mut cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(path_error)?;
        if let Some(m) = model {
            cfg.model = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `value` with absent keys taken from `base` instead of the defaults.
    /// The model block, when present, replaces the base model whole.
    pub fn from_value_over(value: Value, base: &RunConfig) -> Result<Self> {
        let mut doc = base.to_value();
        merge(&mut doc, value);
        Self::from_value(doc)
    }

    pub fn from_file(path: &Path, base: &RunConfig) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let value: Value = serde_json::from_slice(&bytes)?;
        Self::from_value_over(value, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate("scenario")?;
        self.model.validate("model")?;
        self.grid().validate()
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("configuration serialises")
    }

    /// Applies `key=value` overrides in order. Keys are dotted paths (array
    /// elements by index) and must already exist in the resolved document;
    /// values are parsed as JSON, falling back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = self.to_value();
        for o in overrides {
            apply_set(&mut doc, o.as_ref())?;
        }
        Self::from_value(doc)
    }

    pub fn run_spec(&self) -> RunSpec {
        RunSpec { model: self.model.clone(), seed: self.seed, horizon: self.horizon, record_agents: self.record_agents }
    }

    pub fn grid(&self) -> ExperimentGrid {
        ExperimentGrid {
            models: self.grid.models.clone(),
            populations: self.grid.populations.clone(),
            seeds: self.grid.seeds.clone(),
            horizon: self.horizon,
            base_seed: self.seed,
            scenario: self.scenario.clone(),
        }
    }
}

fn merge(doc: &mut Value, patch: Value) {
    match (doc, patch) {
        (Value::Object(d), Value::Object(p)) => {
            for (k, v) in p {
                match d.get_mut(&k) {
                    Some(slot) if k != "model" => merge(slot, v),
                    _ => {
                        d.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets one dotted key in `doc`.
pub fn apply_set(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must have the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::config(assignment, "override key is empty"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = doc;
    for part in key.split('.') {
        slot = match slot {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::config(key, "no such configuration key"))?;
    }
    *slot = value;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_roundtrip() {
        let d = RunConfig::default();
        assert_eq!(RunConfig::from_value(d.to_value()).unwrap(), d);
        assert_eq!(RunConfig::from_value(json!({})).unwrap(), d);
        assert_eq!(d.grid().size(), 2000);
    }

    #[test]
    fn overrides_change_existing_keys() {
        let c = RunConfig::default()
            .with_overrides(&["scenario.population=250", "scenario.initial.q_s0=0.4", "grid.seeds=[1,2]"])
            .unwrap();
        assert_eq!(c.scenario.population, 250);
        assert_eq!(c.scenario.initial.q_s0, 0.4);
        assert_eq!(c.grid.seeds, vec![1, 2]);
        let c = RunConfig::default().with_overrides(&["grid.populations.0=150"]).unwrap();
        assert_eq!(c.grid.populations[0], 150);
        let c = RunConfig::default().with_overrides(&["scenario.name=my toy"]).unwrap();
        assert_eq!(c.scenario.name, "my toy");
    }

    #[test]
    fn overrides_reject_unknown_keys_and_bad_values() {
        let err = RunConfig::default().with_overrides(&["scenario.popultion=3"]).unwrap_err();
        assert!(matches!(err, Error::Config { path, .. } if path == "scenario.popultion"));
        let err = RunConfig::default().with_overrides(&["horizon"]).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        let err = RunConfig::default().with_overrides(&["scenario.population=many"]).unwrap_err();
        assert!(matches!(err, Error::Config { path, .. } if path == "scenario.population"));
        let err = RunConfig::default().with_overrides(&["scenario.initial.returned0=1.5"]).unwrap_err();
        assert!(matches!(err, Error::Config { path, .. } if path == "scenario.initial.returned0"));
    }

    #[test]
    fn files_merge_over_a_base() {
        let mut base = RunConfig::default();
        base.scenario.population = 77;
        base.horizon = 5;
        let c = RunConfig::from_value_over(json!({"horizon": 9, "scenario": {"n_pois": 3}}), &base).unwrap();
        assert_eq!((c.scenario.population, c.scenario.n_pois, c.horizon), (77, 3, 9));
        let err = RunConfig::from_value_over(json!({"scenario": {"radius": 3}}), &base).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "scenario.radius"), "{err}");
    }

    #[test]
    fn model_errors_carry_paths() {
        let err = RunConfig::from_value(json!({"model": {"type": "threshold_homog", "delta": "high"}})).unwrap_err();
        assert!(matches!(err, Error::Config { path, .. } if path == "model.delta"));
        let c = RunConfig::default().with_overrides(&["model.delta=0.7"]);
        assert!(c.is_err(), "logit has no delta");
        let c = RunConfig::from_value(json!({"model": {"type": "threshold_homog"}})).unwrap();
        let c = c.with_overrides(&["model.delta=0.7"]).unwrap();
        assert_eq!(c.model, DecisionModel::homogeneous(0.7));
    }
}
