use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::scenarios::{self, Descriptor, ParamDefault};

fn one() -> u32 {
    1
}

/// A scenario run as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    /// Empty means every algorithm the scenario supports.
    #[serde(default)]
    pub algorithms: Vec<String>,
    /// Monte Carlo steps per replicate; the scenario default when absent, 0 for exact-only.
    #[serde(default)]
    pub chain_length: Option<u64>,
    #[serde(default = "one")]
    pub replicates: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.to_string(),
            params: BTreeMap::new(),
            algorithms: Vec::new(),
            chain_length: None,
            replicates: 1,
            base_seed: 0,
            out_dir: None,
        }
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks the config against the registry and fills in defaults.
    pub fn resolve(&self) -> CliResult<Resolved> {
        let descriptor = scenarios::find(&self.scenario)?;
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        let mut params = BTreeMap::new();
        for spec in descriptor.params {
            let value = match self.params.get(spec.name) {
                Some(v) => check_type(spec.name, &spec.default, v)?,
                None => spec.default.to_value(),
            };
            params.insert(spec.name.to_string(), value);
        }
        if let Some(unknown) = self.params.keys().find(|k| !params.contains_key(*k)) {
            let known: Vec<&str> = descriptor.params.iter().map(|p| p.name).collect();
            return Err(CliError::Config(format!(
                "unknown parameter '{unknown}' for scenario {}; accepted: {}",
                descriptor.id,
                if known.is_empty() { "none".to_string() } else { known.join(", ") }
            )));
        }
        let algorithms: Vec<String> = if self.algorithms.is_empty() {
            descriptor.algorithms.iter().map(|a| a.to_string()).collect()
        } else {
            for a in &self.algorithms {
                if !descriptor.algorithms.contains(&a.as_str()) {
                    return Err(CliError::Config(format!(
                        "algorithm '{a}' not available in scenario {}; choose from: {}",
                        descriptor.id,
                        descriptor.algorithms.join(", ")
                    )));
                }
            }
            self.algorithms.clone()
        };
        Ok(Resolved {
            descriptor,
            params,
            algorithms,
            chain_length: self.chain_length.unwrap_or(descriptor.default_chain_length),
            replicates: self.replicates,
            base_seed: self.base_seed,
        })
    }
}

fn check_type(name: &str, default: &ParamDefault, v: &Value) -> CliResult<Value> {
    let ok = match default {
        ParamDefault::Float(_) => v.is_number(),
        ParamDefault::Int(_) => v.is_u64(),
        ParamDefault::Text(_) => v.is_string(),
    };
    if ok {
        Ok(v.clone())
    } else {
        Err(CliError::Config(format!("parameter '{name}' expects {}, got {v}", default.kind())))
    }
}

/// A validated config with every default filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub descriptor: &'static Descriptor,
    pub params: BTreeMap<String, Value>,
    pub algorithms: Vec<String>,
    pub chain_length: u64,
    pub replicates: u32,
    pub base_seed: u64,
}

impl Resolved {
    pub fn float(&self, name: &str) -> f64 {
        self.params[name].as_f64().expect("validated numeric parameter")
    }

    pub fn int(&self, name: &str) -> u64 {
        self.params[name].as_u64().expect("validated integer parameter")
    }

    pub fn text(&self, name: &str) -> &str {
        self.params[name].as_str().expect("validated string parameter")
    }

    /// Seed of replicate `r`: `base_seed + r`.
    pub fn replicate_seed(&self, r: u32) -> u64 {
        self.base_seed.wrapping_add(r as u64)
    }

    /// Stream id of an algorithm: its position in the scenario's algorithm list.
    pub fn stream_of(&self, algorithm: &str) -> u64 {
        self.descriptor.algorithms.iter().position(|a| *a == algorithm).expect("validated algorithm") as u64
    }
}
