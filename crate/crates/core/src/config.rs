//! Run configuration: defaults, TOML/JSON loading, `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::buffer::BufferConfig;
use crate::env::EnvConfig;
use crate::policy::{Activation, PolicySpec};
use crate::variation::{AsciiConfig, IsoLineConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub output_squash: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden_layers: vec![64, 64],
            activation: Activation::Tanh,
            output_squash: true,
        }
    }
}

impl PolicyConfig {
    pub fn spec(&self, state_dim: usize, action_dim: usize) -> PolicySpec {
        PolicySpec {
            state_dim,
            action_dim,
            hidden_layers: self.hidden_layers.clone(),
            activation: self.activation,
            output_squash: self.output_squash,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorsConfig {
    pub isoline: IsoLineConfig,
    pub ascii: AsciiConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchiveConfig {
    pub num_centroids: usize,
    pub centroid_seed: u64,
    /// When set, use a regular grid with this many bins per descriptor
    /// dimension instead of CVT centroids.
    pub grid_bins: Option<usize>,
    /// Directory for the centroid file cache.
    pub cache_dir: Option<String>,
}

impl Default for ArchiveConfig {
    fn default() -> Self {
        ArchiveConfig {
            num_centroids: 1024,
            centroid_seed: 0,
            grid_bins: None,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub batch_size: usize,
    /// Fraction of each batch mutated by Iso+LineDD; the rest use ASCII.
    pub ga_fraction: f64,
    pub eval_budget: usize,
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub worker_count: usize,
    pub operators: OperatorsConfig,
    pub buffer: BufferConfig,
    pub archive: ArchiveConfig,
    /// Write an archive checkpoint every this many iterations.
    pub checkpoint_every: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvConfig::default(),
            policy: PolicyConfig::default(),
            batch_size: 4096,
            ga_fraction: 0.5,
            eval_budget: 50_000,
            seed: 0,
            worker_count: 0,
            operators: OperatorsConfig::default(),
            buffer: BufferConfig::default(),
            archive: ArchiveConfig::default(),
            checkpoint_every: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.batch_size == 0 {
            return invalid("batch_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.ga_fraction) {
            return invalid(format!("ga_fraction {} outside [0, 1]", self.ga_fraction));
        }
        if self.eval_budget < self.batch_size {
            return invalid(format!(
                "eval_budget {} is smaller than batch_size {}",
                self.eval_budget, self.batch_size
            ));
        }
        if self.archive.num_centroids == 0 && self.archive.grid_bins.is_none() {
            return invalid("archive needs at least one cell".into());
        }
        if self.checkpoint_every == Some(0) {
            return invalid("checkpoint_every must be positive".into());
        }
        self.operators
            .isoline
            .validate()
            .and_then(|_| self.operators.ascii.validate())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let env = self
            .env
            .build()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let spec = self.policy.spec(env.spec().state_dim, env.spec().action_dim);
        spec.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.buffer.capacity_trajectories(env.spec().horizon) == 0 {
            return invalid("buffer.capacity_transitions is below one trajectory".into());
        }
        Ok(())
    }

    /// Number of Iso+LineDD offspring per batch.
    pub fn ga_count(&self) -> usize {
        ((self.ga_fraction * self.batch_size as f64).round() as usize).min(self.batch_size)
    }

    /// Defaults, overlaid with a `.toml` or `.json` file, then `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut value =
            serde_json::to_value(RunConfig::default()).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if let Some(p) = path {
            let file = read_value(p)?;
            if let Some(name) = file.pointer("/env/name") {
                switch_env(&mut value, name);
            }
            merge(&mut value, file);
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A copy with `key=value` overrides applied on top of this config.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut value = serde_json::to_value(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn read_value(path: &Path) -> Result<Value, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))
    } else {
        let v: toml::Value = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        serde_json::to_value(v).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

/// Recursive overlay of `top` onto `base`. Objects merge key by key; any
/// other value replaces. Fields left over from a different environment are
/// ignored on deserialization.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Selecting a different environment drops the previous one's parameters,
/// so the new environment starts from its own defaults.
fn switch_env(root: &mut Value, name: &Value) {
    if root.pointer("/env/name") != Some(name) {
        if let Some(map) = root.as_object_mut() {
            map.insert("env".into(), serde_json::json!({ "name": name }));
        }
    }
}

/// Set a dotted key, e.g. `operators.ascii.e=16`. The value is parsed as
/// JSON when possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(assignment.into()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(assignment.into()));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().into()));
    if key == "env.name" {
        switch_env(root, &value);
        return Ok(());
    }
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        let map = node.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        node = map
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}
