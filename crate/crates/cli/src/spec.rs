//! Experiment specification file: accelerator config, workload, a policy
//! matrix resolved against a base policy, seeds, and an optional tolerance
//! profile. Everything an experiment needs lives in this one JSON file so
//! runs are reproducible without environment state.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use xbarsim_core::arch::AcceleratorConfig;
use xbarsim_core::engine::SimPolicy;
use xbarsim_core::fault::FaultToleranceProfile;
use xbarsim_core::workload::{self, NetworkGraph};

use crate::CliError;

#[derive(Debug, Deserialize)]
pub struct ExperimentSpec {
    pub config: ConfigSource,
    pub workload: WorkloadSource,
    /// Partial policy JSON merged over the built-in defaults.
    #[serde(default)]
    pub base_policy: Value,
    pub policies: Vec<PolicyEntry>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub profile: Option<ProfileSource>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ConfigSource {
    Path(String),
    Inline(Box<AcceleratorConfig>),
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadSource {
    EncoderStack {
        blocks: u32,
        d_model: u32,
        d_ff: u32,
        heads: u32,
        seq_len: u32,
    },
    Graph(Box<NetworkGraph>),
    Path(String),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ProfileSource {
    Path(String),
    Inline(Box<FaultToleranceProfile>),
}

/// One row of the policy matrix: a name plus partial overrides applied on
/// top of the base policy.
#[derive(Debug, Deserialize)]
pub struct PolicyEntry {
    pub name: String,
    #[serde(flatten)]
    pub overrides: serde_json::Map<String, Value>,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::input(format!(
            "{}:{}:{}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec, CliError> {
    read_json(path)
}

impl ExperimentSpec {
    pub fn resolve_config(&self, spec_dir: &Path) -> Result<AcceleratorConfig, CliError> {
        let config = match &self.config {
            ConfigSource::Inline(c) => (**c).clone(),
            ConfigSource::Path(p) => read_json(&spec_dir.join(p))?,
        };
        config
            .validate()
            .map_err(|e| CliError::input(e.to_string()))?;
        Ok(config)
    }

    pub fn resolve_workload(&self, spec_dir: &Path) -> Result<NetworkGraph, CliError> {
        let graph = match &self.workload {
            WorkloadSource::EncoderStack {
                blocks,
                d_model,
                d_ff,
                heads,
                seq_len,
            } => workload::build_encoder_stack(*blocks, *d_model, *d_ff, *heads, *seq_len)
                .map_err(|e| CliError::input(e.to_string()))?,
            WorkloadSource::Graph(g) => (**g).clone(),
            WorkloadSource::Path(p) => read_json(&spec_dir.join(p))?,
        };
        graph
            .ensure_valid()
            .map_err(|e| CliError::input(e.to_string()))?;
        Ok(graph)
    }

    pub fn resolve_profile(
        &self,
        spec_dir: &Path,
    ) -> Result<Option<FaultToleranceProfile>, CliError> {
        match &self.profile {
            None => Ok(None),
            Some(ProfileSource::Inline(p)) => Ok(Some((**p).clone())),
            Some(ProfileSource::Path(p)) => Ok(Some(read_json(&spec_dir.join(p))?)),
        }
    }

    /// Materializes one policy cell: defaults <- base_policy <- entry
    /// overrides, then the sweep seed and the entry name.
    pub fn resolve_policy(&self, entry: &PolicyEntry, seed: u64) -> Result<SimPolicy, CliError> {
        let mut value = serde_json::to_value(SimPolicy::default()).expect("policy serializes");
        merge(&mut value, &self.base_policy);
        merge(&mut value, &Value::Object(entry.overrides.clone()));
        let obj = value.as_object_mut().expect("policy is an object");
        obj.insert("label".into(), Value::String(entry.name.clone()));
        obj.insert("seed".into(), Value::Number(seed.into()));
        let policy: SimPolicy = serde_json::from_value(value)
            .map_err(|e| CliError::input(format!("policy '{}': {e}", entry.name)))?;
        policy
            .validate()
            .map_err(|e| CliError::input(format!("policy '{}': {e}", entry.name)))?;
        Ok(policy)
    }
}

/// Recursive JSON object merge; scalars and arrays in `patch` replace the
/// base value.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => {
            if !p.is_null() {
                *b = p.clone();
            }
        }
    }
}

pub fn spec_dir(spec_path: &Path) -> PathBuf {
    spec_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
