//! JSON config loading with `--set` overrides, typed validation and digests.

use std::path::Path;

use affine_qmle::contrast::ContrastKind;
use affine_qmle::montecarlo::ModelConfig;
use affine_qmle::noise::NoiseLaw;
use affine_qmle::optimize::OptimConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

fn default_burn_in() -> usize {
    affine_qmle::simulate::DEFAULT_BURN_IN
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelConfig,
    pub theta: Vec<f64>,
    pub noise: NoiseLaw,
    /// One trajectory per size.
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub model: ModelConfig,
    pub contrast: ContrastKind,
    /// Innovation law used to calibrate the Gaussian scale; uncalibrated when absent.
    #[serde(default)]
    pub noise: Option<NoiseLaw>,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default = "default_level")]
    pub level: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarityConfig {
    pub model: ModelConfig,
    pub theta: Vec<f64>,
    pub noise: NoiseLaw,
    pub r: f64,
}

/// Sets `value` at the dotted `path`, creating objects as needed.
pub fn apply_override(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("invalid override key {path:?}")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("{}: not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

/// Parses `key=value`; the value is read as JSON and falls back to a string.
pub fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {s:?} must look like key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Reads a config file (or `{}` when absent), applies overrides and
/// deserializes it, reporting the offending key path on failure.
pub fn load<T: DeserializeOwned>(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<T, CliError> {
    let mut root = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: invalid JSON: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    for (k, v) in overrides {
        apply_override(&mut root, k, v.clone())?;
    }
    serde_path_to_error::deserialize(root).map_err(|e| {
        let key = e.path().to_string();
        CliError::Config(format!("{key}: {}", e.into_inner()))
    })
}

/// SHA-256 over the canonical JSON of the typed config. Object keys are
/// sorted, so the digest does not depend on key order in the file.
pub fn digest<T: Serialize>(config: &T) -> String {
    let canonical = serde_json::to_value(config).expect("config serializes");
    let bytes = serde_json::to_vec(&canonical).expect("value serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}
