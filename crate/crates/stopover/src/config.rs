//! Run configuration: a single JSON file, dot-path overrides, and a content
//! hash that stamps every output of a run.
//!
//! Paths in the file are resolved relative to the file's own directory, so
//! a config travels with its data. The hash covers the fully resolved
//! configuration — defaults filled in, overrides applied — which makes
//! "same hash" mean "same run" byte for byte.

use crate::closed::ClosedParamState;
use crate::open::OpenParamState;
use crate::oracle::OracleBudget;
use crate::priors::PriorConfig;
use crate::sampler::SamplerConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid: {0}")]
    Json(#[from] serde_json::Error),
    #[error("--set entries must look like key=value, got `{entry}`")]
    BadSet { entry: String },
    #[error("--set path `{path}` walks through a non-object value")]
    BadSetPath { path: String },
    #[error("field `{field}`: {what}")]
    BadField { field: &'static str, what: String },
    #[error("field `{field}` references missing path {path}")]
    MissingPath { field: &'static str, path: String },
    #[error("field `{field}` is required to {command}")]
    MissingField {
        field: &'static str,
        command: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Open,
    Closed,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Open => "open",
            ModelFamily::Closed => "closed",
        }
    }
}

fn default_gof_draws() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GofConfig {
    /// Posterior states sampled for each predictive check.
    #[serde(default = "default_gof_draws")]
    pub draws: usize,
    /// Group count to condition the duration check on; defaults to the
    /// modal G of the trace.
    #[serde(default)]
    pub duration_groups: Option<usize>,
}

impl Default for GofConfig {
    fn default() -> Self {
        GofConfig { draws: default_gof_draws(), duration_groups: None }
    }
}

/// Oracle size limits plus the rejection-sampling effort. Defaults match
/// the library's test budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub max_t: usize,
    pub max_n: u64,
    pub max_components: usize,
    pub max_draws: u64,
    pub rejection_draws: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let b = OracleBudget::default();
        OracleConfig {
            max_t: b.max_t,
            max_n: b.max_n,
            max_components: b.max_components,
            max_draws: b.max_draws,
            rejection_draws: 200_000,
        }
    }
}

impl OracleConfig {
    pub fn budget(&self) -> OracleBudget {
        OracleBudget {
            max_t: self.max_t,
            max_n: self.max_n,
            max_components: self.max_components,
            max_draws: self.max_draws,
        }
    }
}

/// Known-true parameters for `simulate`; the variant must match the
/// configured model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthConfig {
    Open(OpenParamState),
    Closed(ClosedParamState),
}

fn default_out_dir() -> String {
    "out".into()
}

fn default_chains() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelFamily,
    /// Chain seed; mandatory so no run ever depends on the wall clock.
    pub seed: u64,
    pub design: String,
    #[serde(default)]
    pub histories: Option<String>,
    #[serde(default)]
    pub counts: Option<String>,
    /// Trace to analyse (`gof`, `diagnose`); defaults to
    /// `out_dir/trace_1.csv`.
    #[serde(default)]
    pub trace: Option<String>,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub priors: PriorConfig,
    /// Partial sampler settings overlaid on the model family's defaults.
    #[serde(default)]
    pub sampler: Value,
    #[serde(default)]
    pub gof: GofConfig,
    #[serde(default)]
    pub truth: Option<TruthConfig>,
    #[serde(default)]
    pub oracle: OracleConfig,
}

/// A loaded configuration: the resolved settings, the directory paths are
/// relative to, and the content hash.
#[derive(Debug, Clone)]
pub struct ConfigContext {
    pub run: RunConfig,
    pub sampler: SamplerConfig,
    pub base_dir: PathBuf,
    pub hash: String,
}

fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Apply one `key=value` override at a dot-separated path, creating
/// intermediate objects as needed. Values parse as JSON where possible and
/// fall back to strings.
fn apply_set(root: &mut Value, entry: &str) -> Result<(), ConfigError> {
    let (key, raw) = entry
        .split_once('=')
        .ok_or_else(|| ConfigError::BadSet { entry: entry.to_string() })?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = root;
    let mut walked = String::new();
    for part in key.split('.') {
        if !walked.is_empty() {
            walked.push('.');
        }
        walked.push_str(part);
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| ConfigError::BadSetPath { path: walked.clone() })?;
        slot = obj.entry(part.to_string()).or_insert(Value::Object(Default::default()));
    }
    *slot = value;
    Ok(())
}

fn resolve_sampler(model: ModelFamily, overlay: &Value) -> Result<SamplerConfig, ConfigError> {
    let base = match model {
        ModelFamily::Open => SamplerConfig::default_open(),
        ModelFamily::Closed => SamplerConfig::default_closed(),
    };
    let mut value = serde_json::to_value(&base)?;
    if !overlay.is_null() {
        if !overlay.is_object() {
            return Err(ConfigError::BadField {
                field: "sampler",
                what: "must be an object of sampler settings".into(),
            });
        }
        merge(&mut value, overlay);
    }
    let config: SamplerConfig = serde_json::from_value(value)?;
    config.validate().map_err(|e| ConfigError::BadField {
        field: "sampler",
        what: e.to_string(),
    })?;
    Ok(config)
}

/// Hash of the fully resolved configuration, hex-truncated to 16 chars.
///
/// Where the outputs land and how many chains run are execution plumbing,
/// not statistical inputs, so `out_dir` and `chains` are excluded: the same
/// run written elsewhere keeps the same identity.
fn config_hash(run: &RunConfig) -> Result<String, ConfigError> {
    let mut doc = serde_json::to_value(run)?;
    if let Some(map) = doc.as_object_mut() {
        map.remove("out_dir");
        map.remove("chains");
    }
    let canonical = serde_json::to_string(&doc)?;
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in &digest[..8] {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}

/// Load a config file, apply `--set` overrides and flag shorthands, resolve
/// defaults, and hash the result.
pub fn load_config(
    path: &Path,
    sets: &[String],
    seed: Option<u64>,
    out: Option<&str>,
    chains: Option<usize>,
) -> Result<ConfigContext, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut value: Value = serde_json::from_str(&text)?;
    for entry in sets {
        apply_set(&mut value, entry)?;
    }
    if let Some(seed) = seed {
        apply_set(&mut value, &format!("seed={seed}"))?;
    }
    if let Some(out) = out {
        let quoted = serde_json::to_string(out)?;
        apply_set(&mut value, &format!("out_dir={quoted}"))?;
    }
    if let Some(chains) = chains {
        apply_set(&mut value, &format!("chains={chains}"))?;
    }
    let mut run: RunConfig = serde_json::from_value(value)?;
    let sampler = resolve_sampler(run.model, &run.sampler)?;
    run.sampler = serde_json::to_value(&sampler)?;
    if run.chains == 0 {
        return Err(ConfigError::BadField {
            field: "chains",
            what: "must be at least 1".into(),
        });
    }
    if run.gof.draws == 0 {
        return Err(ConfigError::BadField {
            field: "gof.draws",
            what: "must be at least 1".into(),
        });
    }
    let hash = config_hash(&run)?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Ok(ConfigContext { run, sampler, base_dir, hash })
}

impl ConfigContext {
    fn resolve(&self, raw: &str) -> PathBuf {
        self.base_dir.join(raw)
    }

    pub fn design_path(&self) -> PathBuf {
        self.resolve(&self.run.design)
    }

    pub fn histories_path(&self) -> Option<PathBuf> {
        self.run.histories.as_deref().map(|p| self.resolve(p))
    }

    pub fn counts_path(&self) -> Option<PathBuf> {
        self.run.counts.as_deref().map(|p| self.resolve(p))
    }

    pub fn trace_path(&self) -> PathBuf {
        match self.run.trace.as_deref() {
            Some(p) => self.resolve(p),
            None => self.out_dir().join("trace_1.csv"),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.run.out_dir)
    }

    /// Check that a required input exists, naming the field on failure.
    pub fn require_file(
        &self,
        field: &'static str,
        command: &'static str,
        path: Option<PathBuf>,
    ) -> Result<PathBuf, ConfigError> {
        let path = path.ok_or(ConfigError::MissingField { field, command })?;
        if !path.is_file() {
            return Err(ConfigError::MissingPath {
                field,
                path: path.display().to_string(),
            });
        }
        Ok(path)
    }

    /// Seed for chain `index` (0-based). The first chain runs on the config
    /// seed itself; further chains use a splitmix-style derivation so their
    /// streams are unrelated but reproducible.
    pub fn chain_seed(&self, index: usize) -> u64 {
        if index == 0 {
            return self.run.seed;
        }
        let mut z = self.run.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}
