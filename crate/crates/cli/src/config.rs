use std::path::{Path, PathBuf};

use serde::Deserialize;
use untangle::embed::{AnchorEmbedder, AnchorEmbedderConfig, Embedder, PrecomputedVectors, TableEmbedder};
use untangle::Error;

use crate::CliError;

pub const DEFAULT_THETA: f64 = 0.72;
pub const DEFAULT_BETA: f64 = 0.20;
pub const DEFAULT_L_MIN: usize = 100;
pub const DEFAULT_K: usize = 5;

/// Values a `--config` JSON file may supply. Command-line flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub theta: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub l_min: Option<usize>,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub embedder: Option<String>,
    pub corpus: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub holdout: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub window_tokens: Option<usize>,
    pub overlap_tokens: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Ok(untangle::io::read_json(p)?),
            None => Ok(RunConfig::default()),
        }
    }
}

pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>) -> Option<T> {
    flag.or_else(|| file.clone())
}

pub fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("{flag} is required (flag or config file)")))
}

pub fn unit_interval(name: &str, value: f64) -> Result<f64, CliError> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(Error::InvalidConfig(format!("{name} = {value} must lie in (0, 1)")).into())
    }
}

pub fn positive(name: &str, value: usize) -> Result<usize, CliError> {
    if value >= 1 {
        Ok(value)
    } else {
        Err(Error::InvalidConfig(format!("{name} must be at least 1")).into())
    }
}

/// An embedder chosen with `anchor:FILE`, `table:FILE` or
/// `external-vectors:FILE`.
pub enum LoadedEmbedder {
    Anchor(AnchorEmbedder),
    Table(TableEmbedder),
    Vectors(PrecomputedVectors),
}

impl LoadedEmbedder {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let (kind, path) = spec
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("embedder {spec:?} must look like KIND:FILE")))?;
        Ok(match kind {
            "anchor" => LoadedEmbedder::Anchor(AnchorEmbedder::load(path)?),
            "table" => LoadedEmbedder::Table(TableEmbedder::load(path)?),
            "external-vectors" => LoadedEmbedder::Vectors(PrecomputedVectors::load(path)?),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown embedder kind {other:?}; expected anchor, table or external-vectors"
                )))
            }
        })
    }

    pub fn as_dyn(&self) -> &dyn Embedder {
        match self {
            LoadedEmbedder::Anchor(e) => e,
            LoadedEmbedder::Table(e) => e,
            LoadedEmbedder::Vectors(e) => e,
        }
    }

    pub fn anchor_config(&self) -> Option<&AnchorEmbedderConfig> {
        match self {
            LoadedEmbedder::Anchor(e) => Some(e.config()),
            _ => None,
        }
    }
}

pub fn embedder(flag: Option<String>, cfg: &RunConfig) -> Result<LoadedEmbedder, CliError> {
    LoadedEmbedder::parse(&require(pick(flag, &cfg.embedder), "--embedder")?)
}
