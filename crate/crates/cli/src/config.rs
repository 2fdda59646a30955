//! Optional TOML config file. Keys mirror the long flag names with `-`
//! replaced by `_`. Precedence: flag, then `MODGUARD_*` env var, then this
//! file, then the built-in default.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub backend: Option<String>,
    pub model_file: Option<PathBuf>,
    pub dim: Option<usize>,
    pub batch_size: Option<usize>,
    pub llm_url: Option<String>,
    pub llm_model: Option<String>,
    pub temperature: Option<f64>,
    pub timeout_s: Option<f64>,
    pub max_retries: Option<usize>,
    pub max_concurrency: Option<usize>,
    pub bind: Option<String>,
    pub model: Option<PathBuf>,
    pub max_body_bytes: Option<usize>,
    pub threshold_override: Option<f64>,
    pub workers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}
