//! Optional TOML run configuration. Command-line flags take precedence.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub top_x: Option<String>,
    pub seed: Option<u64>,
    pub min_stage_fraction: Option<f64>,
    pub min_class_size: Option<usize>,
    pub split_fraction: Option<f64>,
    pub max_len: Option<usize>,
    pub cancer_type: Option<String>,
    pub unselected: Option<String>,
    pub oversample: Option<bool>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub embed_dim: Option<usize>,
    pub hidden: Option<usize>,
    pub dense: Option<usize>,
    pub threshold: Option<f64>,
    pub threads: Option<usize>,
    pub grid: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }
}

/// Parses a `top_x` value; `all` disables filtering.
pub fn parse_top_x(raw: &str) -> Result<usize, String> {
    match raw.trim() {
        "all" | "ALL" => Ok(usize::MAX),
        s => match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("`{s}` is not a positive integer or `all`")),
            Ok(n) => Ok(n),
        },
    }
}

pub fn parse_grid(raw: &str) -> Result<Vec<usize>, String> {
    raw.split(',').map(parse_top_x).collect()
}
