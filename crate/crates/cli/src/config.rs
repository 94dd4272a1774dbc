//! Optional `key = value` config file (TOML syntax). Command-line flags
//! override it; built-in defaults fill whatever neither sets.
//!
//! Keys: `scenario`, `mechanism`, `epsilon`, `delta`, `rows`, `cols`,
//! `records_per_cell`, `min_cohort`, `seed`, `data_seed`, `categories`,
//! `levels`, `epsilons`, `repetitions`, `scenarios`, `mechanisms`, `format`,
//! `host`, `port`, `static_dir`. The file path comes from `--config` or the
//! `GEODP_CONFIG` environment variable.
//!
//! ```toml
//! scenario = "income"
//! mechanism = "gaussian"
//! epsilon = 1.0
//! delta = 1.5e-7
//! seed = 7
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use geodp_core::extended_float::parse_f64;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

/// A float written as a number or as a string such as `"inf"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FloatOrText {
    Number(f64),
    Text(String),
}

impl FloatOrText {
    pub fn value(&self) -> Option<f64> {
        match self {
            FloatOrText::Number(v) => Some(*v),
            FloatOrText::Text(s) => parse_f64(s),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: Option<String>,
    pub mechanism: Option<String>,
    pub epsilon: Option<FloatOrText>,
    pub delta: Option<f64>,
    pub rows: Option<u64>,
    pub cols: Option<u64>,
    pub records_per_cell: Option<u64>,
    pub min_cohort: Option<u64>,
    pub seed: Option<u64>,
    pub data_seed: Option<u64>,
    pub categories: Option<u32>,
    pub levels: Option<u32>,
    pub epsilons: Option<Vec<FloatOrText>>,
    pub repetitions: Option<u64>,
    pub scenarios: Option<Vec<String>>,
    pub mechanisms: Option<Vec<String>>,
    pub format: Option<String>,
    pub host: Option<String>,
    pub port: Option<u16>,
    pub static_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|message| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        })
    }

    /// An empty config when no path was given.
    pub fn load_optional(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or(Ok(Self::default()), Self::load)
    }
}
