use std::path::Path;

use anyhow::{Context, Result};
use clap::parser::ValueSource;
use clap::ArgMatches;
use latrank::model::ModelConfig;
use latrank::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// Contents of `--config`. Every key is optional; flags given on the
/// command line win over these, and these win over built-in defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub train: Option<TrainConfig>,
    pub model: Option<ModelSpec>,
    pub omega_ms: Option<f64>,
    pub k_grid: Option<Vec<usize>>,
    pub n_retrieve: Option<usize>,
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Preset(String),
    Custom(ModelConfig),
}

impl ModelSpec {
    /// Presets take their embedding table size from the vocabulary in use.
    pub fn resolve(&self, vocab_len: usize) -> Result<ModelConfig> {
        match self {
            ModelSpec::Preset(name) => {
                let base = ModelConfig::preset(name)
                    .ok_or_else(|| latrank::Error::InvalidArgument(format!("unknown model preset {name:?}")))?;
                Ok(ModelConfig {
                    vocab_size: vocab_len,
                    ..base
                })
            }
            ModelSpec::Custom(cfg) => {
                cfg.validate()?;
                Ok(*cfg)
            }
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| latrank::Error::Io {
                path: path.to_owned(),
                source: e,
            })
            .context("reading config")?;
        let cfg = serde_json::from_str(&text)
            .map_err(latrank::Error::Json)
            .with_context(|| format!("config {}", path.display()))?;
        Ok(cfg)
    }
}

/// True when `id` was typed on the command line rather than defaulted.
pub fn given(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine | ValueSource::EnvVariable))
}

/// Flag if given, else file value, else the flag's default.
pub fn pick<T: Clone>(m: &ArgMatches, id: &str, flag: &T, file: Option<T>) -> T {
    if given(m, id) {
        flag.clone()
    } else {
        file.unwrap_or_else(|| flag.clone())
    }
}
