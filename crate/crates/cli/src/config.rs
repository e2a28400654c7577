//! TOML run configuration: an optional named preset overlaid with explicit keys.

use std::path::Path;

use oosguard::data::SyntheticSpec;
use oosguard::featurizer::DEFAULT_FEATURE_DIM;
use oosguard::training::TrainConfig;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const DEFAULT_PRESET: &str = "clinc150";

/// Featurizer settings used when training on text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizerSection {
    pub dim: usize,
    pub seed: u64,
}

impl Default for FeaturizerSection {
    fn default() -> Self {
        Self {
            dim: DEFAULT_FEATURE_DIM,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub featurizer: FeaturizerSection,
}

fn read_table(path: &Path) -> CliResult<toml::Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
}

fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Preset precedence: `preset_flag`, then the file's `preset` key, then the default.
pub fn load_run_config(path: Option<&Path>, preset_flag: Option<&str>) -> CliResult<RunConfig> {
    let mut table = match path {
        Some(p) => read_table(p)?,
        None => toml::Table::new(),
    };
    let file_preset = match table.remove("preset") {
        Some(toml::Value::String(s)) => Some(s),
        Some(_) => return Err(CliError::usage("config key 'preset' must be a string")),
        None => None,
    };
    let featurizer = match table.remove("featurizer") {
        Some(v) => v
            .try_into()
            .map_err(|e| CliError::usage(format!("invalid [featurizer] section: {e}")))?,
        None => FeaturizerSection::default(),
    };
    let preset = preset_flag.or(file_preset.as_deref()).unwrap_or(DEFAULT_PRESET);
    let base = TrainConfig::preset(preset)?;
    let mut merged = toml::Table::try_from(&base).map_err(|e| CliError::usage(e.to_string()))?;
    overlay(&mut merged, table);
    let train: TrainConfig = merged
        .try_into()
        .map_err(|e| CliError::usage(format!("invalid training config: {e}")))?;
    train.validate()?;
    Ok(RunConfig { train, featurizer })
}

pub fn load_synthetic_spec(path: Option<&Path>) -> CliResult<SyntheticSpec> {
    match path {
        Some(p) => read_table(p)?
            .try_into()
            .map_err(|e| CliError::usage(format!("invalid synthetic spec: {e}"))),
        None => Ok(SyntheticSpec::default()),
    }
}
