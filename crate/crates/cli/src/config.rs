//! Run configuration files.
//!
//! One JSON document configures searches, training and evaluation. Unknown
//! keys are rejected everywhere; each command checks that the sections it
//! needs are present. The fully resolved configuration is echoed into the
//! run archive as `config.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use evanet_core::evolution::EvolutionConfig;
use evanet_core::genome::MetaKind;
use evanet_core::trainer::{
    default_surrogate_landscape, SurrogateLandscape, ToyVideoSpec, TrainConfig,
};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessKind {
    Surrogate,
    Train,
}

/// Surrogate landscape settings; without `target_seed` the frozen default
/// landscape is used.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateSection {
    pub target_seed: Option<u64>,
    pub noise: f64,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub evolution: Option<EvolutionConfig>,
    pub fitness: Option<FitnessKind>,
    pub surrogate: Option<SurrogateSection>,
    pub train: Option<TrainConfig>,
    pub data: Option<ToyVideoSpec>,
    pub out_dir: Option<PathBuf>,
}

/// Parse with position-carrying errors; also returns the raw document so
/// commands can detect explicitly-present keys.
pub fn load_config(path: &Path) -> Result<(RunConfigFile, serde_json::Value), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let raw: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let config: RunConfigFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    Ok((config, raw))
}

impl RunConfigFile {
    pub fn require_train(&self) -> Result<TrainConfig, CliError> {
        let config = self
            .train
            .clone()
            .ok_or_else(|| CliError::Usage("config needs a `train` section".into()))?;
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    pub fn require_data(&self) -> Result<ToyVideoSpec, CliError> {
        self.data
            .clone()
            .ok_or_else(|| CliError::Usage("config needs a `data` section".into()))
    }

    pub fn evolution_or_default(&self) -> EvolutionConfig {
        self.evolution.clone().unwrap_or_default()
    }

    /// Build the surrogate landscape for a run: the frozen default unless a
    /// target seed is given, in which case the target is sampled from the
    /// run's own meta and constraints.
    pub fn surrogate_landscape(&self, evolution: &EvolutionConfig) -> Result<SurrogateLandscape, CliError> {
        let section = self.surrogate.clone().unwrap_or_default();
        let mut landscape = match section.target_seed {
            Some(seed) => SurrogateLandscape::new(evanet_core::genome::sample_random_genome(
                evolution.meta,
                &evolution.constraints,
                seed,
            )),
            None => {
                if evolution.meta != MetaKind::Toy {
                    return Err(CliError::Usage(format!(
                        "the default surrogate landscape is toy-meta; meta `{}` needs surrogate.target_seed",
                        evolution.meta
                    )));
                }
                default_surrogate_landscape()
            }
        };
        landscape = landscape.with_noise(section.noise, section.noise_seed);
        Ok(landscape)
    }
}
