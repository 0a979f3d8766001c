//! Run configuration: model, sampler, trainer, datasets, seed and output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use ushape_core::data::{DatasetRegistry, SamplerConfig};
use ushape_core::model::ModelConfig;
use ushape_core::train::TrainerConfig;
use ushape_core::Error;

/// A preset name or a full model configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Preset(String),
    Full(ModelConfig),
}

/// A registry file path or an inline registry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegistrySpec {
    Path(PathBuf),
    Inline(DatasetRegistry),
}

/// The configuration file as written by hand.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub model: ModelSpec,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    pub registry: RegistrySpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// Fully resolved configuration. Written to every run directory as `config.json`;
/// feeding that file back in reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
    pub trainer: TrainerConfig,
    pub registry: RegistrySpec,
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn config_err(msg: String) -> anyhow::Error {
    anyhow::Error::new(Error::Config(msg))
}

impl RunConfig {
    pub fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))
            .context("reading run config")?;
        let file: RunConfigFile = serde_json::from_str(&text)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::resolve(file, base, seed, out)
    }

    pub fn resolve(
        file: RunConfigFile,
        base: &Path,
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<Self> {
        let model = match file.model {
            ModelSpec::Preset(name) => ModelConfig::preset(&name)
                .ok_or_else(|| config_err(format!("unknown model preset {name:?}")))?,
            ModelSpec::Full(m) => m,
        };
        model.validate()?;
        let seed = seed.unwrap_or(file.seed);
        let sampler = SamplerConfig {
            seed,
            ..file.sampler
        };
        sampler.validate()?;
        file.trainer.validate()?;
        let registry = match file.registry {
            RegistrySpec::Path(p) => RegistrySpec::Path(absolute(base, &p)),
            RegistrySpec::Inline(mut r) => {
                for entry in r.datasets.values_mut() {
                    if let Some(p) = &entry.path {
                        entry.path = Some(absolute(base, p));
                    }
                }
                RegistrySpec::Inline(r)
            }
        };
        let out_dir = match out.or(file.out_dir) {
            Some(p) => absolute(&std::env::current_dir()?, &p),
            None => {
                return Err(config_err(
                    "no output directory: set out_dir or pass --out".into(),
                ))
            }
        };
        Ok(RunConfig {
            model,
            sampler,
            trainer: file.trainer,
            registry,
            seed,
            out_dir,
        })
    }

    pub fn registry(&self) -> Result<DatasetRegistry> {
        Ok(match &self.registry {
            RegistrySpec::Path(p) => DatasetRegistry::from_file(p)?,
            RegistrySpec::Inline(r) => r.clone(),
        })
    }

    /// Creates the output directory and writes the resolved configuration into it.
    pub fn prepare_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out_dir.join("config.json");
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
