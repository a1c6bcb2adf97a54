//! Run configuration in TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morph::GenParams;
use crate::net::{NetworkSpec, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NetworkPreset {
    #[default]
    Full,
    Micro,
}

impl NetworkPreset {
    pub fn spec(self) -> NetworkSpec {
        match self {
            NetworkPreset::Full => NetworkSpec::default(),
            NetworkPreset::Micro => NetworkSpec::micro(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub identities: usize,
    pub expressions: usize,
    pub neutral_first: bool,
    pub id_offset: usize,
    /// Toy model size when no model file is given.
    pub toy_vertices: usize,
    pub toy_shape_dim: usize,
    pub toy_expr_dim: usize,
    /// Seed of the toy model itself; sets generated for the same experiment
    /// must share it.
    pub toy_model_seed: u64,
    pub generation: GenParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            identities: 30,
            expressions: 20,
            neutral_first: true,
            id_offset: 0,
            toy_vertices: 2000,
            toy_shape_dim: 20,
            toy_expr_dim: 20,
            toy_model_seed: 1,
            generation: GenParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub far_target: f64,
    /// Allow the max-z nose-tip fallback for clouds without one.
    pub nose_heuristic: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            far_target: 1e-3,
            nose_heuristic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub preset: NetworkPreset,
    pub dataset: DatasetConfig,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("run"),
            preset: NetworkPreset::Full,
            dataset: DatasetConfig::default(),
            network: NetworkSpec::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Parses a partial TOML document on top of the defaults. A `preset`
    /// key selects the base network before `[network]` overrides apply.
    pub fn from_toml(text: &str) -> Result<Self> {
        let over: toml::Value = toml::from_str(text).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        let preset: NetworkPreset = match over.get("preset") {
            Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| Error::Parse {
                line: 0,
                message: e.to_string(),
            })?,
            None => NetworkPreset::Full,
        };
        let base = RunConfig {
            preset,
            network: preset.spec(),
            ..RunConfig::default()
        };
        let mut value = toml::Value::try_from(&base).map_err(|e| Error::invalid(e.to_string()))?;
        merge(&mut value, over);
        let cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config does not serialize: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Serde {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::invalid("seed must fit in a signed 64-bit integer"));
        }
        if self.dataset.identities == 0 || self.dataset.expressions == 0 {
            return Err(Error::invalid("dataset needs at least one identity and expression"));
        }
        self.dataset.generation.validate()?;
        self.network.validate()?;
        self.train.validate()?;
        if !(self.eval.far_target > 0.0 && self.eval.far_target <= 1.0) {
            return Err(Error::invalid("FAR target must lie in (0, 1]"));
        }
        Ok(())
    }
}
