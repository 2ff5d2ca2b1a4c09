//! Versioned JSON checkpoints holding the model config and every named
//! parameter tensor. Floats round-trip bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_json_atomic};
use crate::mulcom::{ModelConfig, MulCom};
use crate::numerics::{ParamSet, Tensor};

pub const FORMAT: &str = "mulcom-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    #[serde(flatten)]
    pub tensor: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &MulCom) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config: model.config.clone(),
            params: model
                .params
                .iter()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    tensor: t.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the architecture from the config, then loads tensors by name.
    pub fn into_model(self) -> Result<MulCom> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format `{}` version {}",
                self.format, self.version
            )));
        }
        let mut model = MulCom::new(self.config, 0)?;
        let mut loaded = ParamSet::new();
        for p in self.params {
            if p.tensor.len() != p.tensor.shape().iter().product::<usize>() {
                return Err(Error::Config(format!("tensor `{}` has inconsistent shape", p.name)));
            }
            loaded.add(p.name, p.tensor);
        }
        model.params.load_from(&loaded)?;
        Ok(model)
    }
}

pub fn save(model: &MulCom, path: &Path) -> Result<()> {
    write_json_atomic(path, &Checkpoint::from_model(model))
}

pub fn load(path: &Path) -> Result<MulCom> {
    let text = read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    ck.into_model()
}
