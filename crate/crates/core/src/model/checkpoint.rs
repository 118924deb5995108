use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EugatParams, ModelConfig};
use crate::error::{Error, Result};
use crate::ndiff::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// Serialised model weights with the configuration that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    /// Free-form echo of the run configuration.
    #[serde(default)]
    pub run: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(params: &EugatParams, config: &ModelConfig, seed: u64, run: serde_json::Value) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            seed,
            config: config.clone(),
            run,
            tensors: params
                .named_tensors()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: [t.rows(), t.cols()],
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the parameters, checking names and shapes against the config.
    pub fn params(&self) -> Result<EugatParams> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        self.config.validate()?;
        let mut params = EugatParams::zeros(&self.config);
        let expected: Vec<(String, (usize, usize))> =
            params.named_tensors().into_iter().map(|(n, t)| (n, t.shape())).collect();
        if expected.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((slot, (name, shape)), stored) in params.tensors_mut().into_iter().zip(&expected).zip(&self.tensors) {
            if &stored.name != name || (stored.shape[0], stored.shape[1]) != *shape {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` {:?} does not match expected `{name}` {shape:?}",
                    stored.name, stored.shape
                )));
            }
            *slot = Tensor::from_vec(shape.0, shape.1, stored.values.clone())?;
            if !slot.is_finite() {
                return Err(Error::Checkpoint(format!("tensor `{name}` has non-finite values")));
            }
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
