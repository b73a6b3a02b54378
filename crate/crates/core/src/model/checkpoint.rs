use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::nn::{Conv1d, FilterBank, Sequential};

pub const CHECKPOINT_FORMAT: &str = "wavescope-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint: the network's layers with their row-major parameters,
/// plus the configuration and history of the run that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub history: Option<TrainHistory>,
    pub network: Sequential,
}

impl Checkpoint {
    pub fn new(model: &Model, train: Option<TrainConfig>, history: Option<TrainHistory>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model: model.config.clone(),
            train,
            history,
            network: model.net.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|source| Error::Path {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Path {
            path: path.to_path_buf(),
            source,
        })?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::format(format!(
                "{}: expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}, found {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        ckpt.model.validate()?;
        ckpt.network.validate()?;
        Ok(ckpt)
    }

    pub fn into_model(self) -> Model {
        Model {
            config: self.model,
            net: self.network,
        }
    }
}

/// Reads only the first 1-D convolution of a checkpoint, without
/// interpreting the rest of the file.
pub fn load_filter_bank(path: impl AsRef<Path>) -> Result<FilterBank> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Path {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let layer = value["network"]["layers"]
        .as_array()
        .and_then(|layers| layers.iter().find(|l| l["kind"] == "conv1d"))
        .ok_or_else(|| Error::format(format!("{}: no conv1d layer", path.display())))?;
    let c: Conv1d = serde_json::from_value(layer.clone())?;
    Conv1d::new(
        c.in_channels,
        c.out_channels,
        c.kernel,
        c.stride,
        c.weights,
        c.biases,
    )
}
