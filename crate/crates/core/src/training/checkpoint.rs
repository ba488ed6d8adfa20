//! JSON checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NormalizationStats;
use crate::error::{Error, Result};
use crate::model::{expected_shapes, ModelConfig, ModelParameters};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub stats: NormalizationStats,
    pub params: ModelParameters,
    /// Column names the model was trained on, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<ChannelNames>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelNames {
    pub target: Vec<String>,
    pub future: Vec<String>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, stats: NormalizationStats, params: ModelParameters) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config,
            stats,
            params,
            names: None,
        }
    }

    pub fn with_names(mut self, target: &[String], future: &[String]) -> Self {
        self.names = Some(ChannelNames {
            target: target.to_vec(),
            future: future.to_vec(),
        });
        self
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        serde_json::to_vec(self).map_err(|e| Error::Checkpoint(format!("serialization failed: {e}")))
    }

    /// Parses and validates a checkpoint: version, and every tensor the
    /// configuration needs present with the right shape and nothing else.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            version: u32,
        }
        let v: Version =
            serde_json::from_slice(bytes).map_err(|e| Error::Checkpoint(format!("corrupt checkpoint: {e}")))?;
        if v.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                v.version
            )));
        }
        let ck: Checkpoint =
            serde_json::from_slice(bytes).map_err(|e| Error::Checkpoint(format!("corrupt checkpoint: {e}")))?;
        ck.config
            .validate()
            .map_err(|e| Error::Checkpoint(format!("invalid stored configuration: {e}")))?;
        let expected = expected_shapes(&ck.config);
        if expected.len() != ck.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, configuration needs {}",
                ck.params.len(),
                expected.len()
            )));
        }
        for (name, shape) in expected {
            match ck.params.get(&name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::Checkpoint(format!(
                        "tensor `{name}` has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                None => return Err(Error::Checkpoint(format!("tensor `{name}` is missing"))),
            }
        }
        if ck.stats.target.len() != ck.config.channels {
            return Err(Error::Checkpoint("normalization stats do not match channel count".into()));
        }
        if let Some(n) = &ck.names {
            if n.target.len() != ck.config.channels {
                return Err(Error::Checkpoint("stored target names do not match channel count".into()));
            }
        }
        Ok(ck)
    }
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParameters,
    stats: &NormalizationStats,
    config: &ModelConfig,
) -> Result<()> {
    let bytes = Checkpoint::new(config.clone(), stats.clone(), params.clone()).to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
