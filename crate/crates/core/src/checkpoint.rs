//! Single-file checkpoints: named parameter arrays in safetensors layout with
//! the configuration and vocabulary carried in the header metadata.

use std::collections::HashMap;
use std::path::Path;

use acgn_sim::Vocabulary;
use acgn_tensor::{Float, ParamStore, Tensor};
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::{CoreError, Result};
use crate::model::Model;

pub const CHECKPOINT_FORMAT: &str = "acgn-checkpoint/1";

/// Header record. Stored as one JSON string under a single metadata key so
/// the file bytes do not depend on hash-map iteration order.
#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    config: ModelConfig,
    vocabulary: Vocabulary,
    step: u64,
    note: String,
}

const META_KEY: &str = "acgn";

/// Free-form provenance stored next to the weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointInfo {
    pub step: u64,
    pub note: String,
}

fn encode_params<T: Float>(params: &ParamStore<T>) -> Vec<(String, Dtype, Vec<usize>, Vec<u8>)> {
    let wide = std::mem::size_of::<T>() == 8;
    params
        .iter()
        .map(|(name, t)| {
            let bytes: Vec<u8> = if wide {
                t.data()
                    .iter()
                    .flat_map(|v| v.as_f64().to_le_bytes())
                    .collect()
            } else {
                t.data()
                    .iter()
                    .flat_map(|v| (v.as_f64() as f32).to_le_bytes())
                    .collect()
            };
            let dtype = if wide { Dtype::F64 } else { Dtype::F32 };
            (name.to_string(), dtype, t.shape().to_vec(), bytes)
        })
        .collect()
}

/// Serializes `model` to bytes.
pub fn to_bytes<T: Float>(model: &Model<T>, info: &CheckpointInfo) -> Result<Vec<u8>> {
    let header = Header {
        format: CHECKPOINT_FORMAT.to_string(),
        config: model.config.clone(),
        vocabulary: model.vocab.clone(),
        step: info.step,
        note: info.note.clone(),
    };
    let meta = HashMap::from([(
        META_KEY.to_string(),
        serde_json::to_string(&header).expect("header serializes"),
    )]);
    let encoded = encode_params(&model.params);
    let views = encoded
        .iter()
        .map(|(name, dtype, shape, bytes)| {
            safetensors::tensor::TensorView::new(*dtype, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(|e| CoreError::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    safetensors::serialize(views, Some(meta)).map_err(|e| CoreError::Checkpoint(e.to_string()))
}

/// Parses a checkpoint from bytes.
pub fn from_bytes<T: Float>(bytes: &[u8]) -> Result<(Model<T>, CheckpointInfo)> {
    let bad = |m: String| CoreError::Checkpoint(m);
    let (_, header) = SafeTensors::read_metadata(bytes).map_err(|e| bad(e.to_string()))?;
    let raw = header
        .metadata()
        .as_ref()
        .and_then(|m| m.get(META_KEY))
        .ok_or_else(|| bad("missing checkpoint header".into()))?;
    let head: Header = serde_json::from_str(raw).map_err(|e| bad(format!("header: {e}")))?;
    if head.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unsupported format `{}`", head.format)));
    }
    let (config, vocab) = (head.config, head.vocabulary);
    config.validate()?;
    config.check_vocab(&vocab)?;
    let info = CheckpointInfo {
        step: head.step,
        note: head.note,
    };
    let st = SafeTensors::deserialize(bytes).map_err(|e| bad(e.to_string()))?;
    let mut params = ParamStore::new();
    for (name, view) in st.iter() {
        let data: Vec<T> = match view.dtype() {
            Dtype::F32 => view
                .data()
                .chunks_exact(4)
                .map(|c| {
                    T::from_f64_lossy(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                })
                .collect(),
            Dtype::F64 => view
                .data()
                .chunks_exact(8)
                .map(|c| T::from_f64_lossy(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect(),
            other => {
                return Err(bad(format!(
                    "tensor `{name}` has unsupported dtype {other:?}"
                )))
            }
        };
        params.insert(name, Tensor::new(view.shape().to_vec(), data)?);
    }
    let expected = crate::baseline::config_parameter_count(&config);
    if params.parameter_count() != expected {
        return Err(bad(format!(
            "{} parameters stored, configuration implies {expected}",
            params.parameter_count()
        )));
    }
    Ok((
        Model {
            config,
            vocab,
            params,
        },
        info,
    ))
}

pub fn save<T: Float>(model: &Model<T>, info: &CheckpointInfo, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CoreError::io(dir))?;
    }
    let bytes = to_bytes(model, info)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(CoreError::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(CoreError::io(path))
}

pub fn load<T: Float>(path: &Path) -> Result<(Model<T>, CheckpointInfo)> {
    let bytes = std::fs::read(path).map_err(CoreError::io(path))?;
    from_bytes(&bytes)
}

/// Hex SHA-256 of the checkpoint file contents.
pub fn digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(CoreError::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
