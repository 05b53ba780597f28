//! On-disk model format: `manifest.json` next to `weights.bin`.
//!
//! `weights.bin` is the concatenation of every parameter block in
//! checkpoint order (see [`FosaeModel`]), each row-major, as
//! little-endian IEEE-754 64-bit floats. The manifest lists the block
//! names and shapes so the blob can be read without this crate.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

use super::config::FosaeConfig;
use super::model::{parameter_names, parameter_shapes, FosaeModel};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config: FosaeConfig,
    pub seed: u64,
    pub epoch: usize,
    /// Precision the model was trained at.
    pub precision: String,
    pub parameter_count: usize,
    /// Free-form metrics recorded at save time.
    #[serde(default)]
    pub metrics: serde_json::Map<String, serde_json::Value>,
    pub tensors: Vec<TensorEntry>,
}

impl CheckpointManifest {
    pub fn for_model<T: Scalar>(model: &FosaeModel<T>, epoch: usize) -> Self {
        let cfg = model.config();
        CheckpointManifest {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: cfg.clone(),
            seed: cfg.seed,
            epoch,
            precision: T::NAME.to_string(),
            parameter_count: model.count_parameters(),
            metrics: serde_json::Map::new(),
            tensors: parameter_names(cfg)
                .into_iter()
                .zip(parameter_shapes(cfg))
                .map(|(name, shape)| TensorEntry { name, shape })
                .collect(),
        }
    }
}

pub fn encode_weights<T: Scalar>(model: &FosaeModel<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(model.count_parameters() * 8);
    for p in model.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    out
}

pub fn decode_weights<T: Scalar>(config: &FosaeConfig, bytes: &[u8]) -> Result<FosaeModel<T>> {
    let shapes = parameter_shapes(config);
    let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if bytes.len() != total * 8 {
        return Err(Error::Format(format!(
            "weight blob holds {} bytes, expected {}",
            bytes.len(),
            total * 8
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| T::from_f64_lossy(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))));
    let params = shapes
        .into_iter()
        .map(|shape| {
            let n = shape.iter().product();
            Tensor::new(shape, values.by_ref().take(n).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    FosaeModel::from_params(config.clone(), params)
}

pub fn save_checkpoint<T: Scalar>(dir: &Path, model: &FosaeModel<T>, manifest: &CheckpointManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(WEIGHTS_FILE), encode_weights(model))?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(FosaeModel<T>, CheckpointManifest)> {
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {}",
            manifest.format_version
        )));
    }
    let model = decode_weights(&manifest.config, &fs::read(dir.join(WEIGHTS_FILE))?)?;
    Ok((model, manifest))
}
