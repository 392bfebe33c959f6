//! Model files: `model.json` lists tensors, `weights.bin` holds their
//! little-endian `f32` data concatenated in manifest order.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::{ModelParams, Tensor};
use crate::error::{Error, Result};

pub const MODEL_MANIFEST: &str = "model.json";
pub const MODEL_BLOB: &str = "weights.bin";
pub const DTYPE_F32LE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub entries: Vec<TensorRecord>,
}

pub fn save_model(params: &ModelParams<f32>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::with_capacity(params.param_count() * 4);
    let mut entries = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        entries.push(TensorRecord {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype: DTYPE_F32LE.to_string(),
            byte_offset: blob.len() as u64,
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut json = serde_json::to_vec_pretty(&ModelManifest { entries })?;
    json.push(b'\n');
    fs::write(dir.join(MODEL_MANIFEST), json)?;
    fs::write(dir.join(MODEL_BLOB), blob)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<ModelParams<f32>> {
    let manifest_path = dir.join(MODEL_MANIFEST);
    let blob_path = dir.join(MODEL_BLOB);
    for p in [&manifest_path, &blob_path] {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let manifest: ModelManifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
    let blob = fs::read(&blob_path)?;

    let mut seen = HashSet::new();
    let mut spans = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        if e.dtype != DTYPE_F32LE {
            return Err(Error::UnknownDtype(e.dtype.clone()));
        }
        if !seen.insert(e.name.as_str()) {
            return Err(Error::DuplicateName(e.name.clone()));
        }
        let bytes = e.shape.iter().product::<usize>() as u64 * 4;
        spans.push((e.byte_offset, e.byte_offset + bytes, e.name.as_str()));
    }
    spans.sort_unstable();
    for pair in spans.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::OffsetMismatch(format!("tensors {:?} and {:?} overlap", pair[0].2, pair[1].2)));
        }
    }
    let needed = spans.iter().map(|s| s.1).max().unwrap_or(0);
    let found = blob.len() as u64;
    if needed > found {
        return Err(Error::Truncated { needed, found });
    }
    let used: u64 = spans.iter().map(|s| s.1 - s.0).sum();
    if used != found {
        return Err(Error::OffsetMismatch(format!(
            "{MODEL_BLOB} holds {found} bytes, manifest tensors cover {used}"
        )));
    }

    let mut params = ModelParams::new();
    for e in manifest.entries {
        let start = e.byte_offset as usize;
        let n: usize = e.shape.iter().product();
        let data = blob[start..start + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.insert(e.name, Tensor::new(e.shape, data)?)?;
    }
    Ok(params)
}
