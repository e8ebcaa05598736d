//! Checkpoint layout: `<stem>.json` holds the config, step and a parameter
//! index; `<stem>.bin` holds every parameter as little-endian `f32`,
//! concatenated in index order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ModelConfig, Tante};
use crate::error::{Error, Result};
use crate::tensor::Real;

pub const CHECKPOINT_FORMAT: &str = "tante-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
    /// Element count.
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub dtype: String,
    pub step: usize,
    pub config: ModelConfig,
    pub blob: String,
    pub params: Vec<ParamEntry>,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

pub fn save_checkpoint<R: Real>(model: &Tante<R>, step: usize, stem: &Path) -> Result<CheckpointManifest> {
    let (json_path, bin_path) = paths(stem);
    let mut blob = Vec::with_capacity(model.params.numel() * 4);
    let mut entries = Vec::with_capacity(model.params.len());
    for p in model.params.iter() {
        entries.push(ParamEntry { name: p.name.clone(), shape: p.shape.clone(), offset: blob.len(), len: p.data.len() });
        for v in &p.data {
            blob.extend_from_slice(&v.to_f32().expect("parameter fits f32").to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        dtype: "f32-le".into(),
        step,
        config: model.config.clone(),
        blob: bin_path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string(),
        params: entries,
    };
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&bin_path, &blob)?;
    fs::write(&json_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Rebuilds the model described by `<stem>.json` and fills it from the blob.
pub fn load_checkpoint<R: Real>(stem: &Path) -> Result<(Tante<R>, usize)> {
    let (json_path, _) = paths(stem);
    let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
    let bad = |reason: String| Error::Format { path: json_path.display().to_string(), reason };
    if manifest.format != CHECKPOINT_FORMAT || manifest.dtype != "f32-le" {
        return Err(bad(format!("unsupported format {} / {}", manifest.format, manifest.dtype)));
    }
    let bin_path = json_path.with_file_name(&manifest.blob);
    let blob = fs::read(&bin_path)?;
    let mut model = Tante::<R>::new(manifest.config.clone(), 0)?;
    if model.params.len() != manifest.params.len() {
        return Err(bad(format!("{} parameters listed, model has {}", manifest.params.len(), model.params.len())));
    }
    for entry in &manifest.params {
        let id = model.params.find(&entry.name).ok_or_else(|| bad(format!("unknown parameter {}", entry.name)))?;
        let param = model.params.get_mut(id);
        if param.shape != entry.shape || param.data.len() != entry.len {
            return Err(bad(format!("shape of {} is {:?}, expected {:?}", entry.name, entry.shape, param.shape)));
        }
        let end = entry.offset + 4 * entry.len;
        let bytes = blob.get(entry.offset..end).ok_or_else(|| bad(format!("{} runs past the blob", entry.name)))?;
        for (dst, chunk) in param.data.iter_mut().zip(bytes.chunks_exact(4)) {
            let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            *dst = R::from_f32(v).expect("f32 converts to Real");
        }
    }
    Ok((model, manifest.step))
}
