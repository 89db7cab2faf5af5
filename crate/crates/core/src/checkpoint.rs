//! Checkpoints: a JSON manifest plus a little-endian `f64` blob.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::net::model::{EvStats, Model, ModelSpec};
use crate::net::params::ParamEntry;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub basis: BasisSet,
    pub elements: Vec<u32>,
    pub params: Vec<ParamEntry>,
    pub stats: Vec<EvStats>,
    pub input_scale: Vec<f64>,
    /// File name of the blob, relative to the manifest.
    pub blob: String,
}

/// Little-endian bytes of the parameter vector.
pub fn encode_blob(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_blob(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!("blob length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn manifest(model: &Model, blob_name: &str) -> Manifest {
    Manifest {
        format_version: FORMAT_VERSION,
        spec: model.spec.clone(),
        basis: model.basis.clone(),
        elements: model.elements.clone(),
        params: model.params.entries().to_vec(),
        stats: model.stats.clone(),
        input_scale: model.input_scale.clone(),
        blob: blob_name.to_string(),
    }
}

/// Write `<stem>.json` and `<stem>.bin`; returns the manifest path.
pub fn save(model: &Model, dir: &Path, stem: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let blob_name = format!("{stem}.bin");
    let m = manifest(model, &blob_name);
    let path = dir.join(format!("{stem}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&m)?)?;
    std::fs::write(dir.join(&blob_name), encode_blob(model.params.values()))?;
    Ok(path)
}

/// Rebuild a model from a manifest path.
pub fn load(manifest_path: &Path) -> Result<Model> {
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {}", m.format_version)));
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let bytes = std::fs::read(dir.join(&m.blob))?;
    let expected: usize = m.params.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    if bytes.len() != 8 * expected {
        return Err(Error::Checkpoint(format!(
            "blob has {} bytes, manifest needs {}",
            bytes.len(),
            8 * expected
        )));
    }
    let mut model = Model::new(m.spec, m.basis, 0)?;
    if model.elements != m.elements {
        return Err(Error::Checkpoint("element table does not match the basis set".into()));
    }
    model.params.check_entries(&m.params)?;
    model.params.set_values(decode_blob(&bytes)?)?;
    model.stats = m.stats;
    model.input_scale = m.input_scale;
    model.validate_stats()?;
    Ok(model)
}
