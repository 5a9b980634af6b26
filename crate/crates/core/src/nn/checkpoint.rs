//! Parameter checkpoints: a JSON manifest (name, shape, byte offset) next to
//! a raw little-endian f32 blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamStore, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointManifest {
    pub dtype: String,
    pub blob: String,
    pub rng_seed: u64,
    pub tensors: Vec<TensorRecord>,
    /// Model description used to validate shapes on load.
    pub config: serde_json::Value,
}

fn blob_path(manifest: &Path, blob: &str) -> PathBuf {
    manifest
        .parent()
        .map(|d| d.join(blob))
        .unwrap_or_else(|| PathBuf::from(blob))
}

pub fn save_checkpoint(
    params: &ParamStore<f32>,
    manifest_path: &Path,
    config: serde_json::Value,
) -> Result<()> {
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("params");
    let blob = format!("{stem}.bin");
    let mut bytes = Vec::with_capacity(params.num_params() * 4);
    let mut tensors = Vec::with_capacity(params.len());
    for entry in params.entries() {
        tensors.push(TensorRecord {
            name: entry.name.clone(),
            shape: entry.value.shape().to_vec(),
            offset: bytes.len(),
        });
        for v in entry.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        dtype: "f32le".into(),
        blob: blob.clone(),
        rng_seed: params.rng_seed(),
        tensors,
        config,
    };
    fs::write(blob_path(manifest_path, &blob), bytes)?;
    fs::write(manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<(ParamStore<f32>, serde_json::Value)> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::load(manifest_path, "manifest", e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::load(manifest_path, "manifest", e))?;
    if manifest.dtype != "f32le" {
        return Err(Error::load(manifest_path, "dtype", &manifest.dtype));
    }
    let blob_file = blob_path(manifest_path, &manifest.blob);
    let bytes = fs::read(&blob_file).map_err(|e| Error::load(&blob_file, "blob", e))?;
    let mut store = ParamStore::new(manifest.rng_seed);
    for record in &manifest.tensors {
        let n: usize = record.shape.iter().product();
        let end = record.offset + 4 * n;
        if end > bytes.len() {
            return Err(Error::load(
                &blob_file,
                &record.name,
                format!("needs bytes {}..{end}, blob has {}", record.offset, bytes.len()),
            ));
        }
        let data: Vec<f32> = bytes[record.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::load(&blob_file, &record.name, "non-finite value"));
        }
        store.insert(&record.name, Tensor::from_vec(&record.shape, data)?)?;
    }
    Ok((store, manifest.config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::<f32>::new(42);
        store.insert_glorot("a.weight", &[3, 4], 3, 4).unwrap();
        store
            .insert("a.bias", Tensor::vector(vec![f32::MIN_POSITIVE, -0.0, 1e-30, 3.5]))
            .unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&store, &path, serde_json::json!({"k": 1})).unwrap();
        let (loaded, config) = load_checkpoint(&path).unwrap();
        assert_eq!(config["k"], 1);
        assert_eq!(loaded.rng_seed(), 42);
        for (a, b) in store.entries().iter().zip(loaded.entries()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.shape(), b.value.shape());
            let bits_a: Vec<u32> = a.value.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::<f32>::new(0);
        store.insert_glorot("w", &[4, 4], 4, 4).unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&store, &path, serde_json::Value::Null).unwrap();
        let blob = dir.path().join("m.bin");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 3]).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains('w'));
    }
}
