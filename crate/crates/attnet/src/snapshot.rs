//! Versioned binary model snapshot.
//!
//! Layout: 4-byte magic, u32 format version, u64 manifest length, manifest
//! JSON (config echo, corpus hashes, matrix directory), then every parameter
//! matrix as raw little-endian f64 in manifest order. Round-trips are
//! bit-exact and writes are atomic.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::model::config::ModelConfig;
use crate::model::params::{Model, ParamStore};
use crate::train::TrainConfig;

const MAGIC: &[u8; 4] = b"ATNS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixInfo {
    pub store: usize,
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub format_version: u32,
    /// Global model configuration (n_target spans all stores).
    pub model: ModelConfig,
    /// Echo of the run configuration that produced this model.
    pub train: Option<TrainConfig>,
    pub vocab_hash: String,
    pub target_hash: String,
    pub best_epoch: Option<usize>,
    pub best_val_f: Option<f64>,
    pub stores: usize,
    pub matrices: Vec<MatrixInfo>,
}

pub struct SnapshotMeta {
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub vocab_hash: String,
    pub target_hash: String,
    pub best_epoch: Option<usize>,
    pub best_val_f: Option<f64>,
}

/// Serializes the model with its manifest and writes it atomically.
pub fn save_snapshot(path: &Path, model: &Model, meta: &SnapshotMeta) -> Result<()> {
    let mut matrices = Vec::new();
    let mut data: Vec<u8> = Vec::new();
    for (store_idx, store) in model.stores().iter().enumerate() {
        store.for_each(|name, m| {
            matrices.push(MatrixInfo {
                store: store_idx,
                name: name.to_string(),
                rows: m.rows(),
                cols: m.cols(),
            });
            for &x in m.as_slice() {
                data.extend_from_slice(&x.to_le_bytes());
            }
        });
    }
    let manifest = SnapshotManifest {
        format_version: FORMAT_VERSION,
        model: meta.model.clone(),
        train: meta.train.clone(),
        vocab_hash: meta.vocab_hash.clone(),
        target_hash: meta.target_hash.clone(),
        best_epoch: meta.best_epoch,
        best_val_f: meta.best_val_f,
        stores: model.stores().len(),
        matrices,
    };
    let manifest_json = serde_json::to_vec(&manifest)?;

    let mut bytes = Vec::with_capacity(16 + manifest_json.len() + data.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&manifest_json);
    bytes.extend_from_slice(&data);
    write_atomic(path, &bytes)?;
    Ok(())
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<(SnapshotManifest, usize)> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::data(format!(
            "{} is not a model snapshot (bad magic)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::data(format!(
            "unsupported snapshot version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let manifest_end = 16 + manifest_len;
    if bytes.len() < manifest_end {
        return Err(Error::data(format!("{} is truncated", path.display())));
    }
    let manifest: SnapshotManifest = serde_json::from_slice(&bytes[16..manifest_end])?;
    Ok((manifest, manifest_end))
}

/// Reads only the manifest.
pub fn read_manifest(path: &Path) -> Result<SnapshotManifest> {
    let bytes = fs::read(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_header(&bytes, path)?.0)
}

/// Loads manifest and parameters. Matrix data is restored bit-exactly.
pub fn load_snapshot(path: &Path) -> Result<(SnapshotManifest, Model)> {
    let bytes = fs::read(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let (manifest, data_start) = parse_header(&bytes, path)?;

    let mut stores: Vec<ParamStore> = (0..manifest.stores)
        .map(|_| {
            let cfg = if manifest.stores > 1 {
                ModelConfig {
                    n_target: 1,
                    ..manifest.model.clone()
                }
            } else {
                manifest.model.clone()
            };
            ParamStore::zeroed(&cfg)
        })
        .collect::<Result<_>>()?;

    let mut offset = data_start;
    for info in &manifest.matrices {
        let store = stores
            .get_mut(info.store)
            .ok_or_else(|| Error::data("matrix directory references missing store"))?;
        let m = store
            .matrix_mut(&info.name)
            .ok_or_else(|| Error::data(format!("unknown matrix {:?} in snapshot", info.name)))?;
        if m.rows() != info.rows || m.cols() != info.cols {
            return Err(Error::data(format!(
                "matrix {:?} has shape {}x{} in snapshot but {}x{} in config",
                info.name,
                info.rows,
                info.cols,
                m.rows(),
                m.cols()
            )));
        }
        let n_bytes = info.rows * info.cols * 8;
        let end = offset + n_bytes;
        if bytes.len() < end {
            return Err(Error::data(format!("{} is truncated", path.display())));
        }
        for (slot, chunk) in m.as_mut_slice().iter_mut().zip(bytes[offset..end].chunks_exact(8)) {
            *slot = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        offset = end;
    }
    if offset != bytes.len() {
        return Err(Error::data(format!(
            "{} has {} trailing bytes",
            path.display(),
            bytes.len() - offset
        )));
    }

    let model = if manifest.stores > 1 {
        Model::PerTarget(stores)
    } else {
        Model::Single(stores.pop().expect("one store"))
    };
    Ok((manifest, model))
}
