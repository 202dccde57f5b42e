use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::ParamStore;
use crate::error::{Error, Result};

/// Metadata written next to every parameter archive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub step: u64,
    /// Architecture needed to rebuild the network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<super::ModelConfig>,
}

pub fn sidecar_path(archive: &Path) -> PathBuf {
    archive.with_extension("json")
}

/// Writes every parameter and buffer as safetensors, plus the sidecar.
pub fn save_store(store: &ParamStore, path: &Path, sidecar: &Sidecar) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tensors: HashMap<String, Tensor> = store
        .named_tensors()
        .map(|(n, v)| (n.to_string(), v.as_tensor().detach()))
        .collect();
    candle_core::safetensors::save(&tensors, path)?;
    let json = serde_json::to_string_pretty(sidecar)?;
    let side = sidecar_path(path);
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn read_sidecar(archive: &Path) -> Result<Sidecar> {
    let side = sidecar_path(archive);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: side,
        line: e.line(),
        message: e.to_string(),
    })
}

/// Overwrites `store` in place from an archive written by [`save_store`].
pub fn load_store(store: &ParamStore, path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
        ));
    }
    let tensors = candle_core::safetensors::load(path, store.device())?;
    for (name, var) in store.named_tensors() {
        let t = tensors.get(name).ok_or_else(|| {
            Error::Validation(format!("{}: missing tensor `{name}`", path.display()))
        })?;
        if t.dims() != var.dims() {
            return Err(Error::Shape(format!(
                "{}: `{name}` has shape {:?}, expected {:?}",
                path.display(),
                t.dims(),
                var.dims()
            )));
        }
        var.set(&t.to_dtype(var.dtype())?)?;
    }
    if tensors.len() != store.named_tensors().count() {
        return Err(Error::Validation(format!(
            "{}: archive holds {} tensors, network has {}",
            path.display(),
            tensors.len(),
            store.named_tensors().count()
        )));
    }
    Ok(())
}

/// Hex sha256 over every parameter and buffer (names and values).
pub fn store_hash(store: &ParamStore) -> Result<String> {
    let mut h = Sha256::new();
    for (name, var) in store.named_tensors() {
        h.update(name.as_bytes());
        let values = var
            .as_tensor()
            .to_dtype(DType::F64)?
            .flatten_all()?
            .to_vec1::<f64>()?;
        for v in values {
            h.update(v.to_le_bytes());
        }
    }
    Ok(hex::encode(h.finalize()))
}
