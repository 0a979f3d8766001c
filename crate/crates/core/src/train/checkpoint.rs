//! Checkpoint file: magic, manifest length, JSON manifest, f32 payload.
//!
//! ```text
//! b"USHPCKPT" | u64 LE manifest byte length | manifest JSON | payload
//! ```
//!
//! The payload is every parameter's values as little-endian `f32`,
//! concatenated in manifest order, so its length is `Σ 4 · product(shape)`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParameterStore, UShapedModel};
use crate::tensor::Tensor;
use crate::Scalar;

pub const MAGIC: &[u8; 8] = b"USHPCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub frozen: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub seed: u64,
    pub params: Vec<ParamEntry>,
}

fn ckpt_err(field: impl Into<String>, detail: impl Into<String>) -> Error {
    Error::Checkpoint {
        field: field.into(),
        detail: detail.into(),
    }
}

pub fn encode<T: Scalar>(model: &UShapedModel<T>, seed: u64) -> Result<Vec<u8>> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        seed,
        params: model
            .params
            .iter()
            .map(|(name, p)| ParamEntry {
                name: name.clone(),
                shape: p.tensor.shape().to_vec(),
                frozen: p.frozen,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * model.params.scalar_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in model.params.iter() {
        for v in p.tensor.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(UShapedModel<T>, Manifest)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(ckpt_err("magic", "not a checkpoint file"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let json = bytes
        .get(16..16 + len)
        .ok_or_else(|| ckpt_err("manifest", format!("truncated: need {len} bytes")))?;
    let manifest: Manifest =
        serde_json::from_slice(json).map_err(|e| ckpt_err("manifest", e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ckpt_err(
            "format_version",
            format!(
                "found {}, expected {FORMAT_VERSION}",
                manifest.format_version
            ),
        ));
    }
    let payload = &bytes[16 + len..];
    let expected: usize = manifest
        .params
        .iter()
        .map(|p| 4 * p.shape.iter().product::<usize>())
        .sum();
    if payload.len() != expected {
        return Err(ckpt_err(
            "payload",
            format!("{} bytes, manifest needs {expected}", payload.len()),
        ));
    }
    let mut params = ParameterStore::new();
    let mut offset = 0;
    for entry in &manifest.params {
        let n: usize = entry.shape.iter().product();
        let data = payload[offset..offset + 4 * n]
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        offset += 4 * n;
        let t = Tensor::new(entry.shape.clone(), data)
            .map_err(|e| ckpt_err(&entry.name, e.to_string()))?;
        params
            .insert(entry.name.clone(), t)
            .map_err(|e| ckpt_err(&entry.name, e.to_string()))?;
        params.get_mut(&entry.name).expect("just inserted").frozen = entry.frozen;
    }
    manifest.config.validate()?;
    let model = UShapedModel {
        config: manifest.config.clone(),
        params,
    };
    Ok((model, manifest))
}

pub fn save_checkpoint<T: Scalar>(
    model: &UShapedModel<T>,
    seed: u64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(model, seed)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<(UShapedModel<T>, Manifest)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Loads a checkpoint and checks every parameter against the layout `config` would build.
///
/// The first parameter whose name or shape disagrees is named in the error.
pub fn load_checkpoint_for<T: Scalar>(
    path: impl AsRef<Path>,
    config: &ModelConfig,
) -> Result<(UShapedModel<T>, Manifest)> {
    let (model, manifest) = load_checkpoint::<T>(path)?;
    let template = UShapedModel::<T>::new(config.clone(), 0)?;
    {
        let mut got = model.params.iter();
        for (name, p) in template.params.iter() {
            match got.next() {
                Some((n, q)) if n == name && q.tensor.shape() == p.tensor.shape() => {}
                Some((n, q)) => {
                    return Err(ckpt_err(
                        name.clone(),
                        format!(
                            "shape mismatch: config expects {name} {:?}, checkpoint has {n} {:?}",
                            p.tensor.shape(),
                            q.tensor.shape()
                        ),
                    ))
                }
                None => return Err(ckpt_err(name.clone(), "missing from checkpoint")),
            }
        }
        if let Some((n, _)) = got.next() {
            return Err(ckpt_err(n.clone(), "not expected by config"));
        }
    }
    let model = UShapedModel {
        config: config.clone(),
        params: model.params,
    };
    Ok((model, manifest))
}
