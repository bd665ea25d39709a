use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::json::parse;
use super::FORMAT_VERSION;
use crate::error::{Error, Result};
use crate::mat::{check_shapes, ModelConfig, Tensor, Weights};

pub const DTYPE: &str = "float32-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the blob.
    pub offset: u64,
}

impl TensorEntry {
    fn byte_len(&self) -> u64 {
        4 * self.shape.iter().product::<usize>() as u64
    }
}

/// Manifest of a weights blob. `blob` is a path relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsManifest {
    pub version: String,
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
}

impl WeightsManifest {
    /// Everything that can be checked without the blob: version, dtypes,
    /// unique names, and names and shapes against `cfg`.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported weights version {:?}", self.version)));
        }
        let mut shapes = BTreeMap::new();
        let mut problems = Vec::new();
        for t in &self.tensors {
            if t.dtype != DTYPE {
                problems.push(format!("{}: dtype {:?}, expected {DTYPE:?}", t.name, t.dtype));
            }
            if shapes.insert(t.name.clone(), t.shape.clone()).is_some() {
                problems.push(format!("{} listed twice", t.name));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        check_shapes(&shapes, cfg)
    }

    /// Slices the blob into tensors; any gap, overlap, overrun or trailing
    /// byte is an integrity error.
    pub fn decode(&self, blob: &[u8], cfg: &ModelConfig) -> Result<Weights> {
        let mut spans: Vec<&TensorEntry> = self.tensors.iter().collect();
        spans.sort_by_key(|t| t.offset);
        let mut end = 0u64;
        for t in &spans {
            if t.offset != end {
                return Err(Error::Integrity(format!(
                    "{} starts at byte {}, expected {end}",
                    t.name, t.offset
                )));
            }
            end += t.byte_len();
        }
        if blob.len() as u64 != end {
            return Err(Error::Integrity(format!(
                "blob has {} bytes, manifest describes {end}",
                blob.len()
            )));
        }
        let mut tensors = BTreeMap::new();
        for t in spans {
            let bytes = &blob[t.offset as usize..(t.offset + t.byte_len()) as usize];
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let tensor = Tensor::new(t.shape.clone(), data)
                .map_err(|e| Error::Integrity(format!("{}: {e}", t.name)))?;
            tensors.insert(t.name.clone(), tensor);
        }
        Weights::from_tensors(tensors, cfg)
    }
}

/// Manifest and blob for `weights`, tensors packed in name order.
pub fn encode_weights(weights: &Weights, blob_name: &str) -> (WeightsManifest, Vec<u8>) {
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    for (name, t) in weights.tensors() {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: DTYPE.into(),
            offset: blob.len() as u64,
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = WeightsManifest { version: FORMAT_VERSION.into(), blob: blob_name.into(), tensors: entries };
    (manifest, blob)
}

fn blob_path(manifest_path: &Path, blob: &str) -> PathBuf {
    manifest_path.parent().unwrap_or(Path::new("")).join(blob)
}

/// Writes `<stem>.bin` next to the manifest.
pub fn save_weights(weights: &Weights, manifest_path: &Path) -> Result<()> {
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("bad manifest path {}", manifest_path.display())))?;
    let (manifest, blob) = encode_weights(weights, &format!("{stem}.bin"));
    fs::write(blob_path(manifest_path, &manifest.blob), blob)?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(manifest_path, text)?;
    Ok(())
}

/// Reads a manifest, validates it against `cfg`, and only then reads the blob.
pub fn load_weights(manifest_path: &Path, cfg: &ModelConfig) -> Result<Weights> {
    let manifest: WeightsManifest = parse(&fs::read_to_string(manifest_path)?, 1)?;
    manifest.check(cfg)?;
    let blob = fs::read(blob_path(manifest_path, &manifest.blob))?;
    manifest.decode(&blob, cfg)
}
