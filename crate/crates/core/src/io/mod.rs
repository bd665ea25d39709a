//! On-disk formats.
//!
//! Scenes and association files are JSON documents, one per line when several
//! are stored together. Scenes are written canonically (sorted keys, ids in
//! ascending order, shortest round-trip floats) so equal scenes give equal
//! bytes and can be referenced by their SHA-256. Model weights are a JSON
//! manifest plus a little-endian `f32` blob.

mod assoc_file;
mod json;
mod scene_file;
mod weights_file;


use serde::{Deserialize, Serialize};

pub use assoc_file::{read_assoc_files, write_assoc_files, AssocFile, DecodeMeta, ProbTable};
pub use scene_file::{read_scene, read_scenes, scene_digest, write_scene, write_scenes};
pub use weights_file::{encode_weights, load_weights, save_weights, TensorEntry, WeightsManifest, DTYPE};

use crate::error::Result;
use crate::scene_gen::{AugConfig, GenConfig, PerturbConfig};

pub const FORMAT_VERSION: &str = "1";

/// Configuration file of the `gen` command. Seeds in `perturb` and `aug` are
/// offsets added to each scene's seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenFile {
    pub gen: GenConfig,
    pub perturb: Option<PerturbConfig>,
    pub aug: Option<AugConfig>,
}

impl GenFile {
    pub fn parse(text: &str) -> Result<Self> {
        let f: Self = json::parse(text, 1)?;
        f.gen.validate()?;
        if let Some(p) = &f.perturb {
            p.validate()?;
        }
        if let Some(a) = &f.aug {
            a.validate()?;
        }
        Ok(f)
    }
}

/// Parses any JSON configuration document with path-annotated errors.
pub fn parse_config<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    json::parse(text, 1)
}
