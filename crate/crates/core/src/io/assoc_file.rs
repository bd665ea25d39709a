use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::json::{canonical, documents, parse, unique_map};
use super::scene_file::scene_digest;
use super::FORMAT_VERSION;
use crate::assoc::AssocMatrix;
use crate::error::{Error, Result};
use crate::map::{Association, LaneId, RoadId, Scene};

/// Per-centerline road probabilities, rows in lane order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbTable {
    pub lanes: Vec<LaneId>,
    pub roads: Vec<RoadId>,
    pub rows: Vec<Vec<f64>>,
}

impl ProbTable {
    pub fn from_matrix(m: &AssocMatrix) -> Self {
        Self {
            lanes: m.lanes().to_vec(),
            roads: m.roads().to_vec(),
            rows: (0..m.lanes().len()).map(|i| m.row(i).to_vec()).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<AssocMatrix> {
        let k = self.roads.len();
        if self.rows.len() != self.lanes.len() || self.rows.iter().any(|r| r.len() != k) {
            return Err(Error::Validation(format!(
                "probability table is not {} x {k}",
                self.lanes.len()
            )));
        }
        AssocMatrix::new(self.lanes.clone(), self.roads.clone(), self.rows.concat())
    }
}

/// How labels were decoded from scores, when a decoder ran.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeMeta {
    /// `"beam"` or `"viterbi"`.
    pub decoder: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam_width: Option<usize>,
    /// Centerlines labelled by the argmax fallback of the beam decoder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_tokens: Option<usize>,
    /// Lane paths the HMM decoded per token for lack of a feasible sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_paths: Option<usize>,
}

/// Labels predicted for one scene, tied to it by the scene digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssocFile {
    pub version: String,
    pub method: String,
    pub scene_ref: String,
    #[serde(deserialize_with = "unique_map")]
    pub labels: BTreeMap<LaneId, RoadId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<ProbTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode_meta: Option<DecodeMeta>,
}

impl AssocFile {
    pub fn new(method: &str, scene: &Scene, assoc: Association) -> Self {
        Self {
            version: FORMAT_VERSION.into(),
            method: method.into(),
            scene_ref: scene_digest(scene),
            labels: assoc.labels,
            probs: None,
            decode_meta: None,
        }
    }

    /// Checks the file against its scene and returns the labels.
    pub fn resolve(&self, scene: &Scene) -> Result<Association> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Validation(format!("unsupported association version {:?}", self.version)));
        }
        let digest = scene_digest(scene);
        if self.scene_ref != digest {
            return Err(Error::Integrity(format!(
                "association refers to scene {}, got scene {digest}",
                self.scene_ref
            )));
        }
        let assoc = Association::new(self.labels.clone());
        assoc.validate_against(&scene.sd, &scene.hd)?;
        if let Some(p) = &self.probs {
            let m = p.to_matrix()?;
            if m.lanes() != scene.hd.lane_ids() || m.roads() != scene.sd.road_ids() {
                return Err(Error::Validation(
                    "probability table ids differ from the scene's centerlines and roads".into(),
                ));
            }
        }
        Ok(assoc)
    }
}

pub fn write_assoc_files(files: &[AssocFile]) -> String {
    files.iter().map(|f| canonical(f) + "\n").collect()
}

pub fn read_assoc_files(text: &str) -> Result<Vec<AssocFile>> {
    documents(text)?.into_iter().map(|(line, doc)| parse(doc, line)).collect()
}
