use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::json::{canonical, documents, parse, sha256_hex, unique_map_opt};
use super::FORMAT_VERSION;
use crate::error::{Error, Result};
use crate::geom::{DirVec, Point2};
use crate::map::{Association, Boundary, BoundaryId, Centerline, HdGraph, LaneId, Road, RoadId, Scene, SceneMeta, SdGraph};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    version: String,
    meta: SceneMeta,
    sd: SdDoc,
    hd: HdDoc,
    #[serde(default, deserialize_with = "unique_map_opt", skip_serializing_if = "Option::is_none")]
    gt: Option<BTreeMap<LaneId, RoadId>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SdDoc {
    roads: Vec<PolylineDoc<RoadId>>,
    edges: Vec<(RoadId, RoadId)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HdDoc {
    centerlines: Vec<CenterlineDoc>,
    edges: Vec<(LaneId, LaneId)>,
    boundaries: Vec<PolylineDoc<BoundaryId>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolylineDoc<I> {
    id: I,
    points: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CenterlineDoc {
    id: LaneId,
    p1: [f64; 2],
    p2: [f64; 2],
}

fn xy(p: Point2) -> [f64; 2] {
    [p.x, p.y]
}

fn pt([x, y]: [f64; 2]) -> Point2 {
    Point2::new(x, y)
}

fn no_duplicate_edges<T: Ord + Copy + std::fmt::Display>(edges: &[(T, T)], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &(a, b) in edges {
        if !seen.insert((a, b)) {
            return Err(Error::Validation(format!("duplicate {what} edge ({a}, {b})")));
        }
    }
    Ok(())
}

impl SceneDoc {
    fn from_scene(scene: &Scene) -> Self {
        Self {
            version: FORMAT_VERSION.into(),
            meta: scene.meta.clone(),
            sd: SdDoc {
                roads: scene
                    .sd
                    .roads()
                    .iter()
                    .map(|r| PolylineDoc { id: r.id, points: r.points().iter().copied().map(xy).collect() })
                    .collect(),
                edges: scene.sd.edges().iter().copied().collect(),
            },
            hd: HdDoc {
                centerlines: scene
                    .hd
                    .centerlines()
                    .iter()
                    .map(|c| CenterlineDoc { id: c.id, p1: xy(c.vector.p1), p2: xy(c.vector.p2) })
                    .collect(),
                edges: scene.hd.edges().iter().copied().collect(),
                boundaries: scene
                    .hd
                    .boundaries()
                    .iter()
                    .map(|b| PolylineDoc { id: b.id, points: b.points().iter().copied().map(xy).collect() })
                    .collect(),
            },
            gt: scene.gt.as_ref().map(|a| a.labels.clone()),
        }
    }

    fn into_scene(self) -> Result<Scene> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Validation(format!("unsupported scene version {:?}", self.version)));
        }
        no_duplicate_edges(&self.sd.edges, "road")?;
        no_duplicate_edges(&self.hd.edges, "centerline")?;
        let roads = self
            .sd
            .roads
            .into_iter()
            .map(|r| Road::new(r.id, r.points.into_iter().map(pt).collect()))
            .collect::<Result<Vec<_>>>()?;
        let centerlines = self
            .hd
            .centerlines
            .into_iter()
            .map(|c| {
                DirVec::new(pt(c.p1), pt(c.p2))
                    .map(|vector| Centerline { id: c.id, vector })
                    .map_err(|e| Error::InvalidGeometry(format!("{}: {e}", c.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let boundaries = self
            .hd
            .boundaries
            .into_iter()
            .map(|b| Boundary::new(b.id, b.points.into_iter().map(pt).collect()))
            .collect::<Result<Vec<_>>>()?;
        let sd = SdGraph::new(roads, self.sd.edges)?;
        let hd = HdGraph::new(centerlines, self.hd.edges, boundaries)?;
        Scene::new(sd, hd, self.gt.map(Association::new), self.meta)
    }
}

/// Canonical one-line form of a scene, newline terminated. Equal scenes give
/// identical bytes.
pub fn write_scene(scene: &Scene) -> String {
    let mut s = canonical(&SceneDoc::from_scene(scene));
    s.push('\n');
    s
}

/// Newline-delimited container of several scenes.
pub fn write_scenes(scenes: &[Scene]) -> String {
    scenes.par_iter().map(write_scene).collect::<Vec<_>>().concat()
}

/// SHA-256 of the canonical form; association files refer to scenes by it.
pub fn scene_digest(scene: &Scene) -> String {
    sha256_hex(write_scene(scene).as_bytes())
}

/// Parses exactly one scene document.
pub fn read_scene(text: &str) -> Result<Scene> {
    let docs = documents(text)?;
    match docs.as_slice() {
        [(line, doc)] => parse::<SceneDoc>(doc, *line)?.into_scene(),
        _ => Err(Error::Validation(format!("expected one scene document, found {}", docs.len()))),
    }
}

/// Parses a container of scene documents, preserving order. Fails on the
/// first invalid document (lowest position).
pub fn read_scenes(text: &str) -> Result<Vec<Scene>> {
    documents(text)?
        .par_iter()
        .map(|(line, doc)| {
            parse::<SceneDoc>(doc, *line)?.into_scene().map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("scene at line {line}: {m}")),
                e => e,
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}
