//! SD/HD map data model: roads, centerlines, boundaries, their graphs and the
//! centerline-to-road association.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{point_polyline_distance, DirVec, Point2, Rect};
use crate::paths::{enumerate_paths, PathIndex, DEFAULT_PATH_CAP};

macro_rules! id_type {
    ($name:ident, $label:literal) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", $label, self.0)
            }
        }
    };
}

id_type!(RoadId, "road ");
id_type!(LaneId, "centerline ");
id_type!(BoundaryId, "boundary ");

fn chain_vectors(points: &[Point2], what: &dyn fmt::Display) -> Result<Vec<DirVec>> {
    if points.len() < 2 {
        return Err(Error::InvalidGeometry(format!(
            "{what} needs at least 2 points, got {}",
            points.len()
        )));
    }
    points
        .windows(2)
        .map(|w| {
            DirVec::new(w[0], w[1])
                .map_err(|e| Error::InvalidGeometry(format!("{what}: {e}")))
        })
        .collect()
}

/// An SD road polyline and its chained directed vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub id: RoadId,
    points: Vec<Point2>,
    vectors: Vec<DirVec>,
}

impl Road {
    pub fn new(id: RoadId, points: Vec<Point2>) -> Result<Self> {
        let vectors = chain_vectors(&points, &id)?;
        Ok(Self {
            id,
            points,
            vectors,
        })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn vectors(&self) -> &[DirVec] {
        &self.vectors
    }

    /// Minimum distance from `p` to any segment of the road.
    pub fn distance_to(&self, p: Point2) -> f64 {
        point_polyline_distance(p, &self.points)
    }
}

/// Minimum Euclidean distance from `p` to the road polyline.
pub fn point_to_road_distance(p: Point2, road: &Road) -> f64 {
    road.distance_to(p)
}

/// A single HD centerline vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centerline {
    pub id: LaneId,
    pub vector: DirVec,
}

/// An HD road boundary polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub id: BoundaryId,
    points: Vec<Point2>,
    vectors: Vec<DirVec>,
}

impl Boundary {
    pub fn new(id: BoundaryId, points: Vec<Point2>) -> Result<Self> {
        let vectors = chain_vectors(&points, &id)?;
        Ok(Self {
            id,
            points,
            vectors,
        })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn vectors(&self) -> &[DirVec] {
        &self.vectors
    }
}

/// Road-level graph. Roads are kept sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct SdGraph {
    roads: Vec<Road>,
    edges: BTreeSet<(RoadId, RoadId)>,
}

impl SdGraph {
    pub fn new(mut roads: Vec<Road>, edges: impl IntoIterator<Item = (RoadId, RoadId)>) -> Result<Self> {
        roads.sort_by_key(|r| r.id);
        if let Some(w) = roads.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Validation(format!("duplicate {}", w[0].id)));
        }
        let ids: BTreeSet<RoadId> = roads.iter().map(|r| r.id).collect();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            for end in [a, b] {
                if !ids.contains(&end) {
                    return Err(Error::Validation(format!(
                        "edge ({}, {}) references missing {end}",
                        a.0, b.0
                    )));
                }
            }
            if a == b {
                return Err(Error::Validation(format!("self-loop edge on {a}")));
            }
            set.insert((a, b));
        }
        Ok(Self { roads, edges: set })
    }

    pub fn roads(&self) -> &[Road] {
        &self.roads
    }

    pub fn edges(&self) -> &BTreeSet<(RoadId, RoadId)> {
        &self.edges
    }

    pub fn road_ids(&self) -> Vec<RoadId> {
        self.roads.iter().map(|r| r.id).collect()
    }

    pub fn road(&self, id: RoadId) -> Option<&Road> {
        self.roads
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.roads[i])
    }

    /// Position of `id` in the sorted road list.
    pub fn road_index(&self, id: RoadId) -> Option<usize> {
        self.roads.binary_search_by_key(&id, |r| r.id).ok()
    }

    /// True when a centerline labelled `a` may be followed by one labelled `b`.
    pub fn connected(&self, a: RoadId, b: RoadId) -> bool {
        a == b || self.edges.contains(&(a, b))
    }

    pub fn successors(&self, id: RoadId) -> impl Iterator<Item = RoadId> + '_ {
        self.edges
            .range((id, RoadId(0))..=(id, RoadId(u32::MAX)))
            .map(|&(_, b)| b)
    }

    pub fn enumerate_paths(&self, cap: usize) -> Result<PathIndex<RoadId>> {
        enumerate_paths(&self.road_ids(), self.edges.iter().copied(), cap)
    }
}

/// Lane-level graph: centerlines, their connectivity, and boundaries.
/// Centerlines and boundaries are kept sorted by id; the edge set is acyclic.
#[derive(Debug, Clone, PartialEq)]
pub struct HdGraph {
    centerlines: Vec<Centerline>,
    edges: BTreeSet<(LaneId, LaneId)>,
    boundaries: Vec<Boundary>,
}

impl HdGraph {
    pub fn new(
        mut centerlines: Vec<Centerline>,
        edges: impl IntoIterator<Item = (LaneId, LaneId)>,
        mut boundaries: Vec<Boundary>,
    ) -> Result<Self> {
        centerlines.sort_by_key(|c| c.id);
        if let Some(w) = centerlines.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Validation(format!("duplicate {}", w[0].id)));
        }
        boundaries.sort_by_key(|b| b.id);
        if let Some(w) = boundaries.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Validation(format!("duplicate {}", w[0].id)));
        }
        let ids: BTreeSet<LaneId> = centerlines.iter().map(|c| c.id).collect();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            for end in [a, b] {
                if !ids.contains(&end) {
                    return Err(Error::Validation(format!(
                        "edge ({}, {}) references missing {end}",
                        a.0, b.0
                    )));
                }
            }
            set.insert((a, b));
        }
        let graph = Self {
            centerlines,
            edges: set,
            boundaries,
        };
        crate::paths::find_cycle(&graph.lane_ids(), graph.edges.iter().copied())
            .map_or(Ok(()), |node| {
                Err(Error::Topology(format!("lane graph has a cycle through {node}")))
            })?;
        Ok(graph)
    }

    pub fn empty() -> Self {
        Self {
            centerlines: Vec::new(),
            edges: BTreeSet::new(),
            boundaries: Vec::new(),
        }
    }

    pub fn centerlines(&self) -> &[Centerline] {
        &self.centerlines
    }

    pub fn edges(&self) -> &BTreeSet<(LaneId, LaneId)> {
        &self.edges
    }

    pub fn boundaries(&self) -> &[Boundary] {
        &self.boundaries
    }

    pub fn lane_ids(&self) -> Vec<LaneId> {
        self.centerlines.iter().map(|c| c.id).collect()
    }

    pub fn centerline(&self, id: LaneId) -> Option<&Centerline> {
        self.lane_index(id).map(|i| &self.centerlines[i])
    }

    pub fn lane_index(&self, id: LaneId) -> Option<usize> {
        self.centerlines.binary_search_by_key(&id, |c| c.id).ok()
    }

    pub fn enumerate_paths(&self, cap: usize) -> Result<PathIndex<LaneId>> {
        enumerate_paths(&self.lane_ids(), self.edges.iter().copied(), cap)
    }

    /// All points of the HD geometry (centerline endpoints and boundary points).
    pub fn points(&self) -> impl Iterator<Item = Point2> + '_ {
        self.centerlines
            .iter()
            .flat_map(|c| [c.vector.p1, c.vector.p2])
            .chain(self.boundaries.iter().flat_map(|b| b.points().iter().copied()))
    }
}

/// Many-to-one mapping from centerlines to roads.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Association {
    pub labels: BTreeMap<LaneId, RoadId>,
}

impl Association {
    pub fn new(labels: BTreeMap<LaneId, RoadId>) -> Self {
        Self { labels }
    }

    pub fn get(&self, id: LaneId) -> Option<RoadId> {
        self.labels.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Checks that every centerline of `hd` is labelled with a road of `sd`,
    /// and that no label refers to an unknown centerline.
    pub fn validate_against(&self, sd: &SdGraph, hd: &HdGraph) -> Result<()> {
        for c in hd.centerlines() {
            match self.labels.get(&c.id) {
                None => {
                    return Err(Error::Coverage(format!("{} has no label", c.id)));
                }
                Some(r) if sd.road(*r).is_none() => {
                    return Err(Error::Label(format!("{} is labelled with unknown {r}", c.id)));
                }
                _ => {}
            }
        }
        if let Some(id) = self.labels.keys().find(|id| hd.centerline(**id).is_none()) {
            return Err(Error::Coverage(format!("label for unknown {id}")));
        }
        Ok(())
    }
}

/// The SD and HD crop windows of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropExtents {
    pub sd: Rect,
    pub hd: Rect,
}

/// Record of the perturbations applied to a scene's HD map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PerturbSummary {
    pub seed: u64,
    pub gps_shift: Point2,
    pub dropped: usize,
    pub jitter_sigma: f64,
    pub split: usize,
}

/// Record of a joint augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AugmentSummary {
    pub seed: u64,
    pub rotation_deg: f64,
    pub scale: f64,
    pub flipped: bool,
    pub merged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneMeta {
    pub seed: u64,
    pub crop: CropExtents,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<AugmentSummary>,
}

/// One SD map, one HD map and (optionally) the ground-truth association.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub sd: SdGraph,
    pub hd: HdGraph,
    pub gt: Option<Association>,
    pub meta: SceneMeta,
}

/// Slack for geometry sitting exactly on a crop edge.
const CROP_TOL: f64 = 1e-6;

impl Scene {
    pub fn new(sd: SdGraph, hd: HdGraph, gt: Option<Association>, meta: SceneMeta) -> Result<Self> {
        let scene = Self { sd, hd, gt, meta };
        scene.validate()?;
        Ok(scene)
    }

    /// Checks the cross-element invariants: crop containment and gt coverage.
    pub fn validate(&self) -> Result<()> {
        let crop = &self.meta.crop;
        for road in self.sd.roads() {
            if let Some(p) = road.points().iter().find(|p| !crop.sd.contains(**p, CROP_TOL)) {
                return Err(Error::Validation(format!(
                    "{} point ({}, {}) lies outside the SD crop",
                    road.id, p.x, p.y
                )));
            }
        }
        for c in self.hd.centerlines() {
            for p in [c.vector.p1, c.vector.p2] {
                if !crop.hd.contains(p, CROP_TOL) {
                    return Err(Error::Validation(format!(
                        "{} point ({}, {}) lies outside the HD crop",
                        c.id, p.x, p.y
                    )));
                }
            }
        }
        for b in self.hd.boundaries() {
            if let Some(p) = b.points().iter().find(|p| !crop.hd.contains(**p, CROP_TOL)) {
                return Err(Error::Validation(format!(
                    "{} point ({}, {}) lies outside the HD crop",
                    b.id, p.x, p.y
                )));
            }
        }
        if let Some(gt) = &self.gt {
            gt.validate_against(&self.sd, &self.hd)?;
        }
        Ok(())
    }

    pub fn gt(&self) -> Result<&Association> {
        self.gt
            .as_ref()
            .ok_or_else(|| Error::Coverage("scene has no ground-truth association".into()))
    }

    /// Lane paths of the HD graph with the default path cap.
    pub fn lane_paths(&self) -> Result<PathIndex<LaneId>> {
        self.hd.enumerate_paths(DEFAULT_PATH_CAP)
    }
}
