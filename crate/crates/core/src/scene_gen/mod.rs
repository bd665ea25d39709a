//! Deterministic synthetic scene generation, perturbation and augmentation.
//!
//! Every operation is a pure function of its input and an integer seed.
//! Independent random sub-steps draw from separate ChaCha streams of that seed.

mod augment;
mod layout;
mod perturb;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{sample_polyline, vectorize_polyline, DirVec, Point2, Rect};
use crate::map::{
    Association, Boundary, BoundaryId, Centerline, CropExtents, HdGraph, LaneId, Road, RoadId,
    Scene, SceneMeta, SdGraph,
};

pub use augment::{augment_scene, grid_sample, AugConfig, GridSample, Jitter, Rotate};
pub use perturb::{perturb_scene, GpsShift, PerturbConfig};

/// Minimum margin by which a kept lane vector must be closer to its own road
/// than to any other road.
pub const CLEARANCE: f64 = 6.0;

/// Lane pieces shorter than this many vectors are discarded.
pub const MIN_PIECE: usize = 3;

/// Road network topology used by [`generate_scene`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RoadLayout {
    /// One-way streets on a lattice, running +x and +y.
    Grid { cols: u32, rows: u32 },
    /// Two-way arms meeting at a central junction.
    Radial { arms: u32 },
    /// Jittered lattice with randomly missing links.
    RandomPlanar { cols: u32, rows: u32 },
}

impl Default for RoadLayout {
    fn default() -> Self {
        RoadLayout::Grid { cols: 3, rows: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// SD crop half widths in meters.
    pub sd_extent: [f64; 2],
    /// HD crop half widths in meters.
    pub hd_extent: [f64; 2],
    pub road_layout: RoadLayout,
    /// Inclusive range of lanes per road.
    pub lanes_per_road: [u32; 2],
    pub lane_offset: f64,
    pub vector_spacing_hd: f64,
    pub vector_spacing_sd: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            sd_extent: [75.0, 75.0],
            hd_extent: [15.0, 30.0],
            road_layout: RoadLayout::default(),
            lanes_per_road: [1, 3],
            lane_offset: 3.5,
            vector_spacing_hd: 3.0,
            vector_spacing_sd: 10.0,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !self.sd_extent.iter().chain(&self.hd_extent).all(|&v| positive(v)) {
            return Err(Error::Config("crop extents must be positive".into()));
        }
        if self.hd_extent[0] > self.sd_extent[0] || self.hd_extent[1] > self.sd_extent[1] {
            return Err(Error::Config("hd_extent must fit inside sd_extent".into()));
        }
        if !positive(self.vector_spacing_hd) || !positive(self.vector_spacing_sd) {
            return Err(Error::Config("vector spacings must be positive".into()));
        }
        if !positive(self.lane_offset) {
            return Err(Error::Config("lane_offset must be positive".into()));
        }
        let [lo, hi] = self.lanes_per_road;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("invalid lanes_per_road [{lo}, {hi}]")));
        }
        let ok = match self.road_layout {
            RoadLayout::Grid { cols, rows } | RoadLayout::RandomPlanar { cols, rows } => {
                cols >= 1 && rows >= 1
            }
            RoadLayout::Radial { arms } => arms >= 1,
        };
        if !ok {
            return Err(Error::Config("layout needs at least one street or arm".into()));
        }
        Ok(())
    }

    pub fn crop(&self) -> CropExtents {
        CropExtents {
            sd: Rect::centered(self.sd_extent[0], self.sd_extent[1]),
            hd: Rect::centered(self.hd_extent[0], self.hd_extent[1]),
        }
    }

    /// Largest lateral lane offset from the road axis.
    fn max_lane_offset(&self) -> f64 {
        self.lane_offset * (self.lanes_per_road[1] as f64 - 1.0) / 2.0
    }
}

/// Sub-stream of a per-operation seed.
pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Where a lane vector ended up during generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Kept,
    /// Too close to a foreign road, or part of a piece that was too short.
    Gap,
    /// Outside the HD crop.
    Outside,
}

struct LaneBuild {
    pieces: Vec<Vec<LaneId>>,
    head_open: bool,
    tail_open: bool,
}

/// Generates one scene from `cfg`. Identical configs give identical scenes.
pub fn generate_scene(cfg: &GenConfig) -> Result<Scene> {
    cfg.validate()?;
    let width = cfg.lane_offset * cfg.lanes_per_road[1] as f64;
    if width > 2.0 * cfg.hd_extent[0].min(cfg.hd_extent[1]) {
        return Err(Error::Generation(format!(
            "a {width:.1} m carriageway does not fit the HD crop"
        )));
    }
    let crop = cfg.crop();
    let links = layout::build(cfg, &mut stream(cfg.seed, 0))?;
    if links.is_empty() {
        return Err(Error::Generation("layout produced no roads".into()));
    }

    let mut roads = Vec::with_capacity(links.len());
    for (i, link) in links.iter().enumerate() {
        let pts = sample_polyline(&[link.start, link.end], cfg.vector_spacing_sd)?;
        if let Some(p) = pts.iter().find(|p| !crop.sd.contains(**p, 1e-9)) {
            return Err(Error::Generation(format!(
                "road {} leaves the SD crop at ({:.3}, {:.3})",
                i + 1,
                p.x,
                p.y
            )));
        }
        roads.push(Road::new(RoadId(i as u32 + 1), pts)?);
    }
    let mut sd_edges = BTreeSet::new();
    for (i, a) in links.iter().enumerate() {
        for (j, b) in links.iter().enumerate() {
            if i != j && a.to == b.from && a.from != b.to {
                sd_edges.insert((roads[i].id, roads[j].id));
            }
        }
    }

    let mut lane_rng = stream(cfg.seed, 1);
    let [lo, hi] = cfg.lanes_per_road;
    let lane_counts: Vec<u32> = roads
        .iter()
        .map(|_| rand::Rng::random_range(&mut lane_rng, lo..=hi))
        .collect();

    let mut centerlines = Vec::new();
    let mut hd_edges = BTreeSet::new();
    let mut gt = BTreeMap::new();
    let mut boundaries = Vec::new();
    let mut lanes: Vec<Vec<LaneBuild>> = Vec::with_capacity(roads.len());
    let mut next_lane = 1u32;

    for (ri, road) in roads.iter().enumerate() {
        let n = lane_counts[ri];
        let (a, b) = (links[ri].start, links[ri].end);
        let len = a.dist(b);
        let normal = Point2::new(-(b.y - a.y) / len, (b.x - a.x) / len);
        let shift = |p: Point2, o: f64| p.translate(normal.x * o, normal.y * o);

        let mut road_lanes = Vec::with_capacity(n as usize);
        for li in 0..n {
            let o = cfg.lane_offset * (li as f64 - (n as f64 - 1.0) / 2.0);
            let vecs = vectorize_polyline(&[shift(a, o), shift(b, o)], cfg.vector_spacing_hd)?;
            let mut slots: Vec<Slot> = vecs
                .iter()
                .map(|v| lane_slot(v, ri, &roads, &crop.hd))
                .collect();
            drop_short_runs(&mut slots);

            let mut pieces: Vec<Vec<LaneId>> = Vec::new();
            let mut prev_kept = false;
            for (v, slot) in vecs.iter().zip(&slots) {
                if *slot != Slot::Kept {
                    prev_kept = false;
                    continue;
                }
                let id = LaneId(next_lane);
                next_lane += 1;
                centerlines.push(Centerline { id, vector: *v });
                gt.insert(id, road.id);
                if prev_kept {
                    let last = *pieces.last().unwrap().last().unwrap();
                    hd_edges.insert((last, id));
                    pieces.last_mut().unwrap().push(id);
                } else {
                    pieces.push(vec![id]);
                }
                prev_kept = true;
            }
            let first = slots.iter().position(|s| *s == Slot::Kept);
            let last = slots.iter().rposition(|s| *s == Slot::Kept);
            let head_open = first.is_some_and(|f| slots[..f].iter().all(|s| *s == Slot::Gap));
            let tail_open = last.is_some_and(|l| slots[l + 1..].iter().all(|s| *s == Slot::Gap));
            road_lanes.push(LaneBuild {
                pieces,
                head_open,
                tail_open,
            });
        }
        lanes.push(road_lanes);

        let half = cfg.lane_offset * (n as f64 - 1.0) / 2.0 + cfg.lane_offset / 2.0;
        for o in [-half, half] {
            let (p, q) = (shift(a, o), shift(b, o));
            let Some((t0, t1)) = crop.hd.clip_segment(p, q) else {
                continue;
            };
            if (t1 - t0) * len < cfg.vector_spacing_hd {
                continue;
            }
            let pts = sample_polyline(&[p.lerp(q, t0), p.lerp(q, t1)], cfg.vector_spacing_hd)?;
            let id = BoundaryId(boundaries.len() as u32 + 1);
            boundaries.push(Boundary::new(id, pts)?);
        }
    }

    for &(ra, rb) in &sd_edges {
        let (ia, ib) = (ra.0 as usize - 1, rb.0 as usize - 1);
        let (na, nb) = (lanes[ia].len(), lanes[ib].len());
        let mut pairs: Vec<(usize, usize)> = (0..na).map(|i| (i, i.min(nb - 1))).collect();
        pairs.extend((na..nb).map(|j| (na - 1, j)));
        for (i, j) in pairs {
            let (from, to) = (&lanes[ia][i], &lanes[ib][j]);
            if !(from.tail_open && to.head_open) {
                continue;
            }
            let last = *from.pieces.last().unwrap().last().unwrap();
            let first = to.pieces[0][0];
            hd_edges.insert((last, first));
        }
    }

    if centerlines.is_empty() {
        return Err(Error::Generation(
            "no lane survives inside the HD crop; extent too small for the requested lanes".into(),
        ));
    }

    let sd = SdGraph::new(roads, sd_edges)?;
    let hd = HdGraph::new(centerlines, hd_edges, boundaries)?;
    Scene::new(
        sd,
        hd,
        Some(Association::new(gt)),
        SceneMeta {
            seed: cfg.seed,
            crop,
            perturbation: None,
            augmentation: None,
        },
    )
}

fn lane_slot(v: &DirVec, own: usize, roads: &[Road], hd: &Rect) -> Slot {
    if !(hd.contains(v.p1, 0.0) && hd.contains(v.p2, 0.0)) {
        return Slot::Outside;
    }
    let m = v.midpoint();
    let d_own = roads[own].distance_to(m);
    let clear = roads
        .iter()
        .enumerate()
        .all(|(i, r)| i == own || r.distance_to(m) >= d_own + CLEARANCE);
    if clear {
        Slot::Kept
    } else {
        Slot::Gap
    }
}

fn drop_short_runs(slots: &mut [Slot]) {
    let mut i = 0;
    while i < slots.len() {
        if slots[i] != Slot::Kept {
            i += 1;
            continue;
        }
        let start = i;
        while i < slots.len() && slots[i] == Slot::Kept {
            i += 1;
        }
        if i - start < MIN_PIECE {
            slots[start..i].fill(Slot::Gap);
        }
    }
}
