//! Joint SD+HD augmentations: rotation, scaling, mirror flip, clipped jitter
//! and grid sampling of centerlines.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::stream;
use crate::error::{Error, Result};
use crate::geom::{DirVec, Point2, Rect};
use crate::map::{
    AugmentSummary, Association, Boundary, Centerline, CropExtents, HdGraph, LaneId, Road, Scene,
    SdGraph,
};
use crate::paths::find_cycle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rotate {
    /// Rotation angle range about the z axis, in degrees.
    pub angle_deg: [f64; 2],
    pub probability: f64,
}

impl Default for Rotate {
    fn default() -> Self {
        Self {
            angle_deg: [-1.0, 1.0],
            probability: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Jitter {
    pub sigma: f64,
    pub clip: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            sigma: 0.005,
            clip: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSample {
    /// Cell sizes along x (m), y (m) and heading (rad).
    pub sizes: [f64; 3],
}

impl Default for GridSample {
    fn default() -> Self {
        Self {
            sizes: [0.1, 0.1, PI / 16.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugConfig {
    pub rotate: Rotate,
    /// Uniform scale factor range.
    pub scale: [f64; 2],
    /// Probability of mirroring x.
    pub flip: f64,
    pub jitter: Jitter,
    pub grid_sample: Option<GridSample>,
    pub seed: u64,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            rotate: Rotate::default(),
            scale: [0.9, 1.1],
            flip: 0.5,
            jitter: Jitter::default(),
            grid_sample: Some(GridSample::default()),
            seed: 0,
        }
    }
}

impl AugConfig {
    /// A configuration that changes nothing.
    pub fn identity() -> Self {
        Self {
            rotate: Rotate {
                angle_deg: [0.0, 0.0],
                probability: 0.0,
            },
            scale: [1.0, 1.0],
            flip: 0.0,
            jitter: Jitter {
                sigma: 0.0,
                clip: 0.0,
            },
            grid_sample: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.rotate.probability) || !prob(self.flip) {
            return Err(Error::Config("augmentation probabilities must lie in [0, 1]".into()));
        }
        let [a0, a1] = self.rotate.angle_deg;
        let [s0, s1] = self.scale;
        if !(a0.is_finite() && a1.is_finite() && a0 <= a1) {
            return Err(Error::Config("invalid rotation range".into()));
        }
        if !(s0 > 0.0 && s0 <= s1 && s1.is_finite()) {
            return Err(Error::Config("invalid scale range".into()));
        }
        let j = &self.jitter;
        if !(j.sigma >= 0.0 && j.sigma.is_finite() && j.clip >= 0.0 && j.clip.is_finite()) {
            return Err(Error::Config("jitter sigma and clip must be finite and >= 0".into()));
        }
        if let Some(g) = &self.grid_sample {
            if !g.sizes.iter().all(|&s| s > 0.0 && s.is_finite()) {
                return Err(Error::Config("grid sample sizes must be positive".into()));
            }
        }
        Ok(())
    }
}

fn draw_range(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Applies the same random similarity transform and jitter to SD and HD, then
/// merges centerlines that fall into one grid-sample cell. Labels are carried
/// along unchanged; merged centerlines keep the lowest id of their cell.
pub fn augment_scene(scene: &Scene, cfg: &AugConfig) -> Result<Scene> {
    cfg.validate()?;

    let mut rng = stream(cfg.seed, 0);
    let rotation_deg = if rng.random::<f64>() < cfg.rotate.probability {
        draw_range(&mut rng, cfg.rotate.angle_deg)
    } else {
        0.0
    };
    let scale = draw_range(&mut stream(cfg.seed, 1), cfg.scale);
    let flipped = stream(cfg.seed, 2).random::<f64>() < cfg.flip;

    let (sin, cos) = rotation_deg.to_radians().sin_cos();
    let affine = |p: Point2| {
        let x = (cos * p.x - sin * p.y) * scale;
        let y = (sin * p.x + cos * p.y) * scale;
        Point2::new(if flipped { -x } else { x }, y)
    };

    let mut jitter_rng = stream(cfg.seed, 3);
    let jitter = (cfg.jitter.sigma > 0.0).then(|| Normal::new(0.0, cfg.jitter.sigma).unwrap());
    let clip = cfg.jitter.clip;
    let mut transform = |p: Point2| {
        let q = affine(p);
        match &jitter {
            Some(n) => q.translate(
                n.sample(&mut jitter_rng).clamp(-clip, clip),
                n.sample(&mut jitter_rng).clamp(-clip, clip),
            ),
            None => q,
        }
    };

    let roads = scene
        .sd
        .roads()
        .iter()
        .map(|r| Road::new(r.id, r.points().iter().map(|p| transform(*p)).collect()))
        .collect::<Result<Vec<_>>>()?;
    let mut lanes = Vec::with_capacity(scene.hd.centerlines().len());
    for c in scene.hd.centerlines() {
        let (p1, p2) = (transform(c.vector.p1), transform(c.vector.p2));
        let vector = DirVec::new(p1, p2).unwrap_or(c.vector);
        lanes.push(Centerline { id: c.id, vector });
    }
    let boundaries = scene
        .hd
        .boundaries()
        .iter()
        .map(|b| Boundary::new(b.id, b.points().iter().map(|p| transform(*p)).collect()))
        .collect::<Result<Vec<_>>>()?;

    let mut edges = scene.hd.edges().clone();
    let mut labels = scene.gt.as_ref().map(|g| g.labels.clone());
    let merged = match &cfg.grid_sample {
        Some(g) => grid_sample(&mut lanes, &mut edges, labels.as_mut(), g.sizes),
        None => 0,
    };

    let sd = SdGraph::new(roads, scene.sd.edges().iter().copied())?;
    let hd = HdGraph::new(lanes, edges, boundaries)?;

    let warp = |r: &Rect| Rect::bounding(r.corners().map(affine)).expect("four corners");
    let sd_box = Rect::bounding(sd.roads().iter().flat_map(|r| r.points().iter().copied()));
    let hd_box = Rect::bounding(hd.points());
    let grow = |r: Rect, b: Option<Rect>| b.map_or(r, |b| r.union(&b));
    let crop = CropExtents {
        sd: grow(warp(&scene.meta.crop.sd), sd_box),
        hd: grow(warp(&scene.meta.crop.hd), hd_box),
    };

    let changed = rotation_deg != 0.0 || scale != 1.0 || flipped || jitter.is_some() || merged > 0;
    let mut meta = scene.meta.clone();
    if changed {
        meta.crop = crop;
        meta.augmentation = Some(AugmentSummary {
            seed: cfg.seed,
            rotation_deg,
            scale,
            flipped,
            merged,
        });
    }
    Scene::new(sd, hd, labels.map(Association::new), meta)
}

/// Keeps one centerline per `(x, y, heading)` cell of the vector midpoints.
/// Edges of removed centerlines are redirected to the kept one; a merge that
/// would close a cycle is skipped. Returns the number of removed centerlines.
pub fn grid_sample(
    lanes: &mut Vec<Centerline>,
    edges: &mut BTreeSet<(LaneId, LaneId)>,
    mut labels: Option<&mut BTreeMap<LaneId, crate::map::RoadId>>,
    [gx, gy, gr]: [f64; 3],
) -> usize {
    let mut cells: BTreeMap<(i64, i64, i64), Vec<LaneId>> = BTreeMap::new();
    for c in lanes.iter() {
        let m = c.vector.midpoint();
        let t = c.vector.theta.rem_euclid(2.0 * PI);
        let key = (
            (m.x / gx).floor() as i64,
            (m.y / gy).floor() as i64,
            (t / gr).floor() as i64,
        );
        cells.entry(key).or_default().push(c.id);
    }

    let mut removed = BTreeSet::new();
    for group in cells.values().filter(|g| g.len() > 1) {
        let keep = *group.iter().min().unwrap();
        let drop: BTreeSet<LaneId> = group.iter().copied().filter(|&id| id != keep).collect();
        let redirect = |id: LaneId| if drop.contains(&id) { keep } else { id };
        let trial: BTreeSet<(LaneId, LaneId)> = edges
            .iter()
            .map(|&(a, b)| (redirect(a), redirect(b)))
            .filter(|(a, b)| a != b)
            .collect();
        let nodes: Vec<LaneId> = lanes
            .iter()
            .map(|c| c.id)
            .filter(|id| !drop.contains(id) && !removed.contains(id))
            .collect();
        if find_cycle(&nodes, trial.iter().copied()).is_some() {
            continue;
        }
        *edges = trial;
        removed.extend(drop);
    }
    lanes.retain(|c| !removed.contains(&c.id));
    if let Some(l) = labels.as_mut() {
        l.retain(|id, _| !removed.contains(id));
    }
    removed.len()
}
