//! HD map degradations: GPS shift, missing centerlines, endpoint noise and
//! over-segmentation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::stream;
use crate::error::{Error, Result};
use crate::geom::{DirVec, Point2, Rect};
use crate::map::{Association, Boundary, Centerline, HdGraph, LaneId, PerturbSummary, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum GpsShift {
    /// A fixed offset.
    Fixed(Point2),
    /// An offset drawn per scene with this standard deviation on each axis.
    Gaussian(f64),
}

impl Default for GpsShift {
    fn default() -> Self {
        GpsShift::Fixed(Point2::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub gps_shift: GpsShift,
    pub dropout_rate: f64,
    pub jitter_sigma: f64,
    pub oversegment_rate: f64,
    pub seed: u64,
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |r: f64| (0.0..=1.0).contains(&r);
        if !rate(self.dropout_rate) || !rate(self.oversegment_rate) {
            return Err(Error::Config("perturbation rates must lie in [0, 1]".into()));
        }
        let sigma_ok = |s: f64| s >= 0.0 && s.is_finite();
        let shift_ok = match self.gps_shift {
            GpsShift::Fixed(p) => p.is_finite(),
            GpsShift::Gaussian(s) => sigma_ok(s),
        };
        if !shift_ok || !sigma_ok(self.jitter_sigma) {
            return Err(Error::Config("gps shift and jitter sigma must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn is_noop(&self) -> bool {
        let no_shift = match self.gps_shift {
            GpsShift::Fixed(p) => p.x == 0.0 && p.y == 0.0,
            GpsShift::Gaussian(s) => s == 0.0,
        };
        no_shift
            && self.dropout_rate == 0.0
            && self.jitter_sigma == 0.0
            && self.oversegment_rate == 0.0
    }
}

/// Number of items selected by a rate, rounded to nearest.
fn count_for(rate: f64, n: usize) -> usize {
    ((rate * n as f64).round() as usize).min(n)
}

/// Applies shift, dropout, jitter and over-segmentation, in that order, to the
/// HD map. Ground-truth labels follow the surviving and split centerlines.
/// A no-op configuration returns the scene unchanged.
pub fn perturb_scene(scene: &Scene, cfg: &PerturbConfig) -> Result<Scene> {
    cfg.validate()?;
    let gt = scene.gt()?;
    if cfg.is_noop() {
        return Ok(scene.clone());
    }

    let shift = match cfg.gps_shift {
        GpsShift::Fixed(p) => p,
        GpsShift::Gaussian(s) if s > 0.0 => {
            let normal = Normal::new(0.0, s).expect("validated sigma");
            let mut rng = stream(cfg.seed, 0);
            Point2::new(normal.sample(&mut rng), normal.sample(&mut rng))
        }
        GpsShift::Gaussian(_) => Point2::default(),
    };
    let mv = |p: Point2| p.translate(shift.x, shift.y);

    let mut lanes: Vec<Centerline> = scene
        .hd
        .centerlines()
        .iter()
        .map(|c| Centerline {
            id: c.id,
            vector: DirVec::new(mv(c.vector.p1), mv(c.vector.p2)).expect("translation keeps p1 != p2"),
        })
        .collect();
    let boundaries = scene
        .hd
        .boundaries()
        .iter()
        .map(|b| Boundary::new(b.id, b.points().iter().map(|p| mv(*p)).collect()))
        .collect::<Result<Vec<_>>>()?;
    let mut edges: BTreeSet<(LaneId, LaneId)> = scene.hd.edges().clone();
    let mut labels = gt.labels.clone();

    let dropped = count_for(cfg.dropout_rate, lanes.len());
    if dropped > 0 {
        let mut rng = stream(cfg.seed, 1);
        let gone: BTreeSet<LaneId> = sample(&mut rng, lanes.len(), dropped)
            .into_iter()
            .map(|i| lanes[i].id)
            .collect();
        lanes.retain(|c| !gone.contains(&c.id));
        edges.retain(|(a, b)| !gone.contains(a) && !gone.contains(b));
        labels.retain(|id, _| !gone.contains(id));
    }

    if cfg.jitter_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.jitter_sigma).expect("validated sigma");
        let mut rng = stream(cfg.seed, 2);
        let noisy = |p: Point2, rng: &mut rand_chacha::ChaCha8Rng| {
            p.translate(normal.sample(rng), normal.sample(rng))
        };
        for c in &mut lanes {
            let p1 = noisy(c.vector.p1, &mut rng);
            let p2 = noisy(c.vector.p2, &mut rng);
            // A collapse to a zero-length vector keeps the original geometry.
            if let Ok(v) = DirVec::new(p1, p2) {
                c.vector = v;
            }
        }
    }

    let split = count_for(cfg.oversegment_rate, lanes.len());
    if split > 0 {
        let mut rng = stream(cfg.seed, 3);
        let mut chosen: Vec<usize> = sample(&mut rng, lanes.len(), split).into_vec();
        chosen.sort_unstable();
        let mut next = lanes.iter().map(|c| c.id.0).max().unwrap_or(0) + 1;
        let mut outgoing: BTreeMap<LaneId, Vec<LaneId>> = BTreeMap::new();
        for (a, b) in &edges {
            outgoing.entry(*a).or_default().push(*b);
        }
        let mut added = Vec::with_capacity(split);
        for i in chosen {
            let c = lanes[i];
            let mid = c.vector.midpoint();
            let (Ok(first), Ok(second)) = (DirVec::new(c.vector.p1, mid), DirVec::new(mid, c.vector.p2))
            else {
                continue;
            };
            let tail = LaneId(next);
            next += 1;
            lanes[i].vector = first;
            added.push(Centerline {
                id: tail,
                vector: second,
            });
            for b in outgoing.get(&c.id).into_iter().flatten() {
                edges.remove(&(c.id, *b));
                edges.insert((tail, *b));
            }
            edges.insert((c.id, tail));
            labels.insert(tail, labels[&c.id]);
        }
        lanes.extend(added);
    }

    let hd = HdGraph::new(lanes, edges, boundaries)?;
    let mut meta = scene.meta.clone();
    let moved = Rect {
        min: mv(meta.crop.hd.min),
        max: mv(meta.crop.hd.max),
    };
    meta.crop.hd = Rect::bounding(hd.points()).map_or(moved, |b| moved.union(&b));
    meta.perturbation = Some(PerturbSummary {
        seed: cfg.seed,
        gps_shift: shift,
        dropped,
        jitter_sigma: cfg.jitter_sigma,
        split,
    });
    Scene::new(scene.sd.clone(), hd, Some(Association::new(labels)), meta)
}
