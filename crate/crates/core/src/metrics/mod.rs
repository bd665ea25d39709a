//! Association P-R and Reachability P-R.
//!
//! Both metrics walk the ground-truth lane paths of every scene. A path whose
//! start and end points are matched to predicted path endpoints is judged
//! against the predicted paths between those endpoints and counted as TP or
//! FP; every other ground-truth path is a FN. Counts are kept per threshold
//! and per ground-truth path length bucket.

mod report;
mod sequence;

pub use report::{f1, Aggregate, Counts, MetricKind, MetricReport, ThresholdSummary};
pub use sequence::{chamfer, label_sequence, overlap_ratio, path_points, LabelSequence};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::map::{Association, HdGraph, LaneId, Scene};
use crate::paths::DEFAULT_PATH_CAP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub thresholds: Vec<f64>,
    /// Lower bounds of the length buckets in meters; the last bucket is open.
    pub length_buckets: Vec<f64>,
    pub point_match_tau: f64,
    pub chamfer_tau: f64,
}

/// `0.50, 0.55, ..., 0.95`, each computed as an exact ratio of integers.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            length_buckets: (0..15).map(|i| 5.0 * i as f64).collect(),
            point_match_tau: 1.5,
            chamfer_tau: 1.0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if t.is_empty() || t.iter().any(|&x| !(x > 0.0 && x <= 1.0)) || t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("thresholds must be strictly increasing in (0, 1]".into()));
        }
        let b = &self.length_buckets;
        if b.first() != Some(&0.0) || b.windows(2).any(|w| !(w[0] < w[1])) || b.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("length buckets must start at 0 and increase strictly".into()));
        }
        if !(self.point_match_tau >= 0.0 && self.point_match_tau.is_finite()) {
            return Err(Error::Config("point_match_tau must be finite and >= 0".into()));
        }
        if !(self.chamfer_tau >= 0.0 && self.chamfer_tau.is_finite()) {
            return Err(Error::Config("chamfer_tau must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Index of the bucket containing a path of length `len`.
    pub fn bucket_of(&self, len: f64) -> usize {
        self.length_buckets.partition_point(|&lo| lo <= len).saturating_sub(1)
    }
}

/// A predicted HD graph with its labels.
#[derive(Debug, Clone, Copy)]
pub struct Prediction<'a> {
    pub hd: &'a HdGraph,
    pub assoc: &'a Association,
}

impl<'a> Prediction<'a> {
    pub fn new(hd: &'a HdGraph, assoc: &'a Association) -> Self {
        Self { hd, assoc }
    }
}

/// Greedy one-to-one matching by ascending distance within `tau`. Ties go to
/// the lower gt index, then the lower pred index. Returns, per gt point, the
/// matched pred index.
pub fn match_points(gt: &[Point2], pred: &[Point2], tau: f64) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, g) in gt.iter().enumerate() {
        for (j, p) in pred.iter().enumerate() {
            let d = g.dist(*p);
            if d <= tau {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; gt.len()];
    let mut used = vec![false; pred.len()];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(j);
            used[j] = true;
        }
    }
    out
}

/// Paths of a graph grouped by their (root, leaf) node pair, plus the
/// distinct roots and leaves with their positions.
struct Endpoints {
    paths: Vec<Vec<LaneId>>,
    roots: Vec<LaneId>,
    leaves: Vec<LaneId>,
    root_pts: Vec<Point2>,
    leaf_pts: Vec<Point2>,
}

impl Endpoints {
    fn new(hd: &HdGraph) -> Result<Self> {
        let paths = hd.enumerate_paths(DEFAULT_PATH_CAP)?.paths;
        let mut roots: Vec<LaneId> = paths.iter().map(|p| p[0]).collect();
        let mut leaves: Vec<LaneId> = paths.iter().map(|p| *p.last().unwrap()).collect();
        roots.sort();
        roots.dedup();
        leaves.sort();
        leaves.dedup();
        let at = |id: &LaneId, start: bool| {
            let v = hd.centerline(*id).expect("path node exists").vector;
            if start {
                v.p1
            } else {
                v.p2
            }
        };
        let root_pts = roots.iter().map(|id| at(id, true)).collect();
        let leaf_pts = leaves.iter().map(|id| at(id, false)).collect();
        Ok(Self {
            paths,
            roots,
            leaves,
            root_pts,
            leaf_pts,
        })
    }
}

/// Judges one gt path against the candidate predicted paths, one verdict per
/// threshold.
type Judge = dyn Fn(&Scene, Prediction<'_>, &[LaneId], &[&Vec<LaneId>]) -> Result<Vec<bool>> + Sync;

fn count_scene(
    pred: Prediction<'_>,
    scene: &Scene,
    cfg: &MetricConfig,
    n_thresholds: usize,
    judge: &Judge,
) -> Result<Vec<Vec<Counts>>> {
    let gt_hd = &scene.hd;
    let mut counts = vec![vec![Counts::default(); cfg.length_buckets.len()]; n_thresholds];
    let g = Endpoints::new(gt_hd)?;
    let p = Endpoints::new(pred.hd)?;
    let root_match = match_points(&g.root_pts, &p.root_pts, cfg.point_match_tau);
    let leaf_match = match_points(&g.leaf_pts, &p.leaf_pts, cfg.point_match_tau);

    let mut pred_between: BTreeMap<(LaneId, LaneId), Vec<&Vec<LaneId>>> = BTreeMap::new();
    for path in &p.paths {
        pred_between
            .entry((path[0], *path.last().unwrap()))
            .or_default()
            .push(path);
    }

    for path in &g.paths {
        let len: f64 = path
            .iter()
            .map(|id| gt_hd.centerline(*id).expect("path node exists").vector.length())
            .sum();
        let bucket = cfg.bucket_of(len);
        let ri = g.roots.binary_search(&path[0]).expect("root listed");
        let li = g.leaves.binary_search(path.last().unwrap()).expect("leaf listed");
        let candidates = match (root_match[ri], leaf_match[li]) {
            (Some(r), Some(l)) => pred_between.get(&(p.roots[r], p.leaves[l])),
            _ => None,
        };
        match candidates {
            Some(c) => {
                for (t, ok) in judge(scene, pred, path, c)?.into_iter().enumerate() {
                    if ok {
                        counts[t][bucket].tp += 1;
                    } else {
                        counts[t][bucket].fp += 1;
                    }
                }
            }
            None => {
                for per_t in counts.iter_mut() {
                    per_t[bucket].fn_ += 1;
                }
            }
        }
    }
    Ok(counts)
}

fn evaluate(
    kind: MetricKind,
    preds: &[Prediction<'_>],
    scenes: &[Scene],
    cfg: &MetricConfig,
    thresholds: Vec<f64>,
    judge: &Judge,
) -> Result<MetricReport> {
    cfg.validate()?;
    if preds.len() != scenes.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} scenes",
            preds.len(),
            scenes.len()
        )));
    }
    let per_scene = preds
        .par_iter()
        .zip(scenes.par_iter())
        .map(|(pred, scene)| {
            let gt = scene.gt()?;
            gt.validate_against(&scene.sd, &scene.hd)?;
            count_scene(*pred, scene, cfg, thresholds.len(), judge)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut counts = vec![vec![Counts::default(); cfg.length_buckets.len()]; thresholds.len()];
    for scene_counts in per_scene {
        for (acc, add) in counts.iter_mut().zip(scene_counts) {
            for (a, b) in acc.iter_mut().zip(add) {
                *a += b;
            }
        }
    }
    Ok(MetricReport::from_counts(kind, thresholds, cfg.length_buckets.clone(), counts))
}

/// Association P-R: a matched gt path is a TP at threshold `th` when the best
/// overlap ratio of a predicted path between the matched endpoints reaches `th`.
pub fn association_pr(preds: &[Prediction<'_>], scenes: &[Scene], cfg: &MetricConfig) -> Result<MetricReport> {
    let thresholds = cfg.thresholds.clone();
    let judge = move |scene: &Scene, pred: Prediction<'_>, gt_path: &[LaneId], cands: &[&Vec<LaneId>]| {
        let gt_seq = label_sequence(gt_path, scene.gt()?, &scene.hd)?;
        let mut best = 0.0f64;
        for c in cands {
            let seq = label_sequence(c, pred.assoc, pred.hd)?;
            best = best.max(overlap_ratio(&seq, &gt_seq));
        }
        Ok(thresholds.iter().map(|&th| best >= th).collect())
    };
    evaluate(MetricKind::Association, preds, scenes, cfg, cfg.thresholds.clone(), &judge)
}

/// Reachability P-R: a matched gt path is a TP when some predicted path
/// between the matched endpoints lies within `chamfer_tau` (symmetric Chamfer
/// distance over centerline endpoints).
pub fn reachability_pr(preds: &[Prediction<'_>], scenes: &[Scene], cfg: &MetricConfig) -> Result<MetricReport> {
    let tau = cfg.chamfer_tau;
    let judge = move |scene: &Scene, pred: Prediction<'_>, gt_path: &[LaneId], cands: &[&Vec<LaneId>]| {
        let gt_pts = path_points(gt_path, &scene.hd);
        let best = cands
            .iter()
            .map(|c| chamfer(&path_points(c, pred.hd), &gt_pts))
            .fold(f64::INFINITY, f64::min);
        Ok(vec![best <= tau])
    };
    evaluate(MetricKind::Reachability, preds, scenes, cfg, vec![tau], &judge)
}
