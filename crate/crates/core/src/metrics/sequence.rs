//! Path-level comparisons: run-length label sequences, overlap ratio and
//! Chamfer distance.

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::map::{Association, HdGraph, LaneId, RoadId};

/// Run-length collapsed road labels of a lane path and the summed centerline
/// length under each run.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSequence {
    pub labels: Vec<RoadId>,
    pub lengths: Vec<f64>,
}

impl LabelSequence {
    pub fn total(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Collapses per-token labels and lengths.
    pub fn collapse(tokens: impl IntoIterator<Item = (RoadId, f64)>) -> Self {
        let mut out = LabelSequence {
            labels: Vec::new(),
            lengths: Vec::new(),
        };
        for (label, len) in tokens {
            if out.labels.last() == Some(&label) {
                *out.lengths.last_mut().unwrap() += len;
            } else {
                out.labels.push(label);
                out.lengths.push(len);
            }
        }
        out
    }
}

/// Label sequence of `path` under `assoc`, with lengths taken from `hd`.
pub fn label_sequence(path: &[LaneId], assoc: &Association, hd: &HdGraph) -> Result<LabelSequence> {
    let tokens = path
        .iter()
        .map(|id| {
            let label = assoc
                .get(*id)
                .ok_or_else(|| Error::Coverage(format!("{id} has no label")))?;
            let len = hd
                .centerline(*id)
                .ok_or_else(|| Error::Coverage(format!("{id} is not in the HD graph")))?
                .vector
                .length();
            Ok((label, len))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelSequence::collapse(tokens))
}

/// Fraction of the ground-truth length covered by the prediction.
///
/// Labels are aligned by a longest common subsequence (most aligned labels,
/// then most covered length); each aligned pair contributes the smaller of
/// its two lengths.
pub fn overlap_ratio(pred: &LabelSequence, gt: &LabelSequence) -> f64 {
    let total = gt.total();
    if total <= 0.0 {
        return 0.0;
    }
    let (n, m) = (pred.labels.len(), gt.labels.len());
    // best[i][j]: (aligned count, covered length) over pred[i..], gt[j..].
    let mut best = vec![vec![(0usize, 0.0f64); m + 1]; n + 1];
    let better = |a: (usize, f64), b: (usize, f64)| a.0 > b.0 || (a.0 == b.0 && a.1 > b.1);
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            let mut v = best[i + 1][j];
            if better(best[i][j + 1], v) {
                v = best[i][j + 1];
            }
            if pred.labels[i] == gt.labels[j] {
                let (c, w) = best[i + 1][j + 1];
                let take = (c + 1, w + pred.lengths[i].min(gt.lengths[j]));
                if better(take, v) {
                    v = take;
                }
            }
            best[i][j] = v;
        }
    }
    (best[0][0].1 / total).clamp(0.0, 1.0)
}

/// Mean over `a` of the distance to the nearest point of `b`.
fn directed_mean(a: &[Point2], b: &[Point2]) -> f64 {
    let sum: f64 = a
        .iter()
        .map(|p| b.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min))
        .sum();
    sum / a.len() as f64
}

/// Symmetric Chamfer distance: the average of the two directed mean
/// nearest-point distances. Infinite if either set is empty.
pub fn chamfer(a: &[Point2], b: &[Point2]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    0.5 * (directed_mean(a, b) + directed_mean(b, a))
}

/// Endpoints of every centerline on the path, in order.
pub fn path_points(path: &[LaneId], hd: &HdGraph) -> Vec<Point2> {
    path.iter()
        .filter_map(|id| hd.centerline(*id))
        .flat_map(|c| [c.vector.p1, c.vector.p2])
        .collect()
}
