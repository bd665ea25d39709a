//! Classical association baselines: nearest-road KNN and HMM map matching.

mod hmm;
mod viterbi;

pub use hmm::{hmm_associate, HmmOutput, HmmParams};
pub use viterbi::viterbi;

use std::collections::BTreeMap;

use crate::assoc::AssocMatrix;
use crate::error::{Error, Result};
use crate::map::{Association, Scene};

/// Distances from every centerline midpoint to every road, row-major
/// `[lane][road]` in id order.
pub fn midpoint_distances(scene: &Scene) -> Vec<Vec<f64>> {
    scene
        .hd
        .centerlines()
        .iter()
        .map(|c| {
            let m = c.vector.midpoint();
            scene.sd.roads().iter().map(|r| r.distance_to(m)).collect()
        })
        .collect()
}

/// Labels each centerline with the road closest to its midpoint; equal
/// distances go to the lowest road id.
pub fn knn_associate(scene: &Scene) -> Result<Association> {
    let roads = scene.sd.roads();
    if roads.is_empty() {
        return Err(Error::Validation("scene has no SD roads".into()));
    }
    let labels: BTreeMap<_, _> = scene
        .hd
        .centerlines()
        .iter()
        .zip(midpoint_distances(scene))
        .map(|(c, dists)| {
            let mut best = 0;
            for (j, &d) in dists.iter().enumerate() {
                if d < dists[best] {
                    best = j;
                }
            }
            (c.id, roads[best].id)
        })
        .collect();
    Ok(Association::new(labels))
}

/// Soft KNN: a row-wise softmax of Gaussian log-likelihoods of the midpoint
/// distances. Its row argmax equals [`knn_associate`].
pub fn knn_probs(scene: &Scene, sigma: f64) -> Result<AssocMatrix> {
    if scene.sd.roads().is_empty() {
        return Err(Error::Validation("scene has no SD roads".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let logits: Vec<f64> = midpoint_distances(scene)
        .into_iter()
        .flatten()
        .map(|d| -d * d / (2.0 * sigma * sigma))
        .collect();
    AssocMatrix::from_logits(scene.hd.lane_ids(), scene.sd.road_ids(), &logits)
}
