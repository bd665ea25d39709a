//! HMM map matching of lane paths onto the SD road graph.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{midpoint_distances, viterbi};
use crate::error::{Error, Result};
use crate::map::{Association, LaneId, RoadId, Scene, SdGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmParams {
    /// Standard deviation of the midpoint-to-road distance, in meters.
    pub emission_sigma: f64,
    /// Weight of staying on the same road.
    pub transition_self: f64,
    /// Total weight of moving to a successor road, split evenly among successors.
    pub transition_adjacent: f64,
    /// Forbid moves between roads that are neither equal nor connected.
    pub disallow_nonadjacent: bool,
}

impl Default for HmmParams {
    fn default() -> Self {
        Self {
            emission_sigma: 4.07,
            transition_self: 0.7,
            transition_adjacent: 0.3,
            disallow_nonadjacent: true,
        }
    }
}

/// Weight of a non-adjacent move when such moves are allowed.
const NONADJACENT_WEIGHT: f64 = 1e-3;

impl HmmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.emission_sigma > 0.0 && self.emission_sigma.is_finite()) {
            return Err(Error::Config("emission_sigma must be positive".into()));
        }
        if !(self.transition_self > 0.0 && self.transition_adjacent >= 0.0)
            || !self.transition_self.is_finite()
            || !self.transition_adjacent.is_finite()
        {
            return Err(Error::Config("transition weights must be finite, self > 0".into()));
        }
        Ok(())
    }

    /// Row-normalized log transition matrix over the roads of `sd`, in id order.
    pub fn log_transitions(&self, sd: &SdGraph) -> Vec<Vec<f64>> {
        let ids = sd.road_ids();
        ids.iter()
            .map(|&a| {
                let succ: Vec<RoadId> = sd.successors(a).filter(|&b| b != a).collect();
                let mut row: Vec<f64> = ids
                    .iter()
                    .map(|&b| {
                        if b == a {
                            self.transition_self
                        } else if succ.contains(&b) {
                            self.transition_adjacent / succ.len() as f64
                        } else if self.disallow_nonadjacent {
                            0.0
                        } else {
                            NONADJACENT_WEIGHT
                        }
                    })
                    .collect();
                let sum: f64 = row.iter().sum();
                for w in &mut row {
                    *w = (*w / sum).ln();
                }
                row
            })
            .collect()
    }

    /// Gaussian log-likelihood of a distance.
    pub fn log_emission(&self, d: f64) -> f64 {
        let s = self.emission_sigma;
        -d * d / (2.0 * s * s) - (s * (2.0 * PI).sqrt()).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmOutput {
    pub assoc: Association,
    /// Lane paths decoded with the per-token nearest road because no feasible
    /// road sequence existed.
    pub fallback_paths: usize,
}

/// Decodes every lane path with Viterbi. A centerline on several paths takes
/// the label from the path with the highest score; equal scores go to the
/// lower road id.
pub fn hmm_associate(scene: &Scene, params: &HmmParams) -> Result<HmmOutput> {
    params.validate()?;
    let roads = scene.sd.road_ids();
    if roads.is_empty() {
        return Err(Error::Validation("scene has no SD roads".into()));
    }
    let paths = scene.lane_paths()?;
    let log_em: Vec<Vec<f64>> = midpoint_distances(scene)
        .into_iter()
        .map(|row| row.into_iter().map(|d| params.log_emission(d)).collect())
        .collect();
    let log_tr = params.log_transitions(&scene.sd);
    let log_prior = vec![-(roads.len() as f64).ln(); roads.len()];

    let mut best: BTreeMap<LaneId, (f64, RoadId)> = BTreeMap::new();
    let mut fallback_paths = 0;
    for path in &paths.paths {
        let rows: Vec<usize> = path
            .iter()
            .map(|id| scene.hd.lane_index(*id).expect("path node exists"))
            .collect();
        let em: Vec<Vec<f64>> = rows.iter().map(|&i| log_em[i].clone()).collect();
        let (states, score) = match viterbi(&em, &log_tr, &log_prior) {
            Ok(r) => r,
            Err(Error::NoFeasiblePath) => {
                fallback_paths += 1;
                let states = em.iter().map(|row| crate::assoc::argmax(row)).collect();
                (states, f64::NEG_INFINITY)
            }
            Err(e) => return Err(e),
        };
        for (id, s) in path.iter().zip(states) {
            let cand = (score, roads[s]);
            let better = match best.get(id) {
                None => true,
                Some(&(sc, r)) => score > sc || (score == sc && cand.1 < r),
            };
            if better {
                best.insert(*id, cand);
            }
        }
    }
    Ok(HmmOutput {
        assoc: Association::new(best.into_iter().map(|(k, (_, r))| (k, r)).collect()),
        fallback_paths,
    })
}
