//! Row-stochastic centerline-to-road probability matrix.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::map::{Association, LaneId, RoadId};

/// Tolerance on row sums.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// `probs[i * roads.len() + j]` is the probability that centerline `lanes[i]`
/// belongs to road `roads[j]`. Both id lists are sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct AssocMatrix {
    lanes: Vec<LaneId>,
    roads: Vec<RoadId>,
    probs: Vec<f64>,
}

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

impl AssocMatrix {
    pub fn new(lanes: Vec<LaneId>, roads: Vec<RoadId>, probs: Vec<f64>) -> Result<Self> {
        if !lanes.windows(2).all(|w| w[0] < w[1]) || !roads.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Validation("matrix ids must be unique and sorted".into()));
        }
        if probs.len() != lanes.len() * roads.len() {
            return Err(Error::Validation(format!(
                "matrix has {} entries, expected {} x {}",
                probs.len(),
                lanes.len(),
                roads.len()
            )));
        }
        let m = Self {
            lanes,
            roads,
            probs,
        };
        for (i, lane) in m.lanes.iter().enumerate() {
            let row = m.row(i);
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Validation(format!("row of {lane} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Validation(format!("row of {lane} sums to {sum}")));
            }
        }
        Ok(m)
    }

    /// Builds the matrix by a row-wise softmax of `logits`.
    pub fn from_logits(lanes: Vec<LaneId>, roads: Vec<RoadId>, logits: &[f64]) -> Result<Self> {
        let k = roads.len();
        if k == 0 && !lanes.is_empty() {
            return Err(Error::Validation("no roads to associate with".into()));
        }
        let probs = if k == 0 {
            Vec::new()
        } else {
            logits.chunks(k).flat_map(softmax).collect()
        };
        Self::new(lanes, roads, probs)
    }

    pub fn lanes(&self) -> &[LaneId] {
        &self.lanes
    }

    pub fn roads(&self) -> &[RoadId] {
        &self.roads
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.roads.len();
        &self.probs[i * k..(i + 1) * k]
    }

    pub fn lane_row(&self, id: LaneId) -> Option<usize> {
        self.lanes.binary_search(&id).ok()
    }

    pub fn road_col(&self, id: RoadId) -> Option<usize> {
        self.roads.binary_search(&id).ok()
    }

    /// Per-row argmax labels.
    pub fn to_association(&self) -> Association {
        let labels: BTreeMap<LaneId, RoadId> = self
            .lanes
            .iter()
            .enumerate()
            .map(|(i, &lane)| (lane, self.roads[argmax(self.row(i))]))
            .collect();
        Association::new(labels)
    }
}
