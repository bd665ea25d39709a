//! Topology-constrained bidirectional beam search over association
//! probabilities.
//!
//! Decoding of a lane path starts from its most confident token and grows a
//! contiguous span one token at a time, to the left or to the right. A label
//! may follow another only if both are the same road or the SD graph has the
//! directed edge between them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assoc::{argmax, AssocMatrix};
use crate::error::{Error, Result};
use crate::map::{Association, LaneId, RoadId, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub beam_width: usize,
    /// Maximum decoded span; `None` decodes the whole path.
    pub max_len: Option<usize>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            beam_width: 5,
            max_len: None,
        }
    }
}

/// A partial labelling of the contiguous token span `[left, right]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Road column indices, one per covered token.
    pub labels: Vec<usize>,
    pub score: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Road column index per token.
    pub labels: Vec<usize>,
    pub score: f64,
    /// Token positions labelled by plain argmax because no feasible
    /// connected extension existed.
    pub fallback: Vec<usize>,
}

/// Position and road column of the globally most confident token. Ties go to
/// the lowest position, then the lowest column.
pub fn init_token(rows: &[&[f64]]) -> (usize, usize) {
    let mut best = (0, argmax(rows[0]));
    for (t, row) in rows.iter().enumerate().skip(1) {
        let j = argmax(row);
        if row[j] > rows[best.0][best.1] {
            best = (t, j);
        }
    }
    best
}

/// Ranking used for pruning: score descending, then labels ascending, then
/// span start ascending.
fn rank(a: &Hypothesis, b: &Hypothesis) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.labels.cmp(&b.labels))
        .then_with(|| a.left.cmp(&b.left))
}

/// Decodes one lane path. `rows[t]` holds the road probabilities of token `t`
/// and `allowed(a, b)` says whether column `b` may follow column `a`; equal
/// columns are always allowed.
pub fn beam_decode(
    rows: &[&[f64]],
    allowed: impl Fn(usize, usize) -> bool,
    cfg: &DecoderConfig,
) -> Result<Decoded> {
    if rows.is_empty() {
        return Err(Error::Validation("cannot decode an empty path".into()));
    }
    if cfg.beam_width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let n = rows.len();
    let k_roads = rows[0].len();
    let target = cfg.max_len.unwrap_or(n).clamp(1, n);
    let link = |a: usize, b: usize| a == b || allowed(a, b);

    let (t0, r0) = init_token(rows);
    let mut beam = vec![Hypothesis {
        labels: vec![r0],
        score: rows[t0][r0].ln(),
        left: t0,
        right: t0,
    }];
    let mut fallback = Vec::new();

    for _ in 1..target {
        let mut cand: BTreeMap<(usize, usize, Vec<usize>), f64> = BTreeMap::new();
        for h in &beam {
            if h.left > 0 {
                let t = h.left - 1;
                for w in (0..k_roads).filter(|&w| link(w, h.labels[0])) {
                    let mut labels = Vec::with_capacity(h.labels.len() + 1);
                    labels.push(w);
                    labels.extend_from_slice(&h.labels);
                    cand.insert((t, h.right, labels), h.score + rows[t][w].ln());
                }
            }
            if h.right + 1 < n {
                let t = h.right + 1;
                let last = *h.labels.last().unwrap();
                for w in (0..k_roads).filter(|&w| link(last, w)) {
                    let mut labels = h.labels.clone();
                    labels.push(w);
                    cand.insert((h.left, t, labels), h.score + rows[t][w].ln());
                }
            }
        }
        let mut next: Vec<Hypothesis> = cand
            .into_iter()
            .filter(|(_, s)| s.is_finite())
            .map(|((left, right, labels), score)| Hypothesis {
                labels,
                score,
                left,
                right,
            })
            .collect();
        if next.is_empty() {
            // Dead end: extend the leading hypothesis with the plain argmax.
            let mut h = beam.swap_remove(0);
            let t = if h.right + 1 < n { h.right + 1 } else { h.left - 1 };
            let w = argmax(rows[t]);
            h.score += rows[t][w].ln();
            if t > h.right {
                h.right = t;
                h.labels.push(w);
            } else {
                h.left = t;
                h.labels.insert(0, w);
            }
            fallback.push(t);
            next.push(h);
        }
        next.sort_by(rank);
        next.truncate(cfg.beam_width);
        beam = next;
    }

    let best = beam.swap_remove(0);
    let mut labels: Vec<usize> = rows.iter().map(|r| argmax(r)).collect();
    labels[best.left..=best.right].copy_from_slice(&best.labels);
    fallback.extend((0..best.left).chain(best.right + 1..n));
    fallback.sort_unstable();
    Ok(Decoded {
        labels,
        score: best.score,
        fallback,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDecode {
    pub assoc: Association,
    /// Number of tokens labelled by the argmax fallback.
    pub fallback_tokens: usize,
}

/// Decodes every lane path of `scene`. A centerline on several paths takes the
/// label of the highest-scoring path; equal scores go to the lower road id.
pub fn decode_scene(scene: &Scene, probs: &AssocMatrix, cfg: &DecoderConfig) -> Result<SceneDecode> {
    let roads = probs.roads();
    let cols: BTreeMap<RoadId, usize> = roads.iter().enumerate().map(|(j, r)| (*r, j)).collect();
    let edges: BTreeSet<(usize, usize)> = scene
        .sd
        .edges()
        .iter()
        .filter_map(|(a, b)| Some((*cols.get(a)?, *cols.get(b)?)))
        .collect();
    let allowed = |a: usize, b: usize| edges.contains(&(a, b));

    let mut best: BTreeMap<LaneId, (f64, RoadId)> = BTreeMap::new();
    let mut fallback_tokens = 0;
    for path in scene.lane_paths()?.paths {
        let rows = path
            .iter()
            .map(|id| {
                probs
                    .lane_row(*id)
                    .map(|i| probs.row(i))
                    .ok_or_else(|| Error::Coverage(format!("{id} has no probability row")))
            })
            .collect::<Result<Vec<_>>>()?;
        let out = beam_decode(&rows, allowed, cfg)?;
        fallback_tokens += out.fallback.len();
        for (id, j) in path.iter().zip(out.labels) {
            let cand = (out.score, roads[j]);
            let better = match best.get(id) {
                None => true,
                Some(&(s, r)) => cand.0 > s || (cand.0 == s && cand.1 < r),
            };
            if better {
                best.insert(*id, cand);
            }
        }
    }
    Ok(SceneDecode {
        assoc: Association::new(best.into_iter().map(|(k, (_, r))| (k, r)).collect()),
        fallback_tokens,
    })
}
