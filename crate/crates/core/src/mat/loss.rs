use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::forward::MatOutput;
use super::head::{pool_roads, similarity_logits};
use crate::assoc::AssocMatrix;
use crate::error::{Error, Result};
use crate::map::{Association, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub ce: f64,
    pub ctc: f64,
    pub total: f64,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// CTC negative log-likelihood of `labels` under per-step log-probabilities
/// `logp` (`T` rows of `K + 1` entries, `blank` is the blank column).
/// Infinite when no alignment fits in `T` steps.
pub fn ctc_nll(logp: &[Vec<f64>], blank: usize, labels: &[usize]) -> Result<f64> {
    let t_len = logp.len();
    if t_len == 0 {
        return Err(Error::Validation("CTC needs at least one step".into()));
    }
    let width = logp[0].len();
    if blank >= width || logp.iter().any(|r| r.len() != width) {
        return Err(Error::Validation("CTC input rows must share one width that includes the blank".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= width || l == blank) {
        return Err(Error::Label(format!("CTC label {l} is the blank or out of range")));
    }
    // Extended sequence: blank, l1, blank, l2, ..., blank.
    let mut ext = vec![blank; 2 * labels.len() + 1];
    for (i, &l) in labels.iter().enumerate() {
        ext[2 * i + 1] = l;
    }
    let s_len = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; s_len];
    alpha[0] = logp[0][blank];
    if s_len > 1 {
        alpha[1] = logp[0][ext[1]];
    }
    for row in &logp[1..] {
        let mut next = vec![f64::NEG_INFINITY; s_len];
        for s in 0..s_len {
            let mut a = alpha[s];
            if s >= 1 {
                a = log_add(a, alpha[s - 1]);
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                a = log_add(a, alpha[s - 2]);
            }
            next[s] = a + row[ext[s]];
        }
        alpha = next;
    }
    let end = if s_len > 1 { log_add(alpha[s_len - 1], alpha[s_len - 2]) } else { alpha[0] };
    Ok(-end)
}

/// Mean over rows of `-ln P[i, gt(i)]`.
pub fn cross_entropy(probs: &AssocMatrix, gt: &Association) -> Result<f64> {
    let n = probs.lanes().len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (i, lane) in probs.lanes().iter().enumerate() {
        let road = gt.get(*lane).ok_or_else(|| Error::Coverage(format!("{lane} has no ground-truth label")))?;
        let j = probs
            .road_col(road)
            .ok_or_else(|| Error::Label(format!("{lane} is labelled with {road}, which is not a candidate road")))?;
        sum -= probs.row(i)[j].ln();
    }
    Ok(sum / n as f64)
}

/// `alpha * ce + beta * ctc`, with `ctc` the mean CTC loss over lane paths.
pub fn compute_loss(
    probs: &AssocMatrix,
    gt: &Association,
    path_logprobs: &[Vec<Vec<f64>>],
    gt_label_seqs: &[Vec<usize>],
    alpha: f64,
    beta: f64,
) -> Result<LossValues> {
    if path_logprobs.len() != gt_label_seqs.len() {
        return Err(Error::Validation("one label sequence per path is required".into()));
    }
    let ce = cross_entropy(probs, gt)?;
    let k = probs.roads().len();
    let mut ctc = 0.0;
    for (lp, labels) in path_logprobs.iter().zip(gt_label_seqs) {
        if labels.len() > lp.len() {
            return Err(Error::Validation(format!("{} labels for {} steps", labels.len(), lp.len())));
        }
        ctc += ctc_nll(lp, k, labels)?;
    }
    if !path_logprobs.is_empty() {
        ctc /= path_logprobs.len() as f64;
    }
    Ok(LossValues { ce, ctc, total: alpha * ce + beta * ctc })
}

/// Logit given to the blank class next to the road similarities.
pub const BLANK_LOGIT: f64 = 0.0;

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Loss of a forward pass against the scene's ground truth. Each lane path
/// becomes a CTC sequence over `K + 1` classes (roads, then blank), built from
/// the road similarities plus [`BLANK_LOGIT`]; its target is the run-length
/// collapsed ground-truth road sequence.
pub fn scene_loss(scene: &Scene, out: &MatOutput, cfg: &ModelConfig) -> Result<LossValues> {
    let gt = scene.gt()?;
    let pooled = pool_roads(&out.road_feats, &out.road_tokens, &out.roads, cfg.pooling)?;
    let logits = similarity_logits(&out.centerline_feats, &pooled)?;
    let probs = AssocMatrix::from_logits(out.lanes.clone(), out.roads.clone(), &logits)?;
    let k = out.roads.len();
    // Cross-entropy from log-softmax rows, so saturated logits stay finite.
    let mut ce = 0.0;
    for (i, lane) in out.lanes.iter().enumerate() {
        let road = gt.get(*lane).ok_or_else(|| Error::Coverage(format!("{lane} has no ground-truth label")))?;
        let j = probs.road_col(road).ok_or_else(|| Error::Label(format!("{lane} is labelled with unknown {road}")))?;
        ce -= log_softmax(&logits[i * k..(i + 1) * k])[j];
    }
    if !out.lanes.is_empty() {
        ce /= out.lanes.len() as f64;
    }
    let mut seqs = Vec::new();
    let mut labels = Vec::new();
    for path in scene.lane_paths()?.paths {
        let mut lp = Vec::with_capacity(path.len());
        let mut target: Vec<usize> = Vec::new();
        for id in &path {
            let i = probs.lane_row(*id).expect("lane in matrix");
            let mut row = logits[i * k..(i + 1) * k].to_vec();
            row.push(BLANK_LOGIT);
            lp.push(log_softmax(&row));
            let road = gt.get(*id).ok_or_else(|| Error::Coverage(format!("{id} has no ground-truth label")))?;
            let j = probs.road_col(road).ok_or_else(|| Error::Label(format!("{id} is labelled with unknown {road}")))?;
            if target.last() != Some(&j) {
                target.push(j);
            }
        }
        seqs.push(lp);
        labels.push(target);
    }
    let ctc = compute_loss(&probs, gt, &seqs, &labels, cfg.alpha, cfg.beta)?.ctc;
    Ok(LossValues { ce, ctc, total: cfg.alpha * ce + cfg.beta * ctc })
}
