use super::config::Pooling;
use super::tensor::Tensor;
use crate::assoc::AssocMatrix;
use crate::error::{Error, Result};
use crate::map::{LaneId, RoadId};

/// Per-road pooled features, one row per entry of `roads`.
pub fn pool_roads(road_feats: &Tensor, road_tokens: &[RoadId], roads: &[RoadId], pooling: Pooling) -> Result<Vec<Vec<f64>>> {
    if road_tokens.len() != road_feats.rows() {
        return Err(Error::Config(format!("{} road ids for {} road tokens", road_tokens.len(), road_feats.rows())));
    }
    let d = road_feats.cols();
    roads
        .iter()
        .map(|&r| {
            let rows: Vec<&[f32]> = road_tokens
                .iter()
                .enumerate()
                .filter(|(_, &t)| t == r)
                .map(|(i, _)| road_feats.row(i))
                .collect();
            if rows.is_empty() {
                return Err(Error::Validation(format!("{r} has no tokens to pool")));
            }
            Ok((0..d)
                .map(|j| match pooling {
                    Pooling::Avg => rows.iter().map(|row| row[j] as f64).sum::<f64>() / rows.len() as f64,
                    Pooling::Max => rows.iter().map(|row| row[j] as f64).fold(f64::NEG_INFINITY, f64::max),
                })
                .collect())
        })
        .collect()
}

/// Scaled dot products `F_i . Fbar_j / sqrt(d)`, row-major `lanes x roads`.
pub fn similarity_logits(centerline_feats: &Tensor, pooled: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = centerline_feats.cols();
    if pooled.iter().any(|p| p.len() != d) {
        return Err(Error::Config("centerline and road features differ in width".into()));
    }
    let scale = 1.0 / (d.max(1) as f64).sqrt();
    let mut out = Vec::with_capacity(centerline_feats.rows() * pooled.len());
    for i in 0..centerline_feats.rows() {
        let f = centerline_feats.row(i);
        for p in pooled {
            out.push(f.iter().zip(p).map(|(a, b)| *a as f64 * b).sum::<f64>() * scale);
        }
    }
    Ok(out)
}

/// Softmax over roads of the scaled similarity between each centerline and
/// each pooled road feature.
pub fn association_probs(
    centerline_feats: &Tensor,
    lanes: &[LaneId],
    road_feats: &Tensor,
    road_tokens: &[RoadId],
    roads: &[RoadId],
    pooling: Pooling,
) -> Result<AssocMatrix> {
    if lanes.len() != centerline_feats.rows() {
        return Err(Error::Config(format!("{} lane ids for {} centerline rows", lanes.len(), centerline_feats.rows())));
    }
    let pooled = pool_roads(road_feats, road_tokens, roads, pooling)?;
    let logits = similarity_logits(centerline_feats, &pooled)?;
    AssocMatrix::from_logits(lanes.to_vec(), roads.to_vec(), &logits)
}
