//! Grouped multi-head self-attention and its two uses: attention along lane
//! and road paths, and attention inside patches of a space-filling-curve
//! serialization.

use super::rope::rope_rotate;
use super::tensor::Tensor;
use super::weights::AttnWeights;
use crate::curves::{offset_to_origin, sort_tokens, CurveKind, GridCoord};
use crate::error::{Error, Result};
use crate::paths::PathIndex;

/// Multi-head self-attention restricted to `groups` (row indices of `x`).
/// Rows attend only to rows of their own group. Queries and keys of each
/// head are rotated with `positions` before the dot product. Every row must
/// belong to exactly one group.
pub fn grouped_attention<const A: usize>(
    x: &Tensor,
    w: AttnWeights<'_>,
    heads: usize,
    groups: &[Vec<usize>],
    positions: &[[i64; A]],
    base: f64,
) -> Result<Tensor> {
    let (n, c) = (x.rows(), x.cols());
    if heads == 0 || c % heads != 0 {
        return Err(Error::Config(format!("{c} channels cannot be split into {heads} heads")));
    }
    let dh = c / heads;
    let qkv = w.qkv.apply(x);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut merged = Tensor::zeros(vec![n, c]);
    for h in 0..heads {
        let q = rope_rotate(&qkv.col_slice(h * dh, dh), positions, base)?;
        let k = rope_rotate(&qkv.col_slice(c + h * dh, dh), positions, base)?;
        let v = qkv.col_slice(2 * c + h * dh, dh);
        let mut scores = Vec::new();
        for g in groups {
            for &i in g {
                scores.clear();
                scores.extend(g.iter().map(|&j| {
                    q.row(i).iter().zip(k.row(j)).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>() * scale
                }));
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                let mut acc = vec![0.0f64; dh];
                for (&j, p) in g.iter().zip(&scores) {
                    for (a, vv) in acc.iter_mut().zip(v.row(j)) {
                        *a += p / sum * *vv as f64;
                    }
                }
                let out = &mut merged.row_mut(i)[h * dh..(h + 1) * dh];
                for (o, a) in out.iter_mut().zip(acc) {
                    *o = a as f32;
                }
            }
        }
    }
    Ok(w.proj.apply(&merged))
}

/// Path-aware attention.
///
/// Tokens are copied into path order (`pidx.dup_map` holds token indices),
/// attend within their path, and the copies of each token are averaged back.
/// `positions` holds (order along the path, order inside the token's own
/// element) for every copy.
pub fn path_attention(
    tokens: &Tensor,
    pidx: &PathIndex<usize>,
    positions: &[[i64; 2]],
    w: AttnWeights<'_>,
    heads: usize,
    base: f64,
) -> Result<Tensor> {
    let n = tokens.rows();
    let mut copies = vec![0usize; n];
    for &t in &pidx.dup_map {
        if t >= n {
            return Err(Error::Topology(format!("path refers to token {t} of {n}")));
        }
        copies[t] += 1;
    }
    if let Some(t) = copies.iter().position(|&c| c == 0) {
        return Err(Error::Topology(format!("token {t} is not on any path")));
    }
    let dup = tokens.gather_rows(&pidx.dup_map);
    let groups: Vec<Vec<usize>> = pidx
        .offsets()
        .into_iter()
        .zip(&pidx.paths)
        .map(|(o, p)| (o..o + p.len()).collect())
        .collect();
    let y = grouped_attention(&dup, w, heads, &groups, positions, base)?;

    let c = tokens.cols();
    let mut acc = vec![0.0f64; n * c];
    for (k, &t) in pidx.dup_map.iter().enumerate() {
        for (a, v) in acc[t * c..(t + 1) * c].iter_mut().zip(y.row(k)) {
            *a += *v as f64;
        }
    }
    let data = acc
        .chunks(c)
        .zip(&copies)
        .flat_map(|(row, &m)| row.iter().map(move |v| (v / m as f64) as f32))
        .collect();
    Tensor::new(vec![n, c], data)
}

/// Spatial-attention settings for one block.
#[derive(Debug, Clone, Copy)]
pub struct SpatialParams {
    pub curve: CurveKind,
    pub order: u32,
    pub patch_size: usize,
    pub heads: usize,
    pub base: f64,
}

/// Spatial attention.
///
/// Tokens are serialized along the curve, the sequence is cut into
/// consecutive patches of `patch_size` (the last may be shorter), attention
/// runs inside each patch with (x, y, r) RoPE, and outputs are returned in
/// the original token order.
pub fn spatial_attention(
    tokens: &Tensor,
    coords: &[GridCoord],
    w: AttnWeights<'_>,
    p: SpatialParams,
) -> Result<Tensor> {
    if coords.len() != tokens.rows() {
        return Err(Error::Config(format!("{} grid coordinates for {} tokens", coords.len(), tokens.rows())));
    }
    if p.patch_size == 0 {
        return Err(Error::Config("patch_size must be >= 1".into()));
    }
    let order = sort_tokens(coords, p.curve, p.order)?;
    let groups: Vec<Vec<usize>> = order.perm.chunks(p.patch_size).map(<[usize]>::to_vec).collect();
    let positions: Vec<[i64; 3]> = offset_to_origin(coords)
        .into_iter()
        .map(|g| [g.x, g.y, g.r as i64])
        .collect();
    grouped_attention(tokens, w, p.heads, &groups, &positions, p.base)
}
