use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::{path_attention, spatial_attention, SpatialParams};
use super::config::{AttentionKind, CurveChoice, ModelConfig};
use super::tensor::{gelu, layer_norm, Tensor};
use super::weights::{Weights, IN_FEATURES};
use crate::curves::{grid_encode, CurveKind, GridCoord};
use crate::error::{Error, Result};
use crate::geom::DirVec;
use crate::map::{LaneId, RoadId, Scene};
use crate::paths::{PathIndex, DEFAULT_PATH_CAP};

/// Two-layer MLP over `[p1x, p1y, p2x, p2y, theta]`.
pub fn embed_vectors(vectors: &[DirVec], weights: &Weights) -> Result<Tensor> {
    if vectors.is_empty() {
        return Err(Error::Validation("nothing to embed".into()));
    }
    let fc1 = weights.linear("embed.fc1")?;
    let fc2 = weights.linear("embed.fc2")?;
    if fc1.w.shape().len() != 2 || fc1.w.rows() != IN_FEATURES || fc2.w.rows() != fc1.w.cols() {
        return Err(Error::Config(format!(
            "embedding weights {:?} x {:?} do not fit {IN_FEATURES} input features",
            fc1.w.shape(),
            fc2.w.shape()
        )));
    }
    let data = vectors.iter().flat_map(|v| v.features().map(|f| f as f32)).collect();
    let x = Tensor::new(vec![vectors.len(), IN_FEATURES], data)?;
    Ok(fc2.apply(&fc1.apply(&x).map(gelu)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Road,
    Centerline,
    Boundary,
}

/// Flattened vector tokens of a scene: road vectors (roads in id order), then
/// centerlines, then boundary vectors, with the paths used by path attention.
#[derive(Debug, Clone)]
pub struct SceneTokens {
    pub vectors: Vec<DirVec>,
    pub kinds: Vec<TokenKind>,
    /// Road of each road token (the first `road_tokens.len()` tokens).
    pub road_tokens: Vec<RoadId>,
    pub roads: Vec<RoadId>,
    pub lanes: Vec<LaneId>,
    pub paths: PathIndex<usize>,
    /// (order along the path, order inside the element) per path copy.
    pub path_pos: Vec<[i64; 2]>,
    /// The SD graph could not be enumerated into paths (cycle or too many
    /// paths); each road forms its own path instead.
    pub sd_fallback: bool,
}

impl SceneTokens {
    pub fn new(scene: &Scene) -> Result<Self> {
        let mut vectors = Vec::new();
        let mut kinds = Vec::new();
        let mut road_tokens = Vec::new();
        let mut road_start = Vec::new();
        for road in scene.sd.roads() {
            road_start.push(vectors.len());
            for v in road.vectors() {
                vectors.push(*v);
                kinds.push(TokenKind::Road);
                road_tokens.push(road.id);
            }
        }
        let roads = scene.sd.road_ids();
        let lane_start = vectors.len();
        let lanes = scene.hd.lane_ids();
        for c in scene.hd.centerlines() {
            vectors.push(c.vector);
            kinds.push(TokenKind::Centerline);
        }
        let mut paths: Vec<Vec<usize>> = Vec::new();
        let mut path_pos: Vec<[i64; 2]> = Vec::new();

        let road_tokens_of = |i: usize| road_start[i]..road_start[i] + scene.sd.roads()[i].vectors().len();
        let sd_paths = match scene.sd.enumerate_paths(DEFAULT_PATH_CAP) {
            Ok(p) => Some(p.paths),
            Err(Error::Topology(_) | Error::PathLimit { .. }) => None,
            Err(e) => return Err(e),
        };
        let sd_fallback = sd_paths.is_none();
        let sd_paths = sd_paths.unwrap_or_else(|| roads.iter().map(|&r| vec![r]).collect());
        for path in &sd_paths {
            let mut toks = Vec::new();
            for id in path {
                let i = scene.sd.road_index(*id).expect("path road exists");
                for (k, t) in road_tokens_of(i).enumerate() {
                    path_pos.push([toks.len() as i64, k as i64]);
                    toks.push(t);
                }
            }
            if !toks.is_empty() {
                paths.push(toks);
            }
        }
        for path in scene.lane_paths()?.paths {
            let toks: Vec<usize> = path
                .iter()
                .map(|id| lane_start + scene.hd.lane_index(*id).expect("path lane exists"))
                .collect();
            path_pos.extend((0..toks.len()).map(|k| [k as i64, 0]));
            paths.push(toks);
        }
        for b in scene.hd.boundaries() {
            let start = vectors.len();
            for v in b.vectors() {
                vectors.push(*v);
                kinds.push(TokenKind::Boundary);
            }
            let toks: Vec<usize> = (start..vectors.len()).collect();
            path_pos.extend((0..toks.len()).map(|k| [k as i64, k as i64]));
            paths.push(toks);
        }
        Ok(Self {
            vectors,
            kinds,
            road_tokens,
            roads,
            lanes,
            paths: PathIndex::from_paths(paths),
            path_pos,
            sd_fallback,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn lane_range(&self) -> std::ops::Range<usize> {
        let start = self.road_tokens.len();
        start..start + self.lanes.len()
    }

    pub fn grid_coords(&self, cfg: &ModelConfig) -> Vec<GridCoord> {
        self.vectors.iter().map(|v| grid_encode(v, cfg.grid_g, cfg.grid_r)).collect()
    }
}

/// Curve used by spatial attention in the `index`-th block of the model.
pub fn block_curve(cfg: &ModelConfig, index: usize) -> CurveKind {
    match cfg.curve {
        CurveChoice::Fixed(k) => k,
        CurveChoice::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.curve_seed);
            rng.set_stream(index as u64);
            CurveKind::ALL[rng.random_range(0..CurveKind::ALL.len())]
        }
    }
}

/// Final features of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct MatOutput {
    /// One row per road vector token.
    pub road_feats: Tensor,
    pub road_tokens: Vec<RoadId>,
    pub roads: Vec<RoadId>,
    /// One row per centerline, in lane id order.
    pub centerline_feats: Tensor,
    pub lanes: Vec<LaneId>,
    pub sd_fallback: bool,
}

/// Position-wise feed-forward network.
pub fn ffn(x: &Tensor, weights: &Weights, block: &str) -> Result<Tensor> {
    let fc1 = weights.linear(&format!("{block}.ffn.fc1"))?;
    let fc2 = weights.linear(&format!("{block}.ffn.fc2"))?;
    Ok(fc2.apply(&fc1.apply(x).map(gelu)))
}

/// One pre-norm block: `x + attn(norm(x))` for each attention in order, then
/// `x + ffn(norm(x))`.
pub fn block_forward(
    x: &Tensor,
    tokens: &SceneTokens,
    coords: &[GridCoord],
    cfg: &ModelConfig,
    weights: &Weights,
    stage: usize,
    block: usize,
    curve: CurveKind,
) -> Result<Tensor> {
    let name = format!("stages.{stage}.blocks.{block}");
    let heads = cfg.stages[stage].heads;
    let mut x = x.clone();
    for &kind in &cfg.attention_order {
        let prefix = super::weights::attn_prefix(kind);
        let norm = weights.norm(&format!("{name}.norm_{prefix}"))?;
        let h = layer_norm(&x, norm.gamma, norm.beta);
        let w = weights.attention(&name, kind)?;
        let y = match kind {
            AttentionKind::Spatial => spatial_attention(
                &h,
                coords,
                w,
                SpatialParams { curve, order: cfg.curve_order, patch_size: cfg.patch_size, heads, base: cfg.rope_base },
            )?,
            AttentionKind::Path => path_attention(&h, &tokens.paths, &tokens.path_pos, w, heads, cfg.rope_base)?,
        };
        x = x.add(&y);
    }
    let norm = weights.norm(&format!("{name}.norm_ffn"))?;
    let y = ffn(&layer_norm(&x, norm.gamma, norm.beta), weights, &name)?;
    Ok(x.add(&y))
}

/// Full forward pass: embedding, every stage (with a channel projection
/// before stages after the first) and every block.
pub fn mat_forward(scene: &Scene, cfg: &ModelConfig, weights: &Weights) -> Result<MatOutput> {
    cfg.validate()?;
    let tokens = SceneTokens::new(scene)?;
    let c = cfg.out_channels();
    if tokens.is_empty() {
        return Ok(MatOutput {
            road_feats: Tensor::zeros(vec![0, c]),
            road_tokens: vec![],
            roads: tokens.roads,
            centerline_feats: Tensor::zeros(vec![0, c]),
            lanes: tokens.lanes,
            sd_fallback: tokens.sd_fallback,
        });
    }
    let coords = tokens.grid_coords(cfg);
    let mut x = embed_vectors(&tokens.vectors, weights)?;
    let mut index = 0;
    for (s, stage) in cfg.stages.iter().enumerate() {
        if s > 0 {
            x = weights.linear(&format!("stages.{s}.proj"))?.apply(&x);
        }
        for b in 0..stage.blocks {
            x = block_forward(&x, &tokens, &coords, cfg, weights, s, b, block_curve(cfg, index))?;
            index += 1;
        }
    }
    let n_road = tokens.road_tokens.len();
    let road_idx: Vec<usize> = (0..n_road).collect();
    let lane_idx: Vec<usize> = tokens.lane_range().collect();
    Ok(MatOutput {
        road_feats: x.gather_rows(&road_idx),
        road_tokens: tokens.road_tokens,
        roads: tokens.roads,
        centerline_feats: x.gather_rows(&lane_idx),
        lanes: tokens.lanes,
        sd_fallback: tokens.sd_fallback,
    })
}
