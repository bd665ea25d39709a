//! Forward pass of the map association transformer.
//!
//! SD road vectors, HD centerlines and lane boundaries are embedded as vector
//! tokens and refined by stacked blocks of spatial attention (patches of a
//! space-filling-curve serialization) and path-aware attention (tokens
//! grouped by lane or road path). Centerline features are scored against
//! pooled road features to give a centerline-to-road probability matrix.

mod attention;
mod config;
mod forward;
mod head;
mod loss;
mod rope;
mod tensor;
mod weights;

pub use attention::{grouped_attention, path_attention, spatial_attention, SpatialParams};
pub use config::{AttentionKind, CurveChoice, ModelConfig, Pooling, StageConfig, Variant};
pub use forward::{block_curve, block_forward, embed_vectors, ffn, mat_forward, MatOutput, SceneTokens, TokenKind};
pub use head::{association_probs, pool_roads, similarity_logits};
pub use loss::{compute_loss, cross_entropy, ctc_nll, scene_loss, LossValues, BLANK_LOGIT};
pub use rope::rope_rotate;
pub use tensor::{gelu, layer_norm, Tensor, LN_EPS};
pub use weights::{check_shapes, expected_shapes, AttnWeights, Linear, Norm, Weights, IN_FEATURES};

use crate::assoc::AssocMatrix;
use crate::error::Result;
use crate::map::Scene;

/// Forward pass followed by the association head.
pub fn mat_associate(scene: &Scene, cfg: &ModelConfig, weights: &Weights) -> Result<AssocMatrix> {
    let out = mat_forward(scene, cfg, weights)?;
    association_probs(&out.centerline_feats, &out.lanes, &out.road_feats, &out.road_tokens, &out.roads, cfg.pooling)
}
