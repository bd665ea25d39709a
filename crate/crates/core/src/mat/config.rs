use std::fmt;

use serde::{Deserialize, Serialize};

use crate::curves::{CurveKind, DEFAULT_ORDER, MAX_ORDER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub blocks: usize,
    pub channels: usize,
    pub heads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    Spatial,
    Path,
}

impl AttentionKind {
    /// Number of RoPE position axes.
    pub fn rope_axes(self) -> usize {
        match self {
            AttentionKind::Spatial => 3,
            AttentionKind::Path => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Avg,
    Max,
}

/// Space-filling curve used by spatial attention: one fixed curve, or a
/// curve drawn per block from `curve_seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CurveChoice {
    Fixed(CurveKind),
    Random,
}

impl TryFrom<String> for CurveChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        if s == "random" {
            Ok(CurveChoice::Random)
        } else {
            Ok(CurveChoice::Fixed(s.parse()?))
        }
    }
}

impl From<CurveChoice> for String {
    fn from(c: CurveChoice) -> String {
        c.to_string()
    }
}

impl fmt::Display for CurveChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveChoice::Fixed(k) => f.write_str(k.name()),
            CurveChoice::Random => f.write_str("random"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub stages: Vec<StageConfig>,
    pub patch_size: usize,
    pub curve: CurveChoice,
    pub curve_seed: u64,
    pub curve_order: u32,
    pub attention_order: Vec<AttentionKind>,
    pub rope_base: f64,
    pub pooling: Pooling,
    pub grid_g: f64,
    #[serde(rename = "grid_R")]
    pub grid_r: u32,
    pub mlp_ratio: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Model sizes of the published family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Tiny,
    Small,
    Medium,
    Large,
}

impl ModelConfig {
    /// Small configuration for CPU runs: two stages of one block.
    pub fn desk() -> Self {
        Self {
            stages: vec![
                StageConfig { blocks: 1, channels: 48, heads: 4 },
                StageConfig { blocks: 1, channels: 96, heads: 4 },
            ],
            patch_size: 8,
            curve: CurveChoice::Fixed(CurveKind::Z),
            curve_seed: 0,
            curve_order: DEFAULT_ORDER,
            attention_order: vec![AttentionKind::Spatial, AttentionKind::Path],
            rope_base: 10_000.0,
            pooling: Pooling::Avg,
            grid_g: 0.1,
            grid_r: 16,
            mlp_ratio: 4,
            alpha: 1.0,
            beta: 0.01,
        }
    }

    /// Full-size five-stage configuration.
    pub fn paper(variant: Variant) -> Self {
        let blocks = match variant {
            Variant::Tiny => [2, 2, 2, 2, 2],
            Variant::Small => [4, 4, 4, 4, 4],
            Variant::Medium => [4, 4, 4, 8, 4],
            Variant::Large => [4, 4, 4, 12, 4],
        };
        let channels = [96, 192, 384, 768, 1536];
        let heads = [4, 4, 8, 8, 8];
        Self {
            stages: (0..5)
                .map(|i| StageConfig { blocks: blocks[i], channels: channels[i], heads: heads[i] })
                .collect(),
            patch_size: 1024,
            ..Self::desk()
        }
    }

    pub fn out_channels(&self) -> usize {
        self.stages.last().map_or(0, |s| s.channels)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.stages.is_empty() {
            problems.push("at least one stage is required".to_string());
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.channels == 0 || s.heads == 0 || s.channels % s.heads != 0 {
                problems.push(format!("stage {i}: channels {} not divisible by heads {}", s.channels, s.heads));
                continue;
            }
            let hd = s.channels / s.heads;
            for kind in &self.attention_order {
                let need = 2 * kind.rope_axes();
                if hd % need != 0 {
                    problems.push(format!(
                        "stage {i}: head dimension {hd} not divisible by {need} ({kind:?} attention RoPE)"
                    ));
                }
            }
        }
        let mut kinds = self.attention_order.clone();
        kinds.sort_by_key(|k| *k as u8);
        kinds.dedup();
        if kinds.len() != self.attention_order.len() {
            problems.push("attention_order lists an attention kind twice".into());
        }
        if self.patch_size == 0 {
            problems.push("patch_size must be >= 1".into());
        }
        if !(self.grid_g > 0.0 && self.grid_g.is_finite()) {
            problems.push("grid_g must be positive".into());
        }
        if self.grid_r == 0 {
            problems.push("grid_R must be >= 1".into());
        }
        if self.curve_order == 0 || self.curve_order > MAX_ORDER {
            problems.push(format!("curve_order must be in 1..={MAX_ORDER}"));
        }
        if !(self.rope_base > 1.0 && self.rope_base.is_finite()) {
            problems.push("rope_base must be > 1".into());
        }
        if self.mlp_ratio == 0 {
            problems.push("mlp_ratio must be >= 1".into());
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            problems.push("alpha and beta must be finite and >= 0".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
