use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{AttentionKind, ModelConfig};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Number of input features per vector token.
pub const IN_FEATURES: usize = 5;

/// Named parameter tensors. Linear weights are stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    tensors: BTreeMap<String, Tensor>,
}

/// A linear layer `x W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear<'a> {
    pub w: &'a Tensor,
    pub b: &'a Tensor,
}

impl Linear<'_> {
    pub fn apply(&self, x: &Tensor) -> Tensor {
        x.linear(self.w, self.b)
    }
}

/// Layer-norm affine parameters.
#[derive(Debug, Clone, Copy)]
pub struct Norm<'a> {
    pub gamma: &'a Tensor,
    pub beta: &'a Tensor,
}

/// Fused query/key/value projection and output projection.
#[derive(Debug, Clone, Copy)]
pub struct AttnWeights<'a> {
    pub qkv: Linear<'a>,
    pub proj: Linear<'a>,
}

pub(crate) fn attn_prefix(kind: AttentionKind) -> &'static str {
    match kind {
        AttentionKind::Spatial => "sa",
        AttentionKind::Path => "pa",
    }
}

/// How a tensor is initialized by [`Weights::random`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    /// N(0, 1) / sqrt(fan_in).
    Scaled,
    Zeros,
    Ones,
}

fn push_linear(out: &mut Vec<(String, Vec<usize>, Init)>, name: &str, fan_in: usize, fan_out: usize) {
    out.push((format!("{name}.weight"), vec![fan_in, fan_out], Init::Scaled));
    out.push((format!("{name}.bias"), vec![fan_out], Init::Zeros));
}

fn push_norm(out: &mut Vec<(String, Vec<usize>, Init)>, name: &str, c: usize) {
    out.push((format!("{name}.weight"), vec![c], Init::Ones));
    out.push((format!("{name}.bias"), vec![c], Init::Zeros));
}

fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let c0 = cfg.stages.first().map_or(0, |s| s.channels);
    push_linear(&mut out, "embed.fc1", IN_FEATURES, c0);
    push_linear(&mut out, "embed.fc2", c0, c0);
    let mut prev = c0;
    for (s, stage) in cfg.stages.iter().enumerate() {
        let c = stage.channels;
        if s > 0 {
            push_linear(&mut out, &format!("stages.{s}.proj"), prev, c);
        }
        for b in 0..stage.blocks {
            let p = format!("stages.{s}.blocks.{b}");
            for &kind in &cfg.attention_order {
                let a = attn_prefix(kind);
                push_norm(&mut out, &format!("{p}.norm_{a}"), c);
                push_linear(&mut out, &format!("{p}.{a}.qkv"), c, 3 * c);
                push_linear(&mut out, &format!("{p}.{a}.proj"), c, c);
            }
            push_norm(&mut out, &format!("{p}.norm_ffn"), c);
            push_linear(&mut out, &format!("{p}.ffn.fc1"), c, cfg.mlp_ratio * c);
            push_linear(&mut out, &format!("{p}.ffn.fc2"), cfg.mlp_ratio * c, c);
        }
        prev = c;
    }
    out
}

/// Tensor names and shapes required by `cfg`, in canonical order.
pub fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    layout(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Compares a name-to-shape table with the layout of `cfg`; the error lists
/// every missing, misshapen and unexpected tensor.
pub fn check_shapes(shapes: &BTreeMap<String, Vec<usize>>, cfg: &ModelConfig) -> Result<()> {
    cfg.validate()?;
    let expected = expected_shapes(cfg);
    let mut problems = Vec::new();
    for (name, shape) in &expected {
        match shapes.get(name) {
            None => problems.push(format!("missing {name} {shape:?}")),
            Some(got) if got != shape => problems.push(format!("{name}: shape {got:?}, expected {shape:?}")),
            _ => {}
        }
    }
    for name in shapes.keys() {
        if !expected.iter().any(|(n, _)| n == name) {
            problems.push(format!("unexpected tensor {name}"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("weights do not match the model config: {}", problems.join("; "))))
    }
}

impl Weights {
    /// Checks names and shapes against `cfg`, reporting every mismatch at once.
    pub fn from_tensors(tensors: BTreeMap<String, Tensor>, cfg: &ModelConfig) -> Result<Self> {
        let shapes = tensors.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect();
        check_shapes(&shapes, cfg)?;
        Ok(Self { tensors })
    }

    /// Seeded initialization: linear weights N(0, 1)/sqrt(fan_in), zero
    /// biases, unit norm scales.
    pub fn random(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, 1.0).expect("unit normal");
        let tensors = layout(cfg)
            .into_iter()
            .map(|(name, shape, init)| {
                let t = match init {
                    Init::Zeros => Tensor::zeros(shape),
                    Init::Ones => Tensor::filled(shape, 1.0),
                    Init::Scaled => {
                        let scale = 1.0 / (shape[0] as f64).sqrt();
                        let n = shape.iter().product();
                        let data = (0..n).map(|_| (normal.sample(&mut rng) * scale) as f32).collect();
                        Tensor::new(shape, data).expect("sized")
                    }
                };
                (name, t)
            })
            .collect();
        Ok(Self { tensors })
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing weight tensor {name}")))
    }

    /// Mutable access for hand-set weights in tests and tools.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn linear(&self, name: &str) -> Result<Linear<'_>> {
        Ok(Linear { w: self.get(&format!("{name}.weight"))?, b: self.get(&format!("{name}.bias"))? })
    }

    pub fn norm(&self, name: &str) -> Result<Norm<'_>> {
        Ok(Norm { gamma: self.get(&format!("{name}.weight"))?, beta: self.get(&format!("{name}.bias"))? })
    }

    pub fn attention(&self, block: &str, kind: AttentionKind) -> Result<AttnWeights<'_>> {
        let a = attn_prefix(kind);
        Ok(AttnWeights { qkv: self.linear(&format!("{block}.{a}.qkv"))?, proj: self.linear(&format!("{block}.{a}.proj"))? })
    }
}
