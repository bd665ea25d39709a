use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Rotary position embedding over `A` position axes.
///
/// The `d` channels of `x` are split into `A` equal blocks; inside block `a`,
/// channel pair `(2i, 2i+1)` is rotated by `pos[a] * base^(-2i/d_a)` with
/// `d_a = d / A`.
pub fn rope_rotate<const A: usize>(x: &Tensor, positions: &[[i64; A]], base: f64) -> Result<Tensor> {
    let d = x.cols();
    if A == 0 || d % (2 * A) != 0 {
        return Err(Error::Config(format!("RoPE needs a dimension divisible by {}, got {d}", 2 * A)));
    }
    if positions.len() != x.rows() {
        return Err(Error::Config(format!("{} positions for {} rows", positions.len(), x.rows())));
    }
    let da = d / A;
    let freqs: Vec<f64> = (0..da / 2).map(|i| base.powf(-2.0 * i as f64 / da as f64)).collect();
    let mut out = x.clone();
    for (r, pos) in positions.iter().enumerate() {
        let row = out.row_mut(r);
        for (a, &p) in pos.iter().enumerate() {
            for (i, f) in freqs.iter().enumerate() {
                let c = a * da + 2 * i;
                let (s, co) = (p as f64 * f).sin_cos();
                let (u, v) = (row[c] as f64, row[c + 1] as f64);
                row[c] = (u * co - v * s) as f32;
                row[c + 1] = (u * s + v * co) as f32;
            }
        }
    }
    Ok(out)
}
