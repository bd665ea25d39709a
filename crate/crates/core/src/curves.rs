//! Grid encoding of vectors into `(x, y, r)` lattice cells and space-filling
//! curve serialization of token sequences.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::DirVec;

/// Default bits per axis used when serializing tokens.
pub const DEFAULT_ORDER: u32 = 16;
/// Largest order whose three interleaved axes fit in a `u64` key.
pub const MAX_ORDER: u32 = 21;

/// Lattice cell of a vector: centroid cell `(x, y)` and heading bin `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridCoord {
    pub x: i64,
    pub y: i64,
    pub r: u32,
}

impl GridCoord {
    pub const fn new(x: i64, y: i64, r: u32) -> Self {
        Self { x, y, r }
    }
}

/// The four serialization curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CurveKind {
    #[serde(rename = "z")]
    Z,
    #[serde(rename = "z-trans")]
    ZTrans,
    #[serde(rename = "hilbert")]
    Hilbert,
    #[serde(rename = "hilbert-trans")]
    HilbertTrans,
}

impl CurveKind {
    pub const ALL: [CurveKind; 4] = [
        CurveKind::Z,
        CurveKind::ZTrans,
        CurveKind::Hilbert,
        CurveKind::HilbertTrans,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CurveKind::Z => "z",
            CurveKind::ZTrans => "z-trans",
            CurveKind::Hilbert => "hilbert",
            CurveKind::HilbertTrans => "hilbert-trans",
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CurveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown curve kind {s:?}")))
    }
}

/// Encodes a vector into its lattice cell with grid size `g` (meters) and `bins`
/// heading bins over a full turn.
pub fn grid_encode(v: &DirVec, g: f64, bins: u32) -> GridCoord {
    let x = ((v.p1.x + v.p2.x) / (2.0 * g)).floor() as i64;
    let y = ((v.p1.y + v.p2.y) / (2.0 * g)).floor() as i64;
    GridCoord {
        x,
        y,
        r: heading_bin(v.theta, bins),
    }
}

/// Quantizes a heading into one of `bins` equal sectors of `[0, 2pi)`.
pub fn heading_bin(theta: f64, bins: u32) -> u32 {
    let norm = theta.rem_euclid(2.0 * PI);
    let bin = (norm / (2.0 * PI / bins as f64)).floor() as u32;
    bin.min(bins.saturating_sub(1))
}

fn check_axis(name: &str, v: i64, order: u32) -> Result<u32> {
    if v < 0 || v >= (1i64 << order) {
        return Err(Error::Range(format!(
            "{name} = {v} does not fit in {order} bits"
        )));
    }
    Ok(v as u32)
}

/// Spreads the low `order` bits of `v` to every third bit position.
fn spread3(v: u32, order: u32) -> u64 {
    (0..order).fold(0u64, |acc, b| acc | ((((v >> b) & 1) as u64) << (3 * b)))
}

fn z_key(axes: [u32; 3], order: u32) -> u64 {
    spread3(axes[0], order) | (spread3(axes[1], order) << 1) | (spread3(axes[2], order) << 2)
}

/// Skilling's transform from axes to the transposed Hilbert index.
fn axes_to_transpose(x: &mut [u32; 3], order: u32) {
    let n = x.len();
    let m = 1u32 << (order - 1);
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..n {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    for i in 1..n {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    let mut q = m;
    while q > 1 {
        if x[n - 1] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for v in x.iter_mut() {
        *v ^= t;
    }
}

fn hilbert_key(mut axes: [u32; 3], order: u32) -> u64 {
    axes_to_transpose(&mut axes, order);
    let mut key = 0u64;
    for b in (0..order).rev() {
        for a in axes {
            key = (key << 1) | ((a >> b) & 1) as u64;
        }
    }
    key
}

/// Position of a non-negative lattice cell along the chosen curve.
///
/// `z` interleaves bits with `x` least significant; `z-trans` uses the axis
/// order `(r, y, x)`. `hilbert` feeds `(x, y, r)` to the 3D Hilbert transform
/// and `hilbert-trans` feeds `(r, y, x)`.
pub fn curve_index(c: GridCoord, kind: CurveKind, order: u32) -> Result<u64> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::Range(format!(
            "curve order must be within 1..={MAX_ORDER}, got {order}"
        )));
    }
    let x = check_axis("x", c.x, order)?;
    let y = check_axis("y", c.y, order)?;
    let r = check_axis("r", c.r as i64, order)?;
    Ok(match kind {
        CurveKind::Z => z_key([x, y, r], order),
        CurveKind::ZTrans => z_key([r, y, x], order),
        CurveKind::Hilbert => hilbert_key([x, y, r], order),
        CurveKind::HilbertTrans => hilbert_key([r, y, x], order),
    })
}

/// A permutation of token indices and its inverse.
///
/// `perm[k]` is the original index of the `k`-th serialized token and
/// `inv[i]` is the serialized position of original token `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializationOrder {
    pub perm: Vec<usize>,
    pub inv: Vec<usize>,
}

impl SerializationOrder {
    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
            inv: (0..n).collect(),
        }
    }

    pub fn from_perm(perm: Vec<usize>) -> Self {
        let mut inv = vec![0; perm.len()];
        for (k, &i) in perm.iter().enumerate() {
            inv[i] = k;
        }
        Self { perm, inv }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Reorders `items` into serialized order.
    pub fn apply<T: Clone>(&self, items: &[T]) -> Vec<T> {
        self.perm.iter().map(|&i| items[i].clone()).collect()
    }

    /// Restores original order from a serialized sequence.
    pub fn restore<T: Clone>(&self, serialized: &[T]) -> Vec<T> {
        self.inv.iter().map(|&k| serialized[k].clone()).collect()
    }
}

/// Shifts `x` and `y` so the minimum of the set is zero.
pub fn offset_to_origin(coords: &[GridCoord]) -> Vec<GridCoord> {
    let min_x = coords.iter().map(|c| c.x).min().unwrap_or(0);
    let min_y = coords.iter().map(|c| c.y).min().unwrap_or(0);
    coords
        .iter()
        .map(|c| GridCoord::new(c.x - min_x, c.y - min_y, c.r))
        .collect()
}

/// Sorts tokens along a curve, breaking ties by original index.
pub fn sort_tokens(coords: &[GridCoord], kind: CurveKind, order: u32) -> Result<SerializationOrder> {
    let shifted = offset_to_origin(coords);
    let keys = shifted
        .iter()
        .map(|&c| curve_index(c, kind, order))
        .collect::<Result<Vec<_>>>()?;
    let mut perm: Vec<usize> = (0..coords.len()).collect();
    perm.sort_by_key(|&i| (keys[i], i));
    Ok(SerializationOrder::from_perm(perm))
}
