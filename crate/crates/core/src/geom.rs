//! Planar geometry primitives: points, directed vectors and polyline sampling.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Segments shorter than this are treated as zero length.
pub const MIN_SEGMENT: f64 = 1e-6;

/// A point in the ego-centric metric frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: Point2, t: f64) -> Point2 {
        Point2::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    pub fn midpoint(&self, other: Point2) -> Point2 {
        Point2::new((self.x + other.x) * 0.5, (self.y + other.y) * 0.5)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Point2 {
        Point2::new(self.x + dx, self.y + dy)
    }
}

/// Full-range direction angle of `(dx, dy)`, normalized to `[-pi, pi)`.
pub fn heading(dx: f64, dy: f64) -> f64 {
    let a = dy.atan2(dx);
    if a >= PI {
        a - 2.0 * PI
    } else {
        a
    }
}

/// A directed vector `p1 -> p2` with its heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirVec {
    pub p1: Point2,
    pub p2: Point2,
    pub theta: f64,
}

impl DirVec {
    pub fn new(p1: Point2, p2: Point2) -> Result<Self> {
        if !p1.is_finite() || !p2.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "non-finite vector endpoint ({:?} -> {:?})",
                p1, p2
            )));
        }
        if p1 == p2 {
            return Err(Error::InvalidGeometry(format!(
                "zero-length vector at ({}, {})",
                p1.x, p1.y
            )));
        }
        Ok(Self {
            p1,
            p2,
            theta: heading(p2.x - p1.x, p2.y - p1.y),
        })
    }

    pub fn length(&self) -> f64 {
        self.p1.dist(self.p2)
    }

    pub fn midpoint(&self) -> Point2 {
        self.p1.midpoint(self.p2)
    }

    /// The `[p1x, p1y, p2x, p2y, theta]` feature tuple.
    pub fn features(&self) -> [f64; 5] {
        [self.p1.x, self.p1.y, self.p2.x, self.p2.y, self.theta]
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    /// Rectangle centred on the origin with the given half widths.
    pub fn centered(half_x: f64, half_y: f64) -> Self {
        Self {
            min: Point2::new(-half_x, -half_y),
            max: Point2::new(half_x, half_y),
        }
    }

    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        p.x >= self.min.x - tol
            && p.x <= self.max.x + tol
            && p.y >= self.min.y - tol
            && p.y <= self.max.y + tol
    }

    pub fn corners(&self) -> [Point2; 4] {
        [
            self.min,
            Point2::new(self.max.x, self.min.y),
            self.max,
            Point2::new(self.min.x, self.max.y),
        ]
    }

    pub fn contains_rect(&self, other: &Rect, tol: f64) -> bool {
        self.contains(other.min, tol) && self.contains(other.max, tol)
    }

    /// Smallest rectangle containing all `points`, or `None` for an empty set.
    pub fn bounding(points: impl IntoIterator<Item = Point2>) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut r = Rect {
            min: first,
            max: first,
        };
        for p in it {
            r.min.x = r.min.x.min(p.x);
            r.min.y = r.min.y.min(p.y);
            r.max.x = r.max.x.max(p.x);
            r.max.y = r.max.y.max(p.y);
        }
        Some(r)
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            min: Point2::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            max: Point2::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        }
    }

    /// Clips the segment `a -> b` to the rectangle (Liang-Barsky).
    /// Returns the parameter interval `[t0, t1]` along the segment, if any.
    pub fn clip_segment(&self, a: Point2, b: Point2) -> Option<(f64, f64)> {
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for (p, q) in [
            (-dx, a.x - self.min.x),
            (dx, self.max.x - a.x),
            (-dy, a.y - self.min.y),
            (dy, self.max.y - a.y),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        (t0 < t1).then_some((t0, t1))
    }
}

/// Euclidean distance from `p` to the closed segment `a -> b`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point2::new(a.x + t * dx, a.y + t * dy))
}

/// Minimum distance from `p` to a polyline.
pub fn point_polyline_distance(p: Point2, points: &[Point2]) -> f64 {
    match points {
        [] => f64::INFINITY,
        [only] => p.dist(*only),
        _ => points
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

pub fn polyline_length(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Samples a polyline at uniform arc-length intervals of `spacing` and chains
/// the samples into directed vectors.
///
/// Interior vertices of the polyline are kept as additional sample points so
/// the vectors trace the polyline exactly. The final vector may be shorter than
/// `spacing`; a remainder below [`MIN_SEGMENT`] is absorbed into the previous
/// vector.
pub fn vectorize_polyline(points: &[Point2], spacing: f64) -> Result<Vec<DirVec>> {
    let samples = sample_polyline(points, spacing)?;
    samples
        .windows(2)
        .map(|w| DirVec::new(w[0], w[1]))
        .collect()
}

/// The sample points used by [`vectorize_polyline`].
pub fn sample_polyline(points: &[Point2], spacing: f64) -> Result<Vec<Point2>> {
    if points.len() < 2 {
        return Err(Error::InvalidGeometry(format!(
            "polyline needs at least 2 points, got {}",
            points.len()
        )));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "spacing must be positive, got {spacing}"
        )));
    }
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::InvalidGeometry(format!("non-finite point {:?}", p)));
    }

    // Cumulative arc length at each vertex.
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for w in points.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + w[0].dist(w[1]));
    }
    let total = *cum.last().unwrap();
    if total < MIN_SEGMENT {
        return Err(Error::InvalidGeometry(
            "degenerate polyline of zero length".into(),
        ));
    }

    // Arc positions: multiples of spacing, every interior vertex, and the end.
    let mut stations: Vec<f64> = Vec::new();
    let mut k = 0u64;
    loop {
        let s = k as f64 * spacing;
        if s >= total {
            break;
        }
        stations.push(s);
        k += 1;
    }
    stations.extend(cum[1..cum.len() - 1].iter().copied());
    stations.push(total);
    stations.sort_by(f64::total_cmp);

    let mut kept: Vec<f64> = Vec::with_capacity(stations.len());
    for s in stations {
        let n = kept.len();
        match kept.last_mut() {
            Some(prev) if s - *prev < MIN_SEGMENT => {
                // Keep the later station so vertices and the end point win,
                // but never move the start.
                if n > 1 {
                    *prev = s;
                }
            }
            _ => kept.push(s),
        }
    }

    let mut out = Vec::with_capacity(kept.len());
    let mut seg = 0usize;
    for s in kept {
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let (a, b) = (points[seg], points[seg + 1]);
        let len = cum[seg + 1] - cum[seg];
        let p = if s == cum[seg + 1] {
            b
        } else if s == cum[seg] {
            a
        } else if len > 0.0 {
            a.lerp(b, (s - cum[seg]) / len)
        } else {
            a
        };
        // Skip repeated vertices of the input polyline.
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    if out.len() < 2 {
        return Err(Error::InvalidGeometry(
            "degenerate polyline of zero length".into(),
        ));
    }
    Ok(out)
}
