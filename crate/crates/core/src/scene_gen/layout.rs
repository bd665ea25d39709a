//! Road network skeletons: directed links between abstract junction nodes.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{GenConfig, RoadLayout, CLEARANCE};
use crate::error::{Error, Result};
use crate::geom::Point2;

/// One directed road between two junction nodes with its straight geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(super) struct Link {
    pub from: usize,
    pub to: usize,
    pub start: Point2,
    pub end: Point2,
}

/// Streets near the origin are offset by at most this much.
const ORIGIN_JITTER: f64 = 5.0;

pub(super) fn build(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Link>> {
    let ox = rng.random_range(-ORIGIN_JITTER..=ORIGIN_JITTER);
    let oy = rng.random_range(-ORIGIN_JITTER..=ORIGIN_JITTER);
    match cfg.road_layout {
        RoadLayout::Grid { cols, rows } => Ok(grid(cfg, cols as usize, rows as usize, ox, oy)),
        RoadLayout::RandomPlanar { cols, rows } => {
            Ok(random_planar(cfg, cols as usize, rows as usize, ox, oy, rng))
        }
        RoadLayout::Radial { arms } => radial(cfg, arms as usize, rng),
    }
}

fn lattice_spacing(cfg: &GenConfig, cols: usize, rows: usize) -> f64 {
    1.6 * cfg.sd_extent[0].min(cfg.sd_extent[1]) / cols.max(rows).max(2) as f64
}

/// Coordinates of `n` lattice lines, with line `(n - 1) / 2` at `origin`.
fn lattice(n: usize, spacing: f64, origin: f64) -> Vec<f64> {
    let mid = (n - 1) / 2;
    (0..n)
        .map(|k| origin + (k as f64 - mid as f64) * spacing)
        .collect()
}

/// One-way streets spanning the SD crop; each street is cut into one road per
/// block. Vertical streets run +y, horizontal streets +x.
fn grid(cfg: &GenConfig, cols: usize, rows: usize, ox: f64, oy: f64) -> Vec<Link> {
    let s = lattice_spacing(cfg, cols, rows);
    let xs = lattice(cols, s, ox);
    let ys = lattice(rows, s, oy);
    let [hx, hy] = cfg.sd_extent;
    let junction = |k: usize, m: usize| k * rows + m;
    let mut next_free = cols * rows;
    let mut links = Vec::new();

    let mut street = |stops: Vec<(f64, usize)>, at: &dyn Fn(f64) -> Point2| {
        for w in stops.windows(2) {
            links.push(Link {
                from: w[0].1,
                to: w[1].1,
                start: at(w[0].0),
                end: at(w[1].0),
            });
        }
    };

    for (k, &x) in xs.iter().enumerate() {
        let mut stops = vec![(-hy, next_free)];
        stops.extend(ys.iter().enumerate().map(|(m, &y)| (y, junction(k, m))));
        stops.push((hy, next_free + 1));
        next_free += 2;
        street(stops, &|y| Point2::new(x, y));
    }
    for (m, &y) in ys.iter().enumerate() {
        let mut stops = vec![(-hx, next_free)];
        stops.extend(xs.iter().enumerate().map(|(k, &x)| (x, junction(k, m))));
        stops.push((hx, next_free + 1));
        next_free += 2;
        street(stops, &|x| Point2::new(x, y));
    }
    links
}

/// Jittered lattice; links run +x or +y and are dropped with probability 0.2,
/// except links touching the junction closest to the origin.
fn random_planar(
    cfg: &GenConfig,
    cols: usize,
    rows: usize,
    ox: f64,
    oy: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Link> {
    let s = lattice_spacing(cfg, cols, rows);
    let xs = lattice(cols, s, ox);
    let ys = lattice(rows, s, oy);
    let (k0, m0) = ((cols - 1) / 2, (rows - 1) / 2);
    let amp = 0.15 * s;
    let mut nodes = Vec::with_capacity(cols * rows);
    for &x in &xs {
        for &y in &ys {
            let jx = rng.random_range(-amp..=amp);
            let jy = rng.random_range(-amp..=amp);
            nodes.push(Point2::new(x + jx, y + jy));
        }
    }
    let id = |k: usize, m: usize| k * rows + m;
    nodes[id(k0, m0)] = Point2::new(ox, oy);

    let mut links = Vec::new();
    for k in 0..cols {
        for m in 0..rows {
            for (k2, m2) in [(k + 1, m), (k, m + 1)] {
                if k2 >= cols || m2 >= rows {
                    continue;
                }
                let keep_roll = rng.random::<f64>() < 0.8;
                let central = (k, m) == (k0, m0) || (k2, m2) == (k0, m0);
                if keep_roll || central {
                    let (a, b) = (id(k, m), id(k2, m2));
                    links.push(Link {
                        from: a,
                        to: b,
                        start: nodes[a],
                        end: nodes[b],
                    });
                }
            }
        }
    }
    links
}

/// Arms leave a central junction at evenly spaced random angles. Each arm has
/// an inbound and an outbound road, laterally separated so their lanes do not
/// overlap.
fn radial(cfg: &GenConfig, arms: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Link>> {
    let d = cfg.max_lane_offset() + CLEARANCE / 2.0;
    let step = 2.0 * PI / arms as f64;
    let phase = rng.random_range(0.0..step);
    let inner = if arms >= 3 {
        (d / (step / 2.0).tan() + 4.0).max(10.0)
    } else {
        10.0
    };
    let outer = 0.9 * cfg.sd_extent[0].min(cfg.sd_extent[1]);
    if inner + cfg.vector_spacing_sd > outer {
        return Err(Error::Generation(format!(
            "{arms} arms need a junction radius of {inner:.1} m, larger than the SD crop allows"
        )));
    }
    let center = 0;
    let mut links = Vec::with_capacity(2 * arms);
    for i in 0..arms {
        let a = phase + step * i as f64;
        let u = Point2::new(a.cos(), a.sin());
        let n = Point2::new(-u.y, u.x);
        let at = |r: f64, side: f64| Point2::new(u.x * r + n.x * side, u.y * r + n.y * side);
        let far = i + 1;
        links.push(Link {
            from: far,
            to: center,
            start: at(outer, d),
            end: at(inner, d),
        });
        links.push(Link {
            from: center,
            to: far,
            start: at(inner, -d),
            end: at(outer, -d),
        });
    }
    Ok(links)
}
