//! Structured, exactly D4-symmetric cell mesher.
//!
//! The inclusion is an O-grid: a square core grid surrounded by rings that
//! blend the core's boundary into the polygonal Γ. Outside the inclusion the
//! rings are geometrically graded from Γ to the cell boundary. All rings carry
//! 8q vertices, q per octant, and are generated in one quadrant and rotated by
//! exact quarter turns so symmetric vertices are bitwise mirrors.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use super::{CellGeometry, EdgeTag, Mesh, MeshKind, Region, TaggedEdge, CENTER};
use crate::error::{Error, Result};

/// Half-size of the core square relative to the inclusion semi-axes.
const CORE: f64 = 0.5;

pub fn build_cell_mesh(geom: &CellGeometry, h: f64) -> Result<Mesh> {
    geom.validate()?;
    if !(h > 0.0 && h < geom.min_semi_axis()) {
        return Err(Error::InvalidArgument(format!(
            "mesh size h = {h} must satisfy 0 < h < {}",
            geom.min_semi_axis()
        )));
    }
    let q = ((0.5 / h - 1e-9).ceil() as usize).max(2);
    build_cell_mesh_q(geom, q)
}

/// Cell mesh with 8q Γ segments and 2q segments per cell side (h = 1/(2q)).
pub fn build_cell_mesh_q(geom: &CellGeometry, q: usize) -> Result<Mesh> {
    geom.validate()?;
    if q < 2 {
        return Err(Error::InvalidArgument("need at least 2 segments per octant".into()));
    }
    let base = outer_layer_count(geom, q);
    let mut last_err = None;
    for l_out in [base, base + 1, base.saturating_sub(1).max(2), base + 2] {
        let mesh = assemble(geom, q, l_out);
        match mesh.validate() {
            Ok(()) => return Ok(mesh),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

fn square_oct(j: usize, q: usize) -> [f64; 2] {
    [1.0, j as f64 / q as f64]
}

fn circle_oct(j: usize, q: usize) -> [f64; 2] {
    if j == 0 {
        [1.0, 0.0]
    } else if j == q {
        [FRAC_1_SQRT_2, FRAC_1_SQRT_2]
    } else {
        let t = FRAC_PI_4 * j as f64 / q as f64;
        [t.cos(), t.sin()]
    }
}

/// Point k of a ring with 8q points, built from the first-octant generator.
fn ring_point(k: usize, q: usize, oct: fn(usize, usize) -> [f64; 2]) -> [f64; 2] {
    let k = k % (8 * q);
    let (quad, j) = (k / (2 * q), k % (2 * q));
    let mut p = if j <= q {
        oct(j, q)
    } else {
        let s = oct(2 * q - j, q);
        [s[1], s[0]]
    };
    for _ in 0..quad {
        p = [-p[1], p[0]];
    }
    p
}

fn norm(p: [f64; 2]) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

fn gamma_offset(geom: &CellGeometry, k: usize, q: usize) -> [f64; 2] {
    let [ax, ay] = geom.inclusion.semi_axes();
    let c = ring_point(k, q, circle_oct);
    [ax * c[0], ay * c[1]]
}

fn mean_gamma_spacing(geom: &CellGeometry, q: usize) -> f64 {
    let m = 8 * q;
    (0..m)
        .map(|k| {
            let (a, b) = (gamma_offset(geom, k, q), gamma_offset(geom, k + 1, q));
            norm([b[0] - a[0], b[1] - a[1]])
        })
        .sum::<f64>()
        / m as f64
}

fn outer_layer_count(geom: &CellGeometry, q: usize) -> usize {
    let m = 8 * q;
    let t0 = mean_gamma_spacing(geom, q);
    let t1 = 0.5 / q as f64;
    let d_mean = (0..m)
        .map(|k| {
            let (g, s) = (gamma_offset(geom, k, q), ring_point(k, q, square_oct));
            norm([0.5 * s[0] - g[0], 0.5 * s[1] - g[1]])
        })
        .sum::<f64>()
        / m as f64;
    ((d_mean / (t0 * t1).sqrt()).round() as usize).max(2)
}

/// Cumulative fractions of `layers` geometric layers whose first thickness is
/// `t0` and total thickness is `d`.
fn graded_fractions(t0: f64, d: f64, layers: usize) -> Vec<f64> {
    let total = |r: f64| (0..layers).map(|i| r.powi(i as i32)).sum::<f64>();
    // never shrink outward: thin gaps get uniform layers
    let target = (d / t0).max(layers as f64);
    let (mut lo, mut hi) = (1.0f64, 1e3f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if total(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = (lo * hi).sqrt();
    let sum = total(r);
    let mut acc = 0.0;
    let mut out = vec![0.0];
    for i in 0..layers {
        acc += r.powi(i as i32);
        out.push(acc / sum);
    }
    out
}

fn assemble(geom: &CellGeometry, q: usize, l_out: usize) -> Mesh {
    let [ax, ay] = geom.inclusion.semi_axes();
    let m = 8 * q;
    let n_grid = 2 * q + 1;
    let l_in = ((q as f64 * (1.0 - CORE) * 2.0 / (CORE + FRAC_PI_4)).round() as usize).max(1);

    let mut offsets: Vec<[f64; 2]> = Vec::new();
    // core grid
    for j in 0..n_grid {
        for i in 0..n_grid {
            let u = CORE * (i as f64 - q as f64) / q as f64;
            let v = CORE * (j as f64 - q as f64) / q as f64;
            offsets.push([ax * u, ay * v]);
        }
    }
    let grid = |i: usize, j: usize| j * n_grid + i;
    let core_ring: Vec<usize> = (0..m)
        .map(|k| {
            let s = ring_point(k, q, square_oct);
            let i = (q as f64 + s[0] * q as f64).round() as usize;
            let j = (q as f64 + s[1] * q as f64).round() as usize;
            grid(i, j)
        })
        .collect();
    // blended rings inside the inclusion; the last one is Γ
    let in_base = offsets.len();
    for l in 1..=l_in {
        let t = l as f64 / l_in as f64;
        for k in 0..m {
            let s = ring_point(k, q, square_oct);
            let c = ring_point(k, q, circle_oct);
            let (u, v) = if l == l_in {
                (c[0], c[1])
            } else {
                ((1.0 - t) * CORE * s[0] + t * c[0], (1.0 - t) * CORE * s[1] + t * c[1])
            };
            offsets.push([ax * u, ay * v]);
        }
    }
    // graded rings outside; the last one is the cell boundary
    let out_base = offsets.len();
    let t0 = mean_gamma_spacing(geom, q);
    let fracs: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            let (g, s) = (gamma_offset(geom, k, q), ring_point(k, q, square_oct));
            graded_fractions(t0, norm([0.5 * s[0] - g[0], 0.5 * s[1] - g[1]]), l_out)
        })
        .collect();
    for l in 1..=l_out {
        for k in 0..m {
            let s = ring_point(k, q, square_oct);
            let sq = [0.5 * s[0], 0.5 * s[1]];
            if l == l_out {
                offsets.push(sq);
            } else {
                let g = gamma_offset(geom, k, q);
                let f = fracs[k][l];
                offsets.push([g[0] + f * (sq[0] - g[0]), g[1] + f * (sq[1] - g[1])]);
            }
        }
    }
    let vertices: Vec<[f64; 2]> = offsets.iter().map(|o| [CENTER[0] + o[0], CENTER[1] + o[1]]).collect();

    let ring = |l: usize, k: usize| -> usize {
        let k = k % m;
        if l == 0 {
            core_ring[k]
        } else if l <= l_in {
            in_base + (l - 1) * m + k
        } else {
            out_base + (l - l_in - 1) * m + k
        }
    };

    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    let mut push = |tri: [usize; 3], region: Region, tris: &mut Vec<[usize; 3]>| {
        let [a, b, c] = tri.map(|i| vertices[i]);
        let area = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        tris.push(if area >= 0.0 { tri } else { [tri[0], tri[2], tri[1]] });
        regions.push(region);
    };
    // core grid, union-jack diagonals for symmetry
    for j in 0..2 * q {
        for i in 0..2 * q {
            let (a, b, c, d) = (grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1));
            let cx = i as f64 + 0.5 - q as f64;
            let cy = j as f64 + 0.5 - q as f64;
            if cx * cy > 0.0 {
                push([a, b, c], Region::Q0, &mut triangles);
                push([a, c, d], Region::Q0, &mut triangles);
            } else {
                push([a, b, d], Region::Q0, &mut triangles);
                push([b, c, d], Region::Q0, &mut triangles);
            }
        }
    }
    let dist2 = |i: usize, j: usize| {
        let (p, r) = (vertices[i], vertices[j]);
        (p[0] - r[0]) * (p[0] - r[0]) + (p[1] - r[1]) * (p[1] - r[1])
    };
    for l in 0..l_in + l_out {
        let region = if l < l_in { Region::Q0 } else { Region::Q1 };
        for k in 0..m {
            let (a, b, c, d) = (ring(l, k), ring(l, k + 1), ring(l + 1, k + 1), ring(l + 1, k));
            if dist2(a, c) <= dist2(b, d) {
                push([a, b, c], region, &mut triangles);
                push([a, c, d], region, &mut triangles);
            } else {
                push([a, b, d], region, &mut triangles);
                push([b, c, d], region, &mut triangles);
            }
        }
    }

    let mut edges = Vec::new();
    for k in 0..m {
        edges.push(TaggedEdge { v: [ring(l_in, k), ring(l_in, k + 1)], tag: EdgeTag::Gamma });
    }
    let n_side = 2 * q;
    let lb = l_in + l_out;
    for k in 0..m {
        let (a, b) = (ring(lb, k), ring(lb, k + 1));
        let (pa, pb) = (vertices[a], vertices[b]);
        let id = if pa[0] == pb[0] {
            n_side + (pa[1].min(pb[1]) * n_side as f64).round() as usize
        } else {
            (pa[0].min(pb[0]) * n_side as f64).round() as usize
        };
        edges.push(TaggedEdge { v: [a, b], tag: EdgeTag::PeriodicPair(id as u32) });
    }

    Mesh {
        vertices,
        triangles,
        regions,
        edges,
        h: 1.0 / n_side as f64,
        kind: MeshKind::Cell { q },
        cell_vertex: None,
    }
}
