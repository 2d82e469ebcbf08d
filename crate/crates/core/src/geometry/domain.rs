//! Meshes of Ω = [0,1]²: tiled inclusion arrays and the plain square.

use std::collections::HashMap;

use super::cell::build_cell_mesh_q;
use super::{CellGeometry, EdgeTag, Mesh, MeshKind, Region, TaggedEdge};
use crate::error::{Error, Result};

/// m with ε = 1/m, accepting ε given to ordinary decimal precision.
pub fn epsilon_to_m(epsilon: f64) -> Result<usize> {
    if !(epsilon.is_finite() && epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::EpsilonNotReciprocal(epsilon));
    }
    let m = (1.0 / epsilon).round();
    if ((1.0 / m) - epsilon).abs() > 1e-9 * epsilon {
        return Err(Error::EpsilonNotReciprocal(epsilon));
    }
    Ok(m as usize)
}

/// Ω meshed as 1/ε² copies of the cell mesh scaled by ε; h is the target
/// spacing in x-units and must not exceed ε/8.
pub fn build_domain_mesh(geom: &CellGeometry, epsilon: f64, h: f64, dof_cap: usize) -> Result<Mesh> {
    let m = epsilon_to_m(epsilon)?;
    if m < 2 {
        return Err(Error::EpsilonNotReciprocal(epsilon));
    }
    if !(h > 0.0 && h <= epsilon / 8.0 * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!("mesh size h = {h} must satisfy 0 < h <= epsilon/8")));
    }
    let q = ((0.5 * epsilon / h - 1e-9).ceil() as usize).max(4);
    build_domain_mesh_m(geom, m, q, dof_cap)
}

/// Ω tiled by m × m cells, each meshed with `q` Γ segments per octant.
pub fn build_domain_mesh_m(geom: &CellGeometry, m: usize, q: usize, dof_cap: usize) -> Result<Mesh> {
    let cell = build_cell_mesh_q(geom, q)?;
    let nc = cell.vertices.len();
    let n_boundary = 8 * q;
    let per_side = 2 * q * m + 1;
    let estimate = m * m * (nc - n_boundary) + 2 * (m + 1) * per_side - (m + 1) * (m + 1);
    if estimate > dof_cap {
        return Err(Error::DofCap { dofs: estimate, cap: dof_cap });
    }
    let on_cell_boundary: Vec<bool> =
        cell.vertices.iter().map(|p| p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0).collect();
    let mf = m as f64;
    let mut vertices = Vec::with_capacity(estimate);
    let mut cell_vertex = Vec::with_capacity(estimate);
    let mut shared: HashMap<(u64, u64), usize> = HashMap::new();
    let mut triangles = Vec::with_capacity(m * m * cell.triangles.len());
    let mut regions = Vec::with_capacity(m * m * cell.triangles.len());
    let mut edges = Vec::new();
    let mut local = vec![0usize; nc];
    for cj in 0..m {
        for ci in 0..m {
            for (v, p) in cell.vertices.iter().enumerate() {
                let x = [(ci as f64 + p[0]) / mf, (cj as f64 + p[1]) / mf];
                local[v] = if on_cell_boundary[v] {
                    *shared.entry((x[0].to_bits(), x[1].to_bits())).or_insert_with(|| {
                        vertices.push(x);
                        cell_vertex.push(v);
                        vertices.len() - 1
                    })
                } else {
                    vertices.push(x);
                    cell_vertex.push(v);
                    vertices.len() - 1
                };
            }
            for (t, tri) in cell.triangles.iter().enumerate() {
                triangles.push(tri.map(|v| local[v]));
                regions.push(cell.regions[t]);
            }
            for e in &cell.edges {
                let v = e.v.map(|i| local[i]);
                match e.tag {
                    EdgeTag::Gamma => edges.push(TaggedEdge { v, tag: EdgeTag::Gamma }),
                    EdgeTag::PeriodicPair(_) => {
                        let (a, b) = (vertices[v[0]], vertices[v[1]]);
                        let on = |k: usize, val: f64| a[k] == val && b[k] == val;
                        if on(0, 0.0) || on(0, 1.0) || on(1, 0.0) || on(1, 1.0) {
                            edges.push(TaggedEdge { v, tag: EdgeTag::Outer });
                        }
                    }
                    EdgeTag::Outer => {}
                }
            }
        }
    }
    if vertices.len() > dof_cap {
        return Err(Error::DofCap { dofs: vertices.len(), cap: dof_cap });
    }
    Ok(Mesh {
        vertices,
        triangles,
        regions,
        edges,
        h: cell.h / mf,
        kind: MeshKind::Domain { m, q },
        cell_vertex: Some(cell_vertex),
    })
}

/// Unit square split into n × n squares in a union-jack pattern: each square is
/// cut along the diagonal pointing away from the centre, so for even n the mesh
/// has the full symmetry group of the square and degenerate eigenvalues stay
/// degenerate.
pub fn unit_square_mesh(n: usize) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::InvalidArgument("unit square mesh needs n >= 2".into()));
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let nf = n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / nf, j as f64 / nf]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            if (2 * i + 1 < n) == (2 * j + 1 < n) {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            } else {
                triangles.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
                triangles.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
    }
    let mut edges = Vec::with_capacity(4 * n);
    for i in 0..n {
        edges.push(TaggedEdge { v: [id(i, 0), id(i + 1, 0)], tag: EdgeTag::Outer });
        edges.push(TaggedEdge { v: [id(n, i), id(n, i + 1)], tag: EdgeTag::Outer });
        edges.push(TaggedEdge { v: [id(i + 1, n), id(i, n)], tag: EdgeTag::Outer });
        edges.push(TaggedEdge { v: [id(0, i + 1), id(0, i)], tag: EdgeTag::Outer });
    }
    let regions = vec![Region::Q1; triangles.len()];
    Ok(Mesh { vertices, triangles, regions, edges, h: 1.0 / nf, kind: MeshKind::Square { n }, cell_vertex: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_parsing() {
        assert_eq!(epsilon_to_m(0.125).unwrap(), 8);
        assert_eq!(epsilon_to_m(1.0 / 3.0).unwrap(), 3);
        assert!(matches!(epsilon_to_m(0.3), Err(Error::EpsilonNotReciprocal(_))));
        assert!(epsilon_to_m(-0.5).is_err());
    }

    #[test]
    fn square_mesh_counts() {
        let m = unit_square_mesh(4).unwrap();
        assert_eq!(m.vertices.len(), 25);
        assert_eq!(m.triangles.len(), 32);
        assert_eq!(m.outer_vertices().len(), 16);
        assert!((m.region_area(Region::Q1) - 1.0).abs() < 1e-14);
    }
}
