//! Periodicity cell, inclusion shapes and boundary-fitted triangular meshes.

mod cell;
mod domain;
mod io;

use serde::{Deserialize, Serialize};

pub use cell::{build_cell_mesh, build_cell_mesh_q};
pub use domain::{build_domain_mesh, build_domain_mesh_m, epsilon_to_m, unit_square_mesh};
pub use io::{read_mesh, write_mesh};

use crate::error::{Error, Result};

pub const CENTER: [f64; 2] = [0.5, 0.5];
pub const MIN_ANGLE_DEG: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Inclusion {
    Disk { radius: f64 },
    /// Axis-aligned ellipse; breaks the rotational degeneracies of the disk.
    Ellipse { semi_x: f64, semi_y: f64 },
}

impl Inclusion {
    pub fn semi_axes(&self) -> [f64; 2] {
        match *self {
            Inclusion::Disk { radius } => [radius, radius],
            Inclusion::Ellipse { semi_x, semi_y } => [semi_x, semi_y],
        }
    }

    /// Exact area of the smooth inclusion.
    pub fn area(&self) -> f64 {
        let [ax, ay] = self.semi_axes();
        std::f64::consts::PI * ax * ay
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGeometry {
    pub dimension: usize,
    pub inclusion: Inclusion,
}

impl CellGeometry {
    pub fn disk(radius: f64) -> Self {
        CellGeometry { dimension: 2, inclusion: Inclusion::Disk { radius } }
    }

    pub fn ellipse(semi_x: f64, semi_y: f64) -> Self {
        CellGeometry { dimension: 2, inclusion: Inclusion::Ellipse { semi_x, semi_y } }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 2 {
            return Err(Error::InvalidGeometry(format!(
                "meshing supports dimension 2 only (got {})",
                self.dimension
            )));
        }
        for s in self.inclusion.semi_axes() {
            if !(s > 0.0 && s < 0.5) {
                return Err(Error::InvalidGeometry(format!(
                    "inclusion not strictly interior: semi-axis {s} outside (0, 1/2)"
                )));
            }
        }
        Ok(())
    }

    pub fn is_disk(&self) -> bool {
        matches!(self.inclusion, Inclusion::Disk { .. })
    }

    /// |Q₀| of the smooth geometry.
    pub fn inclusion_area(&self) -> f64 {
        self.inclusion.area()
    }

    pub fn min_semi_axis(&self) -> f64 {
        let [a, b] = self.inclusion.semi_axes();
        a.min(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// Inclusion phase.
    Q0,
    /// Connected matrix phase.
    Q1,
}

impl Region {
    pub fn index(self) -> usize {
        match self {
            Region::Q0 => 0,
            Region::Q1 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Q0 => "Q0",
            Region::Q1 => "Q1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeTag {
    Gamma,
    Outer,
    PeriodicPair(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedEdge {
    pub v: [usize; 2],
    pub tag: EdgeTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MeshKind {
    /// Unit periodicity cell; `q` is the number of Γ segments per octant.
    Cell { q: usize },
    /// Ω tiled by m × m scaled cells.
    Domain { m: usize, q: usize },
    /// Ω without inclusions, n × n squares in a union-jack pattern (diagonals
    /// mirrored about the centre lines).
    Square { n: usize },
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    pub edges: Vec<TaggedEdge>,
    /// Nominal mesh parameter (spacing of boundary vertices).
    pub h: f64,
    pub kind: MeshKind,
    /// For domain meshes, the cell-mesh vertex each vertex was copied from.
    pub cell_vertex: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshReport {
    pub n_vertices: usize,
    pub n_elements: usize,
    pub n_gamma_edges: usize,
    pub n_gamma_loops: usize,
    pub min_angle_deg: f64,
    pub max_edge: f64,
    pub min_edge: f64,
    pub area_q0: f64,
    pub area_q1: f64,
}

impl Mesh {
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn region_area(&self, r: Region) -> f64 {
        (0..self.triangles.len()).filter(|&t| self.regions[t] == r).map(|t| self.signed_area(t)).sum()
    }

    fn tagged(&self, want: impl Fn(EdgeTag) -> bool) -> Vec<usize> {
        let mut v: Vec<usize> = self.edges.iter().filter(|e| want(e.tag)).flat_map(|e| e.v).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn gamma_vertices(&self) -> Vec<usize> {
        self.tagged(|t| t == EdgeTag::Gamma)
    }

    pub fn outer_vertices(&self) -> Vec<usize> {
        self.tagged(|t| t == EdgeTag::Outer)
    }

    pub fn gamma_edges(&self) -> impl Iterator<Item = [usize; 2]> + '_ {
        self.edges.iter().filter(|e| e.tag == EdgeTag::Gamma).map(|e| e.v)
    }

    /// Γ edges chained into closed loops (each loop lists its vertices once).
    pub fn gamma_loops(&self) -> Result<Vec<Vec<usize>>> {
        let mut next = std::collections::BTreeMap::new();
        for [a, b] in self.gamma_edges() {
            if next.insert(a, b).is_some() {
                return Err(Error::InvalidGeometry(format!("Γ vertex {a} starts two edges")));
            }
        }
        let mut loops = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for &start in next.keys() {
            if seen.contains(&start) {
                continue;
            }
            let mut lp = vec![start];
            seen.insert(start);
            let mut cur = next[&start];
            while cur != start {
                if !seen.insert(cur) {
                    return Err(Error::InvalidGeometry("Γ edges do not form simple loops".into()));
                }
                lp.push(cur);
                cur = *next
                    .get(&cur)
                    .ok_or_else(|| Error::InvalidGeometry(format!("Γ polyline open at vertex {cur}")))?;
            }
            loops.push(lp);
        }
        Ok(loops)
    }

    /// Involutive pairings of opposite-face vertices of a cell mesh:
    /// (x = 0 ↔ x = 1 at equal y, y = 0 ↔ y = 1 at equal x).
    pub fn periodic_pairs(&self) -> [Vec<(usize, usize)>; 2] {
        let mut out = [Vec::new(), Vec::new()];
        for axis in 0..2 {
            let other = 1 - axis;
            let mut lo: Vec<(u64, usize)> = Vec::new();
            let mut hi: Vec<(u64, usize)> = Vec::new();
            for (i, p) in self.vertices.iter().enumerate() {
                if p[axis] == 0.0 {
                    lo.push((p[other].to_bits(), i));
                } else if p[axis] == 1.0 {
                    hi.push((p[other].to_bits(), i));
                }
            }
            lo.sort_unstable();
            hi.sort_unstable();
            for (l, h) in lo.iter().zip(&hi) {
                if l.0 == h.0 {
                    out[axis].push((l.1, h.1));
                }
            }
        }
        out
    }

    /// Representative vertex of each periodic equivalence class (identity off the faces).
    pub fn periodic_representatives(&self) -> Vec<usize> {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for pairs in self.periodic_pairs() {
            for (a, b) in pairs {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                    parent[hi] = lo;
                }
            }
        }
        (0..n).map(|i| find(&mut parent, i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() || self.triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        for t in 0..self.triangles.len() {
            if self.signed_area(t) <= 0.0 {
                return Err(Error::InvalidGeometry(format!("element {t} has nonpositive area")));
            }
        }
        let min_angle = self.min_angle_deg();
        if min_angle < MIN_ANGLE_DEG {
            return Err(Error::MeshQuality { min_angle_deg: min_angle, required_deg: MIN_ANGLE_DEG });
        }
        self.gamma_loops()?;
        Ok(())
    }

    pub fn min_angle_deg(&self) -> f64 {
        let mut worst = 180.0f64;
        for tri in &self.triangles {
            let p = tri.map(|i| self.vertices[i]);
            for k in 0..3 {
                let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / ((u[0].hypot(u[1])) * (v[0].hypot(v[1])));
                worst = worst.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        worst
    }

    pub fn report(&self) -> Result<MeshReport> {
        if self.vertices.is_empty() || self.triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let (mut max_edge, mut min_edge) = (0.0f64, f64::INFINITY);
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (self.vertices[tri[k]], self.vertices[tri[(k + 1) % 3]]);
                let l = (b[0] - a[0]).hypot(b[1] - a[1]);
                max_edge = max_edge.max(l);
                min_edge = min_edge.min(l);
            }
        }
        Ok(MeshReport {
            n_vertices: self.vertices.len(),
            n_elements: self.triangles.len(),
            n_gamma_edges: self.gamma_edges().count(),
            n_gamma_loops: self.gamma_loops()?.len(),
            min_angle_deg: self.min_angle_deg(),
            max_edge,
            min_edge,
            area_q0: self.region_area(Region::Q0),
            area_q1: self.region_area(Region::Q1),
        })
    }
}
