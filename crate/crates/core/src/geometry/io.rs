//! Plain-text mesh format.
//!
//! ```text
//! n_vertices n_elements
//! x y                      (n_vertices lines)
//! i j k region             (n_elements lines, region 0 = Q0, 1 = Q1)
//! i j tag                  (remaining lines: gamma | outer | periodic:<id>)
//! ```

use std::io::{BufRead, Write};

use super::{EdgeTag, Mesh, MeshKind, Region, TaggedEdge};
use crate::error::{Error, Result};
use crate::fmt17;

pub fn write_mesh<W: Write>(mesh: &Mesh, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{} {}", mesh.vertices.len(), mesh.triangles.len())?;
    for p in &mesh.vertices {
        writeln!(w, "{} {}", fmt17(p[0]), fmt17(p[1]))?;
    }
    for (t, r) in mesh.triangles.iter().zip(&mesh.regions) {
        writeln!(w, "{} {} {} {}", t[0], t[1], t[2], r.index())?;
    }
    for e in &mesh.edges {
        let tag = match e.tag {
            EdgeTag::Gamma => "gamma".to_string(),
            EdgeTag::Outer => "outer".to_string(),
            EdgeTag::PeriodicPair(id) => format!("periodic:{id}"),
        };
        writeln!(w, "{} {} {}", e.v[0], e.v[1], tag)?;
    }
    Ok(())
}

fn bad(line: usize, what: &str) -> Error {
    Error::InvalidArgument(format!("mesh text line {line}: {what}"))
}

pub fn read_mesh<R: BufRead>(r: R) -> Result<Mesh> {
    let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() => None,
        Ok(s) => Some(Ok((i + 1, s))),
        Err(e) => Some(Err(Error::InvalidArgument(e.to_string()))),
    });
    let (ln, header) = lines.next().ok_or(Error::EmptyMesh)??;
    let head: Vec<usize> =
        header.split_whitespace().map(|s| s.parse().map_err(|_| bad(ln, "bad header"))).collect::<Result<_>>()?;
    let [nv, ne] = head[..] else { return Err(bad(ln, "header needs two counts")) };
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| bad(0, "missing vertex lines"))??;
        let f: Vec<f64> =
            l.split_whitespace().map(|s| s.parse().map_err(|_| bad(ln, "bad coordinate"))).collect::<Result<_>>()?;
        let [x, y] = f[..] else { return Err(bad(ln, "vertex needs two coordinates")) };
        vertices.push([x, y]);
    }
    let mut triangles = Vec::with_capacity(ne);
    let mut regions = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (ln, l) = lines.next().ok_or_else(|| bad(0, "missing element lines"))??;
        let f: Vec<usize> =
            l.split_whitespace().map(|s| s.parse().map_err(|_| bad(ln, "bad index"))).collect::<Result<_>>()?;
        let [i, j, k, r] = f[..] else { return Err(bad(ln, "element needs four integers")) };
        if i.max(j).max(k) >= nv {
            return Err(bad(ln, "vertex index out of range"));
        }
        triangles.push([i, j, k]);
        regions.push(match r {
            0 => Region::Q0,
            1 => Region::Q1,
            _ => return Err(bad(ln, "region must be 0 or 1")),
        });
    }
    let mut edges = Vec::new();
    for item in lines {
        let (ln, l) = item?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        let [a, b, tag] = parts[..] else { return Err(bad(ln, "edge needs two indices and a tag")) };
        let a: usize = a.parse().map_err(|_| bad(ln, "bad index"))?;
        let b: usize = b.parse().map_err(|_| bad(ln, "bad index"))?;
        let tag = match tag {
            "gamma" => EdgeTag::Gamma,
            "outer" => EdgeTag::Outer,
            t => match t.strip_prefix("periodic:").map(str::parse::<u32>) {
                Some(Ok(id)) => EdgeTag::PeriodicPair(id),
                _ => return Err(bad(ln, "unknown edge tag")),
            },
        };
        edges.push(TaggedEdge { v: [a, b], tag });
    }
    let mut h = 0.0f64;
    for e in &edges {
        let (p, q) = (vertices[e.v[0]], vertices[e.v[1]]);
        h = h.max((p[0] - q[0]).hypot(p[1] - q[1]));
    }
    Ok(Mesh { vertices, triangles, regions, edges, h, kind: MeshKind::Unknown, cell_vertex: None })
}
