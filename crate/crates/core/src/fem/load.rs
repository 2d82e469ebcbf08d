//! Load vectors and integrals of P1 fields.

use super::Subdomain;
use crate::geometry::Mesh;

fn area_and_gradients(p: [[f64; 2]; 3]) -> (f64, [[f64; 2]; 3]) {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [(p[j][1] - p[k][1]) / (2.0 * area), (p[k][0] - p[j][0]) / (2.0 * area)];
    }
    (area, g)
}

/// Constant gradient of a vertex field on every element.
pub fn element_gradients(mesh: &Mesh, u: &[f64]) -> Vec<[f64; 2]> {
    mesh.triangles
        .iter()
        .map(|tri| {
            let (_, g) = area_and_gradients(tri.map(|i| mesh.vertices[i]));
            let mut out = [0.0; 2];
            for k in 0..3 {
                out[0] += u[tri[k]] * g[k][0];
                out[1] += u[tri[k]] * g[k][1];
            }
            out
        })
        .collect()
}

/// b_i = ∫ coef · ∂_j u · ψ_i over the subdomain (exact for P1 u).
pub fn gradient_load(mesh: &Mesh, sub: Subdomain, u: &[f64], j: usize, coef: f64) -> Vec<f64> {
    let mut b = vec![0.0; mesh.vertices.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !sub.contains(mesh.regions[t]) {
            continue;
        }
        let (area, g) = area_and_gradients(tri.map(|i| mesh.vertices[i]));
        let du: f64 = (0..3).map(|k| u[tri[k]] * g[k][j]).sum();
        for &v in tri {
            b[v] += coef * du * area / 3.0;
        }
    }
    b
}

/// b_i = ∫_Γ n_j ψ_i with n the outward normal of the inclusion polygon.
pub fn gamma_normal_load(mesh: &Mesh, j: usize) -> Vec<f64> {
    let mut b = vec![0.0; mesh.vertices.len()];
    for [a, c] in mesh.gamma_edges() {
        let (pa, pc) = (mesh.vertices[a], mesh.vertices[c]);
        // Γ edges run counter-clockwise around Q0; n·|e| = (t_y, −t_x)
        let n_len = [pc[1] - pa[1], pa[0] - pc[0]];
        b[a] += 0.5 * n_len[j];
        b[c] += 0.5 * n_len[j];
    }
    b
}

/// ∫ u over the subdomain.
pub fn region_integral(mesh: &Mesh, sub: Subdomain, u: &[f64]) -> f64 {
    let mut s = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if sub.contains(mesh.regions[t]) {
            let (area, _) = area_and_gradients(tri.map(|i| mesh.vertices[i]));
            s += area * (u[tri[0]] + u[tri[1]] + u[tri[2]]) / 3.0;
        }
    }
    s
}

/// ∫ ∂_j u over the subdomain.
pub fn gradient_integral(mesh: &Mesh, sub: Subdomain, u: &[f64], j: usize) -> f64 {
    let mut s = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if sub.contains(mesh.regions[t]) {
            let (area, g) = area_and_gradients(tri.map(|i| mesh.vertices[i]));
            s += area * (0..3).map(|k| u[tri[k]] * g[k][j]).sum::<f64>();
        }
    }
    s
}
