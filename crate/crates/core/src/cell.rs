//! Case-(a) cell problems: N_j, 𝒩 on the matrix phase, M_j, P, R on the
//! inclusion, and the constants they feed into the homogenized problem.
//!
//! Conormal derivatives on Γ are never differentiated pointwise. They are the
//! discrete flux functionals of the Galerkin solutions (residual of the weak
//! form tested with the hat functions of Γ vertices), so Green-type identities
//! hold to solver precision and measure consistency of the scheme rather than
//! gradient recovery noise. The normal n points out of Q₀.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{self, gradient_integral, gradient_load, Subdomain};
use crate::geometry::Region;
use crate::micro::{CellSpaces, Micro};
use crate::richardson::{extrapolate, observed_order};
use crate::sparse::dot;
use crate::tolerances::Tolerances;

/// Periodic correctors N_j with ∫_{Q₁} N_j = 0.
#[derive(Debug, Clone)]
pub struct Correctors {
    /// Vertex fields on Q₁ (zero at inclusion-interior vertices).
    pub n: [Vec<f64>; 2],
    /// ∫_Γ n_j before the solve.
    pub compatibility: [f64; 2],
    /// ∫_{Q₁} |∇N_j|².
    pub energy: [f64; 2],
}

pub fn solve_nj(spaces: &CellSpaces, tol: &Tolerances) -> Result<Correctors> {
    let q1 = &spaces.q1;
    let mut n = [Vec::new(), Vec::new()];
    let mut compatibility = [0.0; 2];
    let mut energy = [0.0; 2];
    for j in 0..2 {
        // ∫ ∇N·∇v = ∫_Γ n_j v with n out of Q₀ (= into Q₁)
        let load = fem::gamma_normal_load(&spaces.mesh, j);
        let rhs = q1.restrict(&load);
        compatibility[j] = rhs.iter().sum();
        let (u, _) = fem::solve_neumann(q1, &rhs, tol)?;
        energy[j] = q1.stiffness.bilinear(&u, &u);
        n[j] = q1.expand(&u);
    }
    Ok(Correctors { n, compatibility, energy })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedMatrix {
    /// Symmetrized A^hom.
    pub a: [[f64; 2]; 2],
    /// |A₁₂ − A₂₁| before symmetrization.
    pub antisymmetry: f64,
}

impl HomogenizedMatrix {
    pub fn isotropic(alpha: f64) -> Self {
        HomogenizedMatrix { a: [[alpha, 0.0], [0.0, alpha]], antisymmetry: 0.0 }
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [_, d]] = self.a;
        let m = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [m - r, m + r]
    }

    /// max |A − αI| relative to α, with α the mean of the eigenvalues.
    pub fn anisotropy(&self) -> f64 {
        let [l0, l1] = self.eigenvalues();
        (l1 - l0) / (0.5 * (l0 + l1))
    }

    pub fn scaled(&self, c: f64) -> Self {
        HomogenizedMatrix { a: self.a.map(|r| r.map(|x| c * x)), antisymmetry: c * self.antisymmetry }
    }
}

/// A^hom_jk = |Q₁|δ_jk + ∫_{Q₁} ∂N_k/∂y_j.
pub fn homogenized_matrix(spaces: &CellSpaces, nj: &Correctors) -> HomogenizedMatrix {
    let mut a = [[0.0; 2]; 2];
    for (j, row) in a.iter_mut().enumerate() {
        for (k, x) in row.iter_mut().enumerate() {
            let delta = if j == k { spaces.area[1] } else { 0.0 };
            *x = delta + gradient_integral(&spaces.mesh, Subdomain::Only(Region::Q1), &nj.n[k], j);
        }
    }
    let antisymmetry = (a[0][1] - a[1][0]).abs();
    let off = 0.5 * (a[0][1] + a[1][0]);
    a[0][1] = off;
    a[1][0] = off;
    HomogenizedMatrix { a, antisymmetry }
}

/// A^hom on meshes h, h/2, h/4: Richardson limit from the two finest and the
/// observed convergence order of every entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedConvergence {
    pub levels: [HomogenizedMatrix; 3],
    pub extrapolated: HomogenizedMatrix,
    /// Observed order per diagonal entry.
    pub order: [f64; 2],
}

pub fn homogenized_convergence(levels: [HomogenizedMatrix; 3]) -> HomogenizedConvergence {
    let mut ext = levels[2];
    for j in 0..2 {
        for k in 0..2 {
            ext.a[j][k] = extrapolate(levels[1].a[j][k], levels[2].a[j][k], 2.0);
        }
    }
    let order = [0, 1].map(|j| observed_order(levels[0].a[j][j], levels[1].a[j][j], levels[2].a[j][j]));
    HomogenizedConvergence { levels, extrapolated: ext, order }
}

/// Every case-(a) cell field at one λ₀ (vertex-indexed).
#[derive(Debug, Clone)]
pub struct CellFields {
    pub eta: Vec<f64>,
    pub n: [Vec<f64>; 2],
    pub cal_n: Vec<f64>,
    pub m: [Vec<f64>; 2],
    pub p: Vec<f64>,
    pub r: Vec<f64>,
}

/// Residuals of the identities that make the drift vanish and fix C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellIdentities {
    /// B(λ₀): compatibility defect of the 𝒩 problem.
    pub solvability_defect: f64,
    /// ∫_Γ n_j (closed-boundary identity).
    pub normal_integral: [f64; 2],
    /// ∫_Γ (𝒩 ∂N_j/∂n − N_j ∂𝒩/∂n).
    pub harmonic_pair: [f64; 2],
    /// ∫_Γ M_j ∂η/∂n − ∫_Γ N_j ∂𝒩/∂n.
    pub trace_transfer: [f64; 2],
    /// ∫_Γ (η ∂M_j/∂n − M_j ∂η/∂n).
    pub helmholtz_pair: [f64; 2],
    /// ∫_Γ (R ∂η/∂n − η ∂R/∂n) − ∫_{Q₀} (RΔη − ηΔR), with the volume term
    /// evaluated from the equations as −∫η².
    pub green: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTensors {
    pub lambda0: f64,
    /// Mesh parameter, 0 for extrapolated values.
    pub h: f64,
    pub a_hom: HomogenizedMatrix,
    /// C = ∫_{Q₀} η².
    pub c: f64,
    /// C = −∫_Γ ∂R/∂n.
    pub c_flux: f64,
    /// ∫_{Q₀} P.
    pub p_int: f64,
    /// K_j = ∫_{Q₁} ∂𝒩/∂y_j − ∫_Γ ∂M_j/∂n.
    pub k: [f64; 2],
    /// [|Q₀|, |Q₁|] of the mesh.
    pub area: [f64; 2],
    pub identities: CellIdentities,
}

impl CellTensors {
    /// ν(λ₁) = Cλ₁ + λ₀(|Q₁| + ∫P).
    pub fn nu(&self, lambda1: f64) -> f64 {
        self.c * lambda1 + self.nu_offset()
    }

    pub fn nu_offset(&self) -> f64 {
        self.lambda0 * (self.area[1] + self.p_int)
    }

    /// Inverse of [`CellTensors::nu`].
    pub fn lambda1(&self, nu: f64) -> f64 {
        (nu - self.nu_offset()) / self.c
    }

    pub fn k_norm(&self) -> f64 {
        self.k[0].hypot(self.k[1])
    }
}

/// Values at h and h/2 combined by Richardson extrapolation (order 2); the
/// identity residuals are those of the finer level.
pub fn extrapolate_tensors(coarse: &CellTensors, fine: &CellTensors) -> CellTensors {
    let e = |a: f64, b: f64| extrapolate(a, b, 2.0);
    let mut a_hom = fine.a_hom;
    for j in 0..2 {
        for k in 0..2 {
            a_hom.a[j][k] = e(coarse.a_hom.a[j][k], fine.a_hom.a[j][k]);
        }
    }
    CellTensors {
        lambda0: e(coarse.lambda0, fine.lambda0),
        h: 0.0,
        a_hom,
        c: e(coarse.c, fine.c),
        c_flux: e(coarse.c_flux, fine.c_flux),
        p_int: e(coarse.p_int, fine.p_int),
        k: [e(coarse.k[0], fine.k[0]), e(coarse.k[1], fine.k[1])],
        area: [e(coarse.area[0], fine.area[0]), e(coarse.area[1], fine.area[1])],
        identities: fine.identities,
    }
}

/// Σ_{v∈Γ} w(v) g(v) for vertex vectors.
fn gamma_dot(gamma: &[usize], w: &[f64], g: &[f64]) -> f64 {
    gamma.iter().map(|&v| w[v] * g[v]).sum()
}

/// Solves every cell problem at λ₀ (a root of B off the Dirichlet spectrum).
pub fn cell_problems(micro: &Micro, lambda0: f64) -> Result<(CellTensors, CellFields)> {
    let sp = &micro.spaces;
    let tol = &micro.tol;
    for c in &micro.spectrum.clusters {
        if (lambda0 - c.value).abs() <= tol.pole * c.value {
            return Err(Error::Pole { lambda: lambda0, pole: c.value });
        }
    }
    let eta = micro.eta(lambda0)?;
    let nj = solve_nj(sp, tol)?;
    let a_hom = homogenized_matrix(sp, &nj);
    let q0 = &sp.q0;
    let q1 = &sp.q1;
    let mesh = &sp.mesh;
    let gamma = mesh.gamma_vertices();
    let nv = mesh.vertices.len();
    let zero = vec![0.0; nv];

    // ∫_Γ v ∂η/∂n as a vertex functional
    let flux_eta = q0.flux(lambda0, &eta.field, &zero);
    let cal_n = solve_cal_n(sp, &flux_eta, tol)?;
    let k1 = |u: &[f64]| q1.stiffness_full.mul_vec(u);
    let (k1_cal_n, k1_n) = (k1(&cal_n), [k1(&nj.n[0]), k1(&nj.n[1])]);

    let mut m = [Vec::new(), Vec::new()];
    let mut k = [0.0; 2];
    let mut harmonic_pair = [0.0; 2];
    let mut trace_transfer = [0.0; 2];
    let mut helmholtz_pair = [0.0; 2];
    for j in 0..2 {
        let f = gradient_load(mesh, Subdomain::Only(Region::Q0), &eta.field, j, 2.0);
        let mj = fem::solve_dirichlet(q0, lambda0, &f, &nj.n[j], tol)?;
        let flux_m = q0.flux(lambda0, &mj, &f);
        let gamma_flux_m: f64 = gamma.iter().map(|&v| flux_m[v]).sum();
        k[j] = gradient_integral(mesh, Subdomain::Only(Region::Q1), &cal_n, j) - gamma_flux_m;
        // Q₁ fields: ∫_Γ w ∂u/∂n = −Σ_Γ w (K₁u), the outward normal of Q₁ being −n
        harmonic_pair[j] = -gamma_dot(&gamma, &cal_n, &k1_n[j]) + gamma_dot(&gamma, &nj.n[j], &k1_cal_n);
        trace_transfer[j] = gamma_dot(&gamma, &mj, &flux_eta) + gamma_dot(&gamma, &nj.n[j], &k1_cal_n);
        helmholtz_pair[j] = gamma_dot(&gamma, &eta.field, &flux_m) - gamma_dot(&gamma, &mj, &flux_eta);
        m[j] = mj;
    }
    let p = fem::solve_dirichlet(q0, lambda0, &zero, &cal_n, tol)?;
    let f_r = q0.mass_full.mul_vec(&eta.field);
    let r = fem::solve_dirichlet(q0, lambda0, &f_r, &zero, tol)?;
    let flux_r = q0.flux(lambda0, &r, &f_r);
    let c = sp.inner_q0(&eta.field, &eta.field);
    let c_flux = -gamma.iter().map(|&v| flux_r[v]).sum::<f64>();
    // R = 0 and η = 1 on Γ, and −∫(RΔη − ηΔR) = −∫η² by the equations
    let green = -c_flux + c;
    let normal_integral = [0, 1].map(|j| fem::gamma_normal_load(mesh, j).iter().sum::<f64>());

    let tensors = CellTensors {
        lambda0,
        h: sp.h(),
        a_hom,
        c,
        c_flux,
        p_int: sp.integral_q0(&p),
        k,
        area: sp.area,
        identities: CellIdentities {
            solvability_defect: eta.b(),
            normal_integral,
            harmonic_pair,
            trace_transfer,
            helmholtz_pair,
            green,
        },
    };
    let fields = CellFields { eta: eta.field, n: nj.n, cal_n, m, p, r };
    Ok((tensors, fields))
}

/// 𝒩: harmonic in Q₁, ∂𝒩/∂n = ∂η/∂n on Γ, periodic, zero mean. `flux_eta`
/// is the functional v ↦ ∫_Γ v ∂η/∂n; its total is −B(λ₀).
pub fn solve_cal_n(spaces: &CellSpaces, flux_eta: &[f64], tol: &Tolerances) -> Result<Vec<f64>> {
    let q1 = &spaces.q1;
    let load: Vec<f64> = flux_eta.iter().map(|x| -x).collect();
    let rhs = q1.restrict(&load);
    let defect: f64 = rhs.iter().sum();
    if defect.abs() > tol.solvability {
        return Err(Error::Solvability { defect, tol: tol.solvability });
    }
    let (u, _) = fem::solve_neumann(q1, &rhs, tol)?;
    Ok(q1.expand(&u))
}

/// ∫_{Q₁} u v for vertex fields (periodic copies counted once per element).
pub fn inner_q1(spaces: &CellSpaces, u: &[f64], v: &[f64]) -> f64 {
    dot(u, &spaces.q1.mass_full.mul_vec(v))
}
