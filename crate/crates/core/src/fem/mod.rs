//! P1 finite elements: assembly, constraint spaces and solves.

mod load;

pub use load::{
    element_gradients, gamma_normal_load, gradient_integral, gradient_load, region_integral,
};

use serde::{Deserialize, Serialize};

use crate::eigen::{self, Spectrum, Target};
use crate::error::{Error, Result};
use crate::geometry::{EdgeTag, Mesh, Region};
use crate::sparse::{dot, norm2, CsrMatrix, Ldl};
use crate::tolerances::Tolerances;

/// Per-phase coefficient, indexed by [`Region::index`].
pub type PhaseCoefficient = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    DirichletGamma,
    DirichletOuter,
    /// All Γ vertices share one unknown: the space {h : h|Γ = const}.
    ConstantOnGamma,
    PeriodicCell,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subdomain {
    All,
    Only(Region),
}

impl Subdomain {
    pub(crate) fn contains(self, r: Region) -> bool {
        match self {
            Subdomain::All => true,
            Subdomain::Only(x) => x == r,
        }
    }
}

/// Stiffness and mass forms on a subdomain together with a constraint space.
///
/// `stiffness_full`/`mass_full` act on vertex-indexed vectors; `stiffness` and
/// `mass` are their reductions onto the free degrees of freedom.
#[derive(Debug, Clone)]
pub struct AssembledForms {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub stiffness_full: CsrMatrix,
    pub mass_full: CsrMatrix,
    pub dof_of_vertex: Vec<Option<usize>>,
    pub active: Vec<bool>,
    pub n_free: usize,
    pub constraint: ConstraintKind,
    pub subdomain: Subdomain,
}

/// Assembles stiffness with a general symmetric tensor per phase.
pub fn assemble_tensor(
    mesh: &Mesh,
    tensor: [[[f64; 2]; 2]; 2],
    density: PhaseCoefficient,
    subdomain: Subdomain,
) -> Result<AssembledForms> {
    for r in [Region::Q0, Region::Q1] {
        let (a, d) = (tensor[r.index()], density[r.index()]);
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if !(a[0][0] > 0.0 && det > 0.0) {
            return Err(Error::NonPositiveCoefficient { region: r.name(), value: a[0][0].min(det) });
        }
        if !(d > 0.0) {
            return Err(Error::NonPositiveCoefficient { region: r.name(), value: d });
        }
    }
    let n = mesh.vertices.len();
    let mut kt = Vec::with_capacity(9 * mesh.triangles.len());
    let mut mt = Vec::with_capacity(9 * mesh.triangles.len());
    let mut active = vec![false; n];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let r = mesh.regions[t];
        if !subdomain.contains(r) {
            continue;
        }
        let p = tri.map(|i| mesh.vertices[i]);
        let (a, rho) = (tensor[r.index()], density[r.index()]);
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            g[i] = [(p[j][1] - p[k][1]) / (2.0 * area), (p[k][0] - p[j][0]) / (2.0 * area)];
        }
        for i in 0..3 {
            active[tri[i]] = true;
            let ag = [a[0][0] * g[i][0] + a[0][1] * g[i][1], a[1][0] * g[i][0] + a[1][1] * g[i][1]];
            for j in 0..3 {
                kt.push((tri[i], tri[j], area * (ag[0] * g[j][0] + ag[1] * g[j][1])));
                let m = if i == j { area / 6.0 } else { area / 12.0 };
                mt.push((tri[i], tri[j], rho * m));
            }
        }
    }
    let stiffness_full = CsrMatrix::from_triplets(n, n, &kt);
    let mass_full = CsrMatrix::from_triplets(n, n, &mt);
    let mut dof_of_vertex = vec![None; n];
    let mut n_free = 0;
    for (v, &a) in active.iter().enumerate() {
        if a {
            dof_of_vertex[v] = Some(n_free);
            n_free += 1;
        }
    }
    if n_free == 0 {
        return Err(Error::EmptyFreeSet);
    }
    let stiffness = stiffness_full.extract(&dof_of_vertex, n_free, &dof_of_vertex, n_free);
    let mass = mass_full.extract(&dof_of_vertex, n_free, &dof_of_vertex, n_free);
    Ok(AssembledForms {
        stiffness,
        mass,
        stiffness_full,
        mass_full,
        dof_of_vertex,
        active,
        n_free,
        constraint: ConstraintKind::None,
        subdomain,
    })
}

/// Assembles isotropic P1 forms: ∫ a ∇u·∇v and ∫ ρ u v per phase.
pub fn assemble(
    mesh: &Mesh,
    diffusion: PhaseCoefficient,
    density: PhaseCoefficient,
    subdomain: Subdomain,
) -> Result<AssembledForms> {
    for r in [Region::Q0, Region::Q1] {
        if !(diffusion[r.index()] > 0.0) {
            return Err(Error::NonPositiveCoefficient { region: r.name(), value: diffusion[r.index()] });
        }
    }
    let iso = |a: f64| [[a, 0.0], [0.0, a]];
    assemble_tensor(mesh, [iso(diffusion[0]), iso(diffusion[1])], density, subdomain)
}

/// Unit-coefficient forms restricted to one phase.
pub fn assemble_phase(mesh: &Mesh, region: Region) -> Result<AssembledForms> {
    assemble(mesh, [1.0, 1.0], [1.0, 1.0], Subdomain::Only(region))
}

pub fn apply_constraints(forms: &AssembledForms, kind: ConstraintKind, mesh: &Mesh) -> Result<AssembledForms> {
    let n = mesh.vertices.len();
    let active = &forms.active;
    let mut dof = vec![None; n];
    let mut n_free = 0;
    let number = |set: &mut Vec<Option<usize>>, skip: &dyn Fn(usize) -> bool, count: &mut usize| {
        for v in 0..n {
            if active[v] && !skip(v) {
                set[v] = Some(*count);
                *count += 1;
            }
        }
    };
    match kind {
        ConstraintKind::None => number(&mut dof, &|_| false, &mut n_free),
        ConstraintKind::DirichletGamma | ConstraintKind::ConstantOnGamma => {
            let gamma = mesh.gamma_vertices();
            if gamma.is_empty() {
                return Err(Error::MissingTag("Gamma"));
            }
            let mut on = vec![false; n];
            gamma.iter().for_each(|&v| on[v] = true);
            number(&mut dof, &|v| on[v], &mut n_free);
            if kind == ConstraintKind::ConstantOnGamma {
                for &v in &gamma {
                    if active[v] {
                        dof[v] = Some(n_free);
                    }
                }
                n_free += 1;
            }
        }
        ConstraintKind::DirichletOuter => {
            let outer = mesh.outer_vertices();
            if outer.is_empty() {
                return Err(Error::MissingTag("Outer"));
            }
            let mut on = vec![false; n];
            outer.iter().for_each(|&v| on[v] = true);
            number(&mut dof, &|v| on[v], &mut n_free);
        }
        ConstraintKind::PeriodicCell => {
            if !mesh.edges.iter().any(|e| matches!(e.tag, EdgeTag::PeriodicPair(_))) {
                return Err(Error::MissingTag("PeriodicPair"));
            }
            let rep = mesh.periodic_representatives();
            for v in 0..n {
                if active[v] && rep[v] == v {
                    dof[v] = Some(n_free);
                    n_free += 1;
                }
            }
            for v in 0..n {
                if active[v] && rep[v] != v {
                    dof[v] = dof[rep[v]];
                }
            }
        }
    }
    if n_free == 0 {
        return Err(Error::EmptyFreeSet);
    }
    let stiffness = forms.stiffness_full.extract(&dof, n_free, &dof, n_free);
    let mass = forms.mass_full.extract(&dof, n_free, &dof, n_free);
    Ok(AssembledForms {
        stiffness,
        mass,
        stiffness_full: forms.stiffness_full.clone(),
        mass_full: forms.mass_full.clone(),
        dof_of_vertex: dof,
        active: forms.active.clone(),
        n_free,
        constraint: kind,
        subdomain: forms.subdomain,
    })
}

impl AssembledForms {
    /// Vertex-indexed load → reduced load (merged DOFs accumulate).
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_free];
        for (v, d) in self.dof_of_vertex.iter().enumerate() {
            if let Some(d) = d {
                r[*d] += full[v];
            }
        }
        r
    }

    /// Reduced field → vertex field (constrained vertices get 0).
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        self.dof_of_vertex.iter().map(|d| d.map_or(0.0, |d| u[d])).collect()
    }

    /// Reduced field → vertex field with prescribed values on constrained vertices.
    pub fn expand_with(&self, u: &[f64], boundary: &[f64]) -> Vec<f64> {
        self.dof_of_vertex.iter().enumerate().map(|(v, d)| d.map_or(boundary[v], |d| u[d])).collect()
    }

    /// Vertex field → reduced field by sampling (inverse of `expand` on free vertices).
    pub fn sample(&self, full: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_free];
        for (v, d) in self.dof_of_vertex.iter().enumerate() {
            if let Some(d) = d {
                r[*d] = full[v];
            }
        }
        r
    }

    /// (K − σM) on full vertex vectors.
    pub fn apply_full(&self, sigma: f64, u: &[f64]) -> Vec<f64> {
        let mut y = self.stiffness_full.mul_vec(u);
        if sigma != 0.0 {
            let mu = self.mass_full.mul_vec(u);
            y.iter_mut().zip(&mu).for_each(|(a, b)| *a -= sigma * b);
        }
        y
    }

    /// Residual functional v ↦ a(u, v) − σ m(u, v) − f(v) as a vertex vector.
    /// On the boundary of the subdomain this is the discrete conormal flux
    /// ∫_∂ v ∂u/∂n of a solution of −div(a∇u) − σρu = f.
    pub fn flux(&self, sigma: f64, u: &[f64], f: &[f64]) -> Vec<f64> {
        let mut r = self.apply_full(sigma, u);
        r.iter_mut().zip(f).for_each(|(a, b)| *a -= b);
        for (v, a) in self.active.iter().enumerate() {
            if !a {
                r[v] = 0.0;
            }
        }
        r
    }

    pub fn is_singular_neumann(&self) -> bool {
        matches!(self.constraint, ConstraintKind::PeriodicCell | ConstraintKind::None)
    }

    /// ∫ ρ u over the subdomain for a vertex field.
    pub fn weighted_integral(&self, u: &[f64]) -> f64 {
        let ones: Vec<f64> = self.active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
        self.mass_full.bilinear(&ones, u)
    }

    pub fn dump<W: std::io::Write>(&self, mut w: W, which: MatrixKind) -> std::io::Result<()> {
        let m = match which {
            MatrixKind::Stiffness => &self.stiffness,
            MatrixKind::Mass => &self.mass,
        };
        for (i, j, v) in m.triplets() {
            writeln!(w, "{i} {j} {}", crate::fmt17(v))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Stiffness,
    Mass,
}

/// Solves K u = rhs on the free DOFs.
///
/// For Neumann-type spaces (periodic or unconstrained) K annihilates constants:
/// the compatibility defect Σ rhs must be within `tol.solvability`, and the
/// returned solution has zero ρ-weighted mean.
pub fn solve_linear(forms: &AssembledForms, rhs: &[f64], tol: &Tolerances) -> Result<Vec<f64>> {
    if forms.is_singular_neumann() {
        solve_neumann(forms, rhs, tol).map(|(u, _)| u)
    } else {
        solve_shifted(forms, 0.0, rhs, tol)
    }
}

/// Neumann solve; also returns the compatibility defect Σ rhs.
pub fn solve_neumann(forms: &AssembledForms, rhs: &[f64], tol: &Tolerances) -> Result<(Vec<f64>, f64)> {
    let n = forms.n_free;
    let defect: f64 = rhs.iter().sum();
    if defect.abs() > tol.solvability {
        return Err(Error::Incompatible { defect });
    }
    let ones = vec![1.0; n];
    let m1 = forms.mass.mul_vec(&ones);
    let vol: f64 = m1.iter().sum();
    let b: Vec<f64> = rhs.iter().zip(&m1).map(|(r, w)| r - defect * w / vol).collect();
    // ground the last DOF
    let map: Vec<Option<usize>> = (0..n).map(|i| if i + 1 < n { Some(i) } else { None }).collect();
    let k = forms.stiffness.extract(&map, n - 1, &map, n - 1);
    let f = Ldl::factor(&k)?;
    let mut u = f.solve_refined(&k, &b[..n - 1], 1);
    u.push(0.0);
    let mean = dot(&m1, &u) / vol;
    u.iter_mut().for_each(|x| *x -= mean);
    let r: Vec<f64> = forms.stiffness.mul_vec(&u).iter().zip(&b).map(|(a, b)| a - b).collect();
    let scale = norm2(&b);
    if scale > 0.0 && norm2(&r) > tol.linear * scale {
        return Err(Error::LinearResidual { residual: norm2(&r) / scale, tol: tol.linear });
    }
    Ok((u, defect))
}

/// Solves (K − σM) u = rhs on the free DOFs (nonsingular operator).
pub fn solve_shifted(forms: &AssembledForms, sigma: f64, rhs: &[f64], tol: &Tolerances) -> Result<Vec<f64>> {
    let a = if sigma == 0.0 { forms.stiffness.clone() } else { forms.stiffness.add_scaled(-sigma, &forms.mass) };
    let f = Ldl::factor(&a)?;
    let u = f.solve_refined(&a, rhs, 2);
    let r: Vec<f64> = a.mul_vec(&u).iter().zip(rhs).map(|(x, y)| x - y).collect();
    let scale = norm2(rhs);
    if scale > 0.0 && norm2(&r) > tol.linear * scale {
        return Err(Error::LinearResidual { residual: norm2(&r) / scale, tol: tol.linear });
    }
    Ok(u)
}

/// Solves (K − σM) u = f with u prescribed (`boundary`, vertex-indexed) on the
/// constrained vertices of the subdomain; `f` is a vertex-indexed load.
/// Returns the vertex field.
pub fn solve_dirichlet(
    forms: &AssembledForms,
    sigma: f64,
    f: &[f64],
    boundary: &[f64],
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    let lift: Vec<f64> = forms
        .dof_of_vertex
        .iter()
        .enumerate()
        .map(|(v, d)| if d.is_none() && forms.active[v] { boundary[v] } else { 0.0 })
        .collect();
    let al = forms.apply_full(sigma, &lift);
    let full: Vec<f64> = f.iter().zip(&al).map(|(a, b)| a - b).collect();
    let rhs = forms.restrict(&full);
    let u = solve_shifted(forms, sigma, &rhs, tol)?;
    Ok(forms.expand_with(&u, &lift))
}

/// Lowest `count` eigenpairs above `shift` of K v = λ M v on the free DOFs.
pub fn solve_eigen(forms: &AssembledForms, count: usize, shift: Option<f64>, tol: &Tolerances) -> Result<Spectrum> {
    let target = match shift {
        Some(s) => Target::Above(s),
        None => Target::Lowest,
    };
    eigen::solve(&forms.stiffness, &forms.mass, count, target, tol)
}

/// Solves (K − σM) u = rhs on the M-orthogonal complement of `deflate`
/// (reduced, M-orthonormal vectors spanning the eigenspace at σ).
///
/// The component of `rhs` along the eigenspace is dropped, so the system is
/// solvable even when σ is an eigenvalue. `gap` is the distance from σ to the
/// nearest eigenvalue outside the deflated space: the iteration factors
/// K − (σ − gap/10)M and contracts by at most 1/9 per step.
pub fn solve_shifted_deflated(
    forms: &AssembledForms,
    sigma: f64,
    rhs: &[f64],
    deflate: &[Vec<f64>],
    gap: f64,
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    let project_load = |f: &mut Vec<f64>| {
        for phi in deflate {
            let mphi = forms.mass.mul_vec(phi);
            let c = dot(phi, f);
            f.iter_mut().zip(&mphi).for_each(|(x, m)| *x -= c * m);
        }
    };
    let project_field = |u: &mut Vec<f64>| {
        for phi in deflate {
            let c = forms.mass.bilinear(phi, u);
            u.iter_mut().zip(phi).for_each(|(x, p)| *x -= c * p);
        }
    };
    let mut b = rhs.to_vec();
    project_load(&mut b);
    let a = forms.stiffness.add_scaled(-sigma, &forms.mass);
    let tau = 0.1 * gap;
    let shifted = forms.stiffness.add_scaled(-(sigma - tau), &forms.mass);
    let f = Ldl::factor(&shifted)?;
    let scale = norm2(&b);
    let mut u = vec![0.0; forms.n_free];
    if scale == 0.0 {
        return Ok(u);
    }
    let mut res = f64::INFINITY;
    for _ in 0..80 {
        let au = a.mul_vec(&u);
        let mut r: Vec<f64> = b.iter().zip(&au).map(|(x, y)| x - y).collect();
        project_load(&mut r);
        res = norm2(&r) / scale;
        if res <= tol.linear {
            return Ok(u);
        }
        let mut du = f.solve(&r);
        project_field(&mut du);
        u.iter_mut().zip(&du).for_each(|(x, d)| *x += d);
    }
    Err(Error::LinearResidual { residual: res, tol: tol.linear })
}
