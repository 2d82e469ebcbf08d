//! Inclusion-scale spectral data: Dirichlet spectrum of Q₀, the η field,
//! β(λ) and B(λ) = λ⟨η⟩, the limit spectrum and its case classification.

use serde::{Deserialize, Serialize};

use crate::bessel;
use crate::eigen::Spectrum;
use crate::error::{Error, Result};
use crate::fem::{self, AssembledForms, ConstraintKind};
use crate::geometry::{build_cell_mesh, CellGeometry, Inclusion, Mesh, Region};
use crate::tolerances::Tolerances;

/// Cell mesh with the finite-element spaces every cell problem needs.
#[derive(Debug, Clone)]
pub struct CellSpaces {
    pub geometry: CellGeometry,
    pub mesh: Mesh,
    /// Unit-coefficient forms on Q₀ with zero trace on Γ.
    pub q0: AssembledForms,
    /// Unit-coefficient forms on Q₁ with periodic identification.
    pub q1: AssembledForms,
    /// Mesh areas of Q₀ and Q₁.
    pub area: [f64; 2],
}

impl CellSpaces {
    pub fn new(geometry: &CellGeometry, h: f64) -> Result<Self> {
        Self::from_mesh(geometry, build_cell_mesh(geometry, h)?)
    }

    pub fn from_mesh(geometry: &CellGeometry, mesh: Mesh) -> Result<Self> {
        let q0 = fem::apply_constraints(&fem::assemble_phase(&mesh, Region::Q0)?, ConstraintKind::DirichletGamma, &mesh)?;
        let q1 = fem::apply_constraints(&fem::assemble_phase(&mesh, Region::Q1)?, ConstraintKind::PeriodicCell, &mesh)?;
        let area = [mesh.region_area(Region::Q0), mesh.region_area(Region::Q1)];
        Ok(CellSpaces { geometry: *geometry, mesh, q0, q1, area })
    }

    pub fn h(&self) -> f64 {
        self.mesh.h
    }

    /// ∫_{Q₀} u for a vertex field.
    pub fn integral_q0(&self, u: &[f64]) -> f64 {
        self.q0.weighted_integral(u)
    }

    /// ∫_{Q₀} u v for vertex fields.
    pub fn inner_q0(&self, u: &[f64], v: &[f64]) -> f64 {
        masked_bilinear(&self.q0, u, v)
    }

    /// Vertex field equal to 1 on Γ and 0 elsewhere.
    pub fn gamma_indicator(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.mesh.vertices.len()];
        for v in self.mesh.gamma_vertices() {
            g[v] = 1.0;
        }
        g
    }
}

/// uᵀ M v with the mass of the subdomain of `forms`.
pub(crate) fn masked_bilinear(forms: &AssembledForms, u: &[f64], v: &[f64]) -> f64 {
    forms.mass_full.bilinear(u, v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletCluster {
    pub indices: Vec<usize>,
    /// Mean of the member eigenvalues.
    pub value: f64,
    /// ‖(⟨φ_i⟩)_i‖ over the cluster: basis independent.
    pub mean_norm: f64,
    pub zero_mean: bool,
}

/// Lowest Dirichlet eigenpairs of −Δ on Q₀.
#[derive(Debug, Clone)]
pub struct DirichletSpectrum {
    pub values: Vec<f64>,
    /// L²(Q₀)-orthonormal vertex fields (zero on Γ and in Q₁). Inside a
    /// nonzero-mean cluster the basis is rotated so only the first member
    /// carries mean.
    pub vectors: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub clusters: Vec<DirichletCluster>,
    pub residuals: Vec<f64>,
    pub area_q0: f64,
    /// [∫R₀, ∫R₀²] for the torsion function −ΔR₀ = 1, R₀|Γ = 0; these equal
    /// Σ⟨φ_j⟩²/λ_j and Σ⟨φ_j⟩²/λ_j² over all modes.
    pub torsion_moments: [f64; 2],
}

impl DirichletSpectrum {
    /// Largest λ below which the spectrum is known to be complete.
    pub fn resolved(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Nonzero-mean cluster values: the poles of β.
    pub fn poles(&self) -> Vec<f64> {
        self.clusters.iter().filter(|c| !c.zero_mean).map(|c| c.value).collect()
    }

    pub fn zero_mean_clusters(&self) -> impl Iterator<Item = &DirichletCluster> {
        self.clusters.iter().filter(|c| c.zero_mean)
    }

    /// Partial Parseval sums Σ_{j≤J} ⟨φ_j⟩² for J = 1..len.
    pub fn parseval_partial_sums(&self) -> Vec<f64> {
        self.means
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m * m;
                Some(*acc)
            })
            .collect()
    }

    fn cluster_of(&self, i: usize) -> &DirichletCluster {
        self.clusters.iter().find(|c| c.indices.contains(&i)).unwrap()
    }
}

pub fn dirichlet_spectrum(spaces: &CellSpaces, modes: usize, tol: &Tolerances) -> Result<DirichletSpectrum> {
    if modes == 0 {
        return Err(Error::InvalidArgument("at least one Dirichlet mode is required".into()));
    }
    let s: Spectrum = fem::solve_eigen(&spaces.q0, modes, None, tol)?;
    let mut vectors: Vec<Vec<f64>> = s.vectors.iter().map(|v| spaces.q0.expand(v)).collect();
    let mut means: Vec<f64> = vectors.iter().map(|v| spaces.integral_q0(v)).collect();
    let mut clusters = Vec::new();
    for idx in &s.clusters {
        let m: Vec<f64> = idx.iter().map(|&i| means[i]).collect();
        let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
        let zero_mean = norm <= tol.mean;
        if !zero_mean && idx.len() > 1 {
            let rot = basis_with_first(&m);
            let old: Vec<Vec<f64>> = idx.iter().map(|&i| vectors[i].clone()).collect();
            for (r, &i) in idx.iter().enumerate() {
                let mut v = vec![0.0; old[0].len()];
                for (c, o) in old.iter().enumerate() {
                    crate::sparse::axpy(rot[r][c], o, &mut v);
                }
                means[i] = spaces.integral_q0(&v);
                vectors[i] = v;
            }
        }
        let value = idx.iter().map(|&i| s.values[i]).sum::<f64>() / idx.len() as f64;
        clusters.push(DirichletCluster { indices: idx.clone(), value, mean_norm: norm, zero_mean });
    }
    Ok(DirichletSpectrum {
        values: s.values,
        vectors,
        means,
        clusters,
        residuals: s.residuals,
        area_q0: spaces.area[0],
        torsion_moments: torsion_moments(&spaces.q0, tol)?,
    })
}

fn torsion_moments(q0: &AssembledForms, tol: &Tolerances) -> Result<[f64; 2]> {
    // ∫ψ_i for interior hat functions
    let m1 = q0.restrict(&q0.mass_full.mul_vec(&vec![1.0; q0.mass_full.n_rows()]));
    let r = fem::solve_shifted(q0, 0.0, &m1, tol)?;
    Ok([crate::sparse::dot(&m1, &r), q0.mass.bilinear(&r, &r)])
}

/// Orthonormal basis of Rᵏ (rows) whose first row is m/‖m‖.
fn basis_with_first(m: &[f64]) -> Vec<Vec<f64>> {
    let k = m.len();
    let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut rows = vec![m.iter().map(|x| x / norm).collect::<Vec<f64>>()];
    for e in 0..k {
        if rows.len() == k {
            break;
        }
        let mut v = vec![0.0; k];
        v[e] = 1.0;
        for _ in 0..2 {
            for r in &rows {
                let c: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            rows.push(v.iter().map(|x| x / n).collect());
        }
    }
    rows
}

/// Solution of −Δη = λη in Q₀, η = 1 on Γ.
#[derive(Debug, Clone)]
pub struct Eta {
    pub lambda: f64,
    /// Vertex field, zero in Q₁ away from Γ.
    pub field: Vec<f64>,
    /// ⟨η⟩ = ∫_{Q₀} η.
    pub mean: f64,
    /// Zero-mean Dirichlet eigenvalues deflated from the solve.
    pub deflated: Vec<f64>,
}

impl Eta {
    /// B(λ) = λ⟨η⟩.
    pub fn b(&self) -> f64 {
        self.lambda * self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaBackend {
    /// Σ over the first `modes` Dirichlet modes plus a Parseval tail estimate.
    Series { modes: usize },
    /// One Helmholtz solve for η per λ.
    Direct,
    /// Closed form for a disk (dimension 2) or ball (dimension 3).
    AnalyticBall { radius: f64, dimension: usize },
}

impl BetaBackend {
    pub fn name(&self) -> &'static str {
        match self {
            BetaBackend::Series { .. } => "series",
            BetaBackend::Direct => "direct",
            BetaBackend::AnalyticBall { .. } => "analytic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaValue {
    pub lambda: f64,
    pub beta: f64,
    /// B(λ) = β(λ) − |Q₁|λ.
    pub b: f64,
    /// Guaranteed enclosure of B for the series backend.
    pub b_bounds: Option<[f64; 2]>,
}

/// 2D disk: B(λ) = 2πa√λ J₁(a√λ)/J₀(a√λ); 3D ball: B(λ) = 4πa(1 − a√λ cot(a√λ)).
pub fn analytic_ball_b(radius: f64, dimension: usize, lambda: f64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("analytic backend needs lambda >= 0".into()));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let k = lambda.sqrt();
    let x = k * radius;
    match dimension {
        2 => {
            if x > bessel::MAX_ARG {
                return Err(Error::InvalidArgument(format!("a*sqrt(lambda) = {x} beyond the Bessel series range")));
            }
            Ok(2.0 * std::f64::consts::PI * radius * k * bessel::j1(x) / bessel::j0(x))
        }
        3 => Ok(4.0 * std::f64::consts::PI * radius * (1.0 - x * x.cos() / x.sin())),
        d => Err(Error::InvalidArgument(format!("analytic ball backend supports dimension 2 or 3, got {d}"))),
    }
}

/// Nonzero-mean Dirichlet eigenvalues of the ball up to `lambda_max`.
pub fn analytic_ball_poles(radius: f64, dimension: usize, lambda_max: f64) -> Result<Vec<f64>> {
    let xmax = lambda_max.max(0.0).sqrt() * radius;
    match dimension {
        2 => {
            let mut out = Vec::new();
            let mut n = 1;
            loop {
                let z = *bessel::jn_zeros(0, n)?.last().unwrap();
                if z > xmax {
                    return Ok(out);
                }
                out.push((z / radius).powi(2));
                n += 1;
            }
        }
        3 => Ok((1..)
            .map(|j| (j as f64 * std::f64::consts::PI / radius).powi(2))
            .take_while(|&l| l <= lambda_max)
            .collect()),
        d => Err(Error::InvalidArgument(format!("analytic ball backend supports dimension 2 or 3, got {d}"))),
    }
}

/// Zero-mean Dirichlet eigenvalues of the disk, with multiplicity 2 each.
pub fn analytic_disk_zero_mean(radius: f64, lambda_max: f64) -> Result<Vec<(f64, usize)>> {
    let xmax = lambda_max.max(0.0).sqrt() * radius;
    let mut out = Vec::new();
    for n in 1.. {
        let mut k = 1;
        let mut any = false;
        loop {
            let z = *bessel::jn_zeros(n, k)?.last().unwrap();
            if z > xmax {
                break;
            }
            out.push(((z / radius).powi(2), 2));
            any = true;
            k += 1;
        }
        if !any {
            break;
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    /// Root of B(λ) = 0.
    Root,
    /// Zero-mean Dirichlet eigenvalue.
    ZeroMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEntry {
    pub value: f64,
    pub multiplicity: usize,
    pub kind: EntryKind,
    /// Pole-separated bracket the root was bisected in.
    pub bracket: Option<[f64; 2]>,
    pub bracket_id: Option<usize>,
    /// B at the bracket ends (sign certificate).
    pub certificate: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSpectrum {
    pub entries: Vec<LimitEntry>,
    pub lambda_max: f64,
    pub backend: BetaBackend,
}

impl LimitSpectrum {
    /// Values repeated by multiplicity, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|e| std::iter::repeat(e.value).take(e.multiplicity)).collect()
    }

    /// Nonzero roots of B, ascending: μ₂, μ₃, …
    pub fn roots(&self) -> Vec<f64> {
        self.entries.iter().filter(|e| e.kind == EntryKind::Root).map(|e| e.value).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum CaseTag {
    /// λ₀ off the Dirichlet spectrum.
    A,
    /// λ₀ on a cluster with a nonzero-mean eigenfunction.
    BI { cluster: f64 },
    /// λ₀ on an all-zero-mean cluster; `b_vanishes` when also B(λ₀) = 0.
    BII { cluster: f64, multiplicity: usize, b: f64, b_vanishes: bool },
}

impl CaseTag {
    pub fn label(&self) -> &'static str {
        match self {
            CaseTag::A => "a",
            CaseTag::BI { .. } => "b-i",
            CaseTag::BII { .. } => "b-ii",
        }
    }
}

/// Inclusion spectral data bundled with its cell discretization.
#[derive(Debug, Clone)]
pub struct Micro {
    pub spaces: CellSpaces,
    pub spectrum: DirichletSpectrum,
    pub tol: Tolerances,
}

impl Micro {
    pub fn new(spaces: CellSpaces, modes: usize, tol: &Tolerances) -> Result<Self> {
        let spectrum = dirichlet_spectrum(&spaces, modes, tol)?;
        Ok(Micro { spaces, spectrum, tol: *tol })
    }

    fn relative_distance(&self, lambda: f64, value: f64) -> f64 {
        (lambda - value).abs() / value.abs().max(1.0)
    }

    fn check_resolved(&self, lambda: f64) -> Result<()> {
        let top = self.spectrum.resolved();
        if lambda >= top * (1.0 - self.tol.pole) {
            return Err(Error::Unresolved { lambda_max: lambda, resolved: top });
        }
        Ok(())
    }

    fn check_pole(&self, lambda: f64) -> Result<()> {
        for p in self.spectrum.poles() {
            if self.relative_distance(lambda, p) <= self.tol.pole {
                return Err(Error::Pole { lambda, pole: p });
            }
        }
        Ok(())
    }

    /// η at λ. On a zero-mean cluster the solve is restricted to the
    /// complement of that eigenspace (⟨η⟩ is unaffected by the choice).
    pub fn eta(&self, lambda: f64) -> Result<Eta> {
        self.check_resolved(lambda)?;
        self.check_pole(lambda)?;
        let sp = &self.spaces;
        let boundary = sp.gamma_indicator();
        let zero = vec![0.0; boundary.len()];
        let on: Vec<&DirichletCluster> = self
            .spectrum
            .zero_mean_clusters()
            .filter(|c| self.relative_distance(lambda, c.value) <= self.tol.pole)
            .collect();
        let field = if on.is_empty() {
            fem::solve_dirichlet(&sp.q0, lambda, &zero, &boundary, &self.tol)?
        } else {
            let phis: Vec<Vec<f64>> =
                on.iter().flat_map(|c| c.indices.iter().map(|&i| sp.q0.sample(&self.spectrum.vectors[i]))).collect();
            let gap = self
                .spectrum
                .clusters
                .iter()
                .filter(|c| !on.iter().any(|o| o.indices == c.indices))
                .map(|c| (c.value - lambda).abs())
                .fold(f64::INFINITY, f64::min);
            let lift_load = sp.q0.apply_full(lambda, &boundary_lift(&sp.q0, &boundary));
            let rhs: Vec<f64> = sp.q0.restrict(&lift_load.iter().map(|x| -x).collect::<Vec<f64>>());
            let u = fem::solve_shifted_deflated(&sp.q0, lambda, &rhs, &phis, gap, &self.tol)?;
            sp.q0.expand_with(&u, &boundary_lift(&sp.q0, &boundary))
        };
        let mean = sp.integral_q0(&field);
        Ok(Eta { lambda, field, mean, deflated: on.iter().map(|c| c.value).collect() })
    }

    pub fn beta(&self, backend: BetaBackend, lambda: f64) -> Result<BetaValue> {
        match backend {
            BetaBackend::Direct => {
                let b = self.eta(lambda)?.b();
                Ok(BetaValue { lambda, beta: b + self.spaces.area[1] * lambda, b, b_bounds: None })
            }
            BetaBackend::Series { modes } => self.beta_series(modes, lambda),
            BetaBackend::AnalyticBall { radius, dimension } => {
                let poles = analytic_ball_poles(radius, dimension, lambda * (1.0 + 2.0 * self.tol.pole) + 1.0)?;
                for p in poles {
                    if self.relative_distance(lambda, p) <= self.tol.pole {
                        return Err(Error::Pole { lambda, pole: p });
                    }
                }
                let b = analytic_ball_b(radius, dimension, lambda)?;
                let q1 = 1.0 - ball_volume(radius, dimension);
                Ok(BetaValue { lambda, beta: b + q1 * lambda, b, b_bounds: None })
            }
        }
    }

    /// B(λ) = λ|Q₀| + λ² Σ_j ⟨φ_j⟩²/(λ_j − λ) summed over the first J modes.
    /// The tail over j > J is expanded as S₁ + λS₂ + λ²Σ⟨φ_j⟩²/(λ_j²(λ_j − λ))
    /// with S₁, S₂ the tails of Σ⟨φ_j⟩²/λ_j and Σ⟨φ_j⟩²/λ_j², known exactly
    /// from the torsion function; the last sum lies in [0, S₂/(λ_{J+1} − λ)].
    /// The value is the midpoint of the resulting enclosure.
    fn beta_series(&self, modes: usize, lambda: f64) -> Result<BetaValue> {
        let sp = &self.spectrum;
        if modes == 0 || modes > sp.values.len() {
            return Err(Error::InvalidArgument(format!(
                "series backend needs 1..={} modes, got {modes}",
                sp.values.len()
            )));
        }
        // never cut a cluster
        let mut j = modes;
        if j < sp.values.len() {
            j = sp.cluster_of(j).indices[0];
        }
        if j == 0 {
            j = sp.cluster_of(0).indices.len();
        }
        let next = if j < sp.values.len() { sp.values[j] } else { sp.resolved() };
        if lambda >= next * (1.0 - self.tol.pole) {
            return Err(Error::Unresolved { lambda_max: lambda, resolved: next });
        }
        self.check_pole(lambda)?;
        let l2 = lambda * lambda;
        let mut b = lambda * sp.area_q0;
        let [mut s1, mut s2] = sp.torsion_moments;
        for i in 0..j {
            let m2 = sp.means[i] * sp.means[i];
            b += l2 * m2 / (sp.values[i] - lambda);
            s1 -= m2 / sp.values[i];
            s2 -= m2 / (sp.values[i] * sp.values[i]);
        }
        let (s1, s2) = (s1.max(0.0), s2.max(0.0));
        let lo = b + l2 * (s1 + lambda * s2);
        let width = l2 * lambda * lambda * s2 / (next - lambda);
        let bounds = if width >= 0.0 { [lo, lo + width] } else { [lo + width, lo] };
        let b = 0.5 * (bounds[0] + bounds[1]);
        Ok(BetaValue { lambda, beta: b + self.spaces.area[1] * lambda, b, b_bounds: Some(bounds) })
    }

    /// Nonzero-mean poles up to `lambda_max` for the backend.
    pub fn poles(&self, backend: BetaBackend, lambda_max: f64) -> Result<Vec<f64>> {
        match backend {
            BetaBackend::AnalyticBall { radius, dimension } => analytic_ball_poles(radius, dimension, lambda_max),
            _ => {
                self.check_resolved(lambda_max)?;
                Ok(self.spectrum.poles().into_iter().filter(|&p| p <= lambda_max).collect())
            }
        }
    }

    /// Roots of B in (0, λ_max] plus zero-mean Dirichlet eigenvalues, with μ₁ = 0.
    pub fn limit_spectrum(&self, backend: BetaBackend, lambda_max: f64) -> Result<LimitSpectrum> {
        let poles = self.poles(backend, lambda_max)?;
        let b = |l: f64| self.beta(backend, l).map(|v| v.b);
        let mut entries =
            vec![LimitEntry { value: 0.0, multiplicity: 1, kind: EntryKind::Root, bracket: None, bracket_id: None, certificate: None }];
        let pad = 2.0 * self.tol.pole;
        for (id, &p) in poles.iter().enumerate() {
            let lo = p * (1.0 + pad);
            let hi = poles.get(id + 1).map_or(lambda_max, |&q| q * (1.0 - pad));
            if hi <= lo {
                continue;
            }
            let (blo, bhi) = (b(lo)?, b(hi)?);
            if blo >= 0.0 {
                return Err(Error::Numerical(format!(
                    "B({lo}) = {blo} is not negative right of the pole {p}: root unresolved within the pole tolerance"
                )));
            }
            if bhi <= 0.0 {
                if id + 1 < poles.len() {
                    return Err(Error::Numerical(format!(
                        "B({hi}) = {bhi} is not positive left of the pole {}: root unresolved",
                        poles[id + 1]
                    )));
                }
                // the last bracket is cut by λ_max before the root
                continue;
            }
            let (mut a, mut c) = (lo, hi);
            for _ in 0..60 {
                let mid = 0.5 * (a + c);
                if b(mid)? < 0.0 {
                    a = mid;
                } else {
                    c = mid;
                }
            }
            entries.push(LimitEntry {
                value: 0.5 * (a + c),
                multiplicity: 1,
                kind: EntryKind::Root,
                bracket: Some([lo, hi]),
                bracket_id: Some(id),
                certificate: Some([blo, bhi]),
            });
        }
        let zero_mean: Vec<(f64, usize)> = match backend {
            BetaBackend::AnalyticBall { radius, dimension: 2 } => analytic_disk_zero_mean(radius, lambda_max)?,
            BetaBackend::AnalyticBall { .. } => {
                return Err(Error::InvalidArgument("zero-mean ball eigenvalues are only tabulated in dimension 2".into()))
            }
            _ => self
                .spectrum
                .zero_mean_clusters()
                .filter(|c| c.value <= lambda_max)
                .map(|c| (c.value, c.indices.len()))
                .collect(),
        };
        for (value, multiplicity) in zero_mean {
            entries.push(LimitEntry {
                value,
                multiplicity,
                kind: EntryKind::ZeroMean,
                bracket: None,
                bracket_id: None,
                certificate: None,
            });
        }
        entries.sort_by(|a, b| a.value.total_cmp(&b.value));
        Ok(LimitSpectrum { entries, lambda_max, backend })
    }

    /// Spectrum of −Δ on {h ∈ H¹(Q₀): h|Γ = const}.
    pub fn zeta_spectrum(&self, count: usize) -> Result<Spectrum> {
        let sp = &self.spaces;
        let forms = fem::apply_constraints(&sp.q0, ConstraintKind::ConstantOnGamma, &sp.mesh)?;
        let mut s = fem::solve_eigen(&forms, count, None, &self.tol)?;
        s.vectors = s.vectors.iter().map(|v| forms.expand(v)).collect();
        Ok(s)
    }

    /// Case (a)/(b-i)/(b-ii) of λ₀ relative to the Dirichlet spectrum.
    /// `b_zero` is the relative threshold |B(λ₀)| ≤ b_zero·λ₀|Q₀| for the
    /// (b-ii) sub-flag.
    pub fn classify(&self, lambda0: f64, b_zero: f64) -> Result<CaseTag> {
        self.check_resolved(lambda0)?;
        let nearest = self
            .spectrum
            .clusters
            .iter()
            .min_by(|a, b| (a.value - lambda0).abs().total_cmp(&(b.value - lambda0).abs()))
            .unwrap();
        let d = self.relative_distance(lambda0, nearest.value);
        if d <= self.tol.pole {
            if !nearest.zero_mean {
                return Ok(CaseTag::BI { cluster: nearest.value });
            }
            let b = self.eta(lambda0)?.b();
            return Ok(CaseTag::BII {
                cluster: nearest.value,
                multiplicity: nearest.indices.len(),
                b,
                b_vanishes: b.abs() <= b_zero * lambda0.abs() * self.spaces.area[0],
            });
        }
        if d <= 10.0 * self.tol.pole {
            return Err(Error::Ambiguous { lambda: lambda0, cluster: nearest.value });
        }
        Ok(CaseTag::A)
    }
}

fn ball_volume(radius: f64, dimension: usize) -> f64 {
    match dimension {
        3 => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        _ => std::f64::consts::PI * radius * radius,
    }
}

/// Boundary values on constrained vertices of the subdomain, zero elsewhere.
fn boundary_lift(forms: &AssembledForms, boundary: &[f64]) -> Vec<f64> {
    forms
        .dof_of_vertex
        .iter()
        .enumerate()
        .map(|(v, d)| if d.is_none() && forms.active[v] { boundary[v] } else { 0.0 })
        .collect()
}

/// Short description of the inclusion for reports.
pub fn inclusion_label(geom: &CellGeometry) -> String {
    match geom.inclusion {
        Inclusion::Disk { radius } => format!("disk(a={radius})"),
        Inclusion::Ellipse { semi_x, semi_y } => format!("ellipse({semi_x}x{semi_y})"),
    }
}

/// `n` points spread over [lo, hi] whose relative distance to every pole is
/// at least `rel`.
pub fn pole_free_grid(poles: &[f64], lo: f64, hi: f64, n: usize, rel: f64) -> Result<Vec<f64>> {
    let m = 40 * n.max(1);
    let ok: Vec<f64> = (0..=m)
        .map(|i| lo + (hi - lo) * i as f64 / m as f64)
        .filter(|l| poles.iter().all(|p| (l - p).abs() >= rel * p.abs()))
        .collect();
    if ok.len() < n {
        return Err(Error::InvalidArgument(format!("only {} pole-free points in [{lo}, {hi}]", ok.len())));
    }
    if n == 1 {
        return Ok(vec![ok[0]]);
    }
    Ok((0..n).map(|i| ok[i * (ok.len() - 1) / (n - 1)]).collect())
}
