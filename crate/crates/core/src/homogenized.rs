//! Homogenized Dirichlet problem on Ω, the map ν ↦ λ₁, two-term predictions
//! Λ_ε = λ₀ + ελ₁ and the gap intervals of the limit problem.

use serde::{Deserialize, Serialize};

use crate::cell::{CellTensors, HomogenizedMatrix};
use crate::eigen::Spectrum;
use crate::error::{Error, Result};
use crate::fem::{self, ConstraintKind, Subdomain};
use crate::geometry::Mesh;
use crate::micro::{BetaBackend, CaseTag, EntryKind, Micro};
use crate::tolerances::Tolerances;

/// Eigenpairs of −div A∇v = νv, v|∂Ω = 0.
#[derive(Debug, Clone)]
pub struct MacroSpectrum {
    pub values: Vec<f64>,
    /// L²(Ω)-orthonormal vertex fields.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub clusters: Vec<Vec<usize>>,
    pub h: f64,
}

impl MacroSpectrum {
    /// (index from 1, mean value, multiplicity) per cluster.
    pub fn levels(&self) -> Vec<(usize, f64, usize)> {
        self.clusters
            .iter()
            .enumerate()
            .map(|(i, c)| (i + 1, c.iter().map(|&k| self.values[k]).sum::<f64>() / c.len() as f64, c.len()))
            .collect()
    }
}

/// Solves the homogenized problem with tensor `a` on any mesh of Ω; the phase
/// tags of the mesh are ignored.
pub fn macro_spectrum(a: &HomogenizedMatrix, mesh: &Mesh, count: usize, tol: &Tolerances) -> Result<MacroSpectrum> {
    let forms = fem::assemble_tensor(mesh, [a.a, a.a], [1.0, 1.0], Subdomain::All)?;
    let forms = fem::apply_constraints(&forms, ConstraintKind::DirichletOuter, mesh)?;
    let Spectrum { values, vectors, residuals, clusters, .. } = fem::solve_eigen(&forms, count, None, tol)?;
    Ok(MacroSpectrum {
        values,
        vectors: vectors.iter().map(|v| forms.expand(v)).collect(),
        residuals,
        clusters,
        h: mesh.h,
    })
}

/// λ₁ = C⁻¹(ν − λ₀(|Q₁| + ∫P)).
pub fn lambda1_case_a(nu: f64, tensors: &CellTensors) -> Result<f64> {
    if !(tensors.c > 0.0) {
        return Err(Error::Numerical(format!("coupling constant C = {} is not positive", tensors.c)));
    }
    Ok(tensors.lambda1(nu))
}

/// One λ₀ of the limit spectrum with what is needed to produce λ₁.
#[derive(Debug, Clone)]
pub enum Branch {
    /// λ₀ a root of B: λ₁ follows from each homogenized eigenvalue.
    A { tensors: CellTensors },
    /// λ₀ a Dirichlet eigenvalue with λ₁ from the inclusion problem alone.
    B { lambda0: f64, lambda1: f64, tag: CaseTag },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub lambda0: f64,
    pub case: String,
    /// Index of the homogenized level (from 1); none for case (b).
    pub nu_index: Option<usize>,
    pub nu: Option<f64>,
    pub multiplicity: usize,
    pub lambda1: f64,
    pub epsilon: f64,
    pub lambda_eps: f64,
    /// Cell mesh parameter of the tensors (0 when extrapolated).
    pub cell_h: f64,
    pub macro_h: Option<f64>,
}

/// Cartesian assembly of branches × homogenized levels × ε.
pub fn predictions(branches: &[Branch], spectrum: &MacroSpectrum, levels: usize, eps: &[f64]) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for branch in branches {
        match branch {
            Branch::A { tensors } => {
                for (index, nu, multiplicity) in spectrum.levels().into_iter().take(levels) {
                    let lambda1 = lambda1_case_a(nu, tensors)?;
                    for &e in eps {
                        out.push(Prediction {
                            lambda0: tensors.lambda0,
                            case: CaseTag::A.label().into(),
                            nu_index: Some(index),
                            nu: Some(nu),
                            multiplicity,
                            lambda1,
                            epsilon: e,
                            lambda_eps: tensors.lambda0 + e * lambda1,
                            cell_h: tensors.h,
                            macro_h: Some(spectrum.h),
                        });
                    }
                }
            }
            Branch::B { lambda0, lambda1, tag } => {
                let multiplicity = match tag {
                    CaseTag::BII { multiplicity, .. } => *multiplicity,
                    _ => 1,
                };
                for &e in eps {
                    out.push(Prediction {
                        lambda0: *lambda0,
                        case: tag.label().into(),
                        nu_index: None,
                        nu: None,
                        multiplicity,
                        lambda1: *lambda1,
                        epsilon: e,
                        lambda_eps: lambda0 + e * lambda1,
                        cell_h: 0.0,
                        macro_h: None,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapEnd {
    /// Nonzero-mean Dirichlet eigenvalue.
    Pole,
    /// Root of B.
    Root,
    /// Zero-mean Dirichlet eigenvalue, a point of the limit spectrum.
    ZeroMean,
    /// Cut at λ_max.
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_end: GapEnd,
    pub hi_end: GapEnd,
    /// B at the midpoint (negative inside a gap).
    pub b_mid: f64,
}

impl GapInterval {
    /// The interval shrunk by `margin` of its length at each end.
    pub fn shrunk(&self, margin: f64) -> [f64; 2] {
        let d = margin * (self.hi - self.lo);
        [self.lo + d, self.hi - d]
    }
}

/// Open intervals of (0, λ_max] where B(λ) < 0, i.e. β(λ) < |Q₁|λ, split at
/// the zero-mean Dirichlet eigenvalues they contain. A zero-mean eigenvalue
/// within the pole tolerance of an end point coincides with it and is not a cut.
pub fn gap_intervals(micro: &Micro, backend: BetaBackend, lambda_max: f64) -> Result<Vec<GapInterval>> {
    let ls = micro.limit_spectrum(backend, lambda_max)?;
    let poles = micro.poles(backend, lambda_max)?;
    let roots = ls.roots();
    let zero_mean: Vec<f64> = ls.entries.iter().filter(|e| e.kind == EntryKind::ZeroMean).map(|e| e.value).collect();
    let mut out = Vec::new();
    for &p in &poles {
        let (hi, hi_end) = match roots.iter().find(|&&r| r > p) {
            Some(&r) => (r, GapEnd::Root),
            None => (lambda_max, GapEnd::Truncated),
        };
        let mut cuts = vec![(p, GapEnd::Pole)];
        let near = |a: f64, b: f64| (a - b).abs() <= micro.tol.pole * b;
        cuts.extend(
            zero_mean
                .iter()
                .filter(|&&z| z > p && z < hi && !near(z, p) && !near(z, hi))
                .map(|&z| (z, GapEnd::ZeroMean)),
        );
        cuts.push((hi, hi_end));
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0].0 + w[1].0);
            let b_mid = micro.beta(backend, mid)?.b;
            if b_mid >= 0.0 {
                return Err(Error::Numerical(format!("B({mid}) = {b_mid} is not negative inside a predicted gap")));
            }
            out.push(GapInterval { lo: w[0].0, hi: w[1].0, lo_end: w[0].1, hi_end: w[1].1, b_mid });
        }
    }
    Ok(out)
}
