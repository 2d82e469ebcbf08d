//! The ε-problem on Ω: assembly, windowed spectra, matching against Λ_ε,
//! convergence rates, eigenfunction comparison and gap audits.

use serde::{Deserialize, Serialize};

use crate::eigen::{self, Target};
use crate::error::{Error, Result};
use crate::fem::{self, AssembledForms, ConstraintKind, Subdomain};
use crate::geometry::{Mesh, MeshKind};
use crate::homogenized::GapInterval;
use crate::richardson::loglog_slope;
use crate::sparse::dot;
use crate::tolerances::Tolerances;

/// Stiffness ε and density 1/ε on the inclusions, 1 and 1 on the matrix,
/// Dirichlet on ∂Ω.
pub fn assemble_fine(mesh: &Mesh, epsilon: f64) -> Result<AssembledForms> {
    match mesh.kind {
        MeshKind::Domain { m, .. } => {
            if ((m as f64) * epsilon - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("mesh tiles {m} cells per side but epsilon = {epsilon}")));
            }
        }
        _ => return Err(Error::InvalidArgument("fine problem needs a tiled domain mesh".into())),
    }
    let forms = fem::assemble(mesh, [epsilon, 1.0], [1.0 / epsilon, 1.0], Subdomain::All)?;
    fem::apply_constraints(&forms, ConstraintKind::DirichletOuter, mesh)
}

/// Fine eigenpairs (vectors as vertex fields).
#[derive(Debug, Clone)]
pub struct FineSpectrum {
    pub epsilon: f64,
    pub h: f64,
    pub n_dofs: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Every eigenvalue in the open window (lo, hi), at most `max_count` of them.
pub fn fine_spectrum(
    forms: &AssembledForms,
    mesh: &Mesh,
    epsilon: f64,
    window: [f64; 2],
    max_count: usize,
    tol: &Tolerances,
) -> Result<FineSpectrum> {
    let [lo, hi] = window;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty window [{lo}, {hi}]")));
    }
    let count = count_in(forms, lo, hi)?;
    if count > max_count {
        return Err(Error::InvalidArgument(format!(
            "window [{lo}, {hi}] holds {count} eigenvalues, above the budget of {max_count}"
        )));
    }
    let mut out = FineSpectrum { epsilon, h: mesh.h, n_dofs: forms.n_free, values: Vec::new(), vectors: Vec::new() };
    if count == 0 {
        return Ok(out);
    }
    let s = eigen::solve(&forms.stiffness, &forms.mass, count, Target::Above(lo), tol)?;
    for (v, x) in s.values.iter().zip(&s.vectors) {
        if *v > lo && *v < hi {
            out.values.push(*v);
            out.vectors.push(forms.expand(x));
        }
    }
    Ok(out)
}

/// The `count` eigenpairs closest to `target`, ascending.
pub fn fine_nearest(
    forms: &AssembledForms,
    mesh: &Mesh,
    epsilon: f64,
    target: f64,
    count: usize,
    tol: &Tolerances,
) -> Result<FineSpectrum> {
    let s = eigen::solve(&forms.stiffness, &forms.mass, count, Target::Nearest(target), tol)?;
    Ok(FineSpectrum {
        epsilon,
        h: mesh.h,
        n_dofs: forms.n_free,
        values: s.values,
        vectors: s.vectors.iter().map(|x| forms.expand(x)).collect(),
    })
}

/// Number of eigenvalues in (lo, hi) by Sylvester inertia.
pub fn count_in(forms: &AssembledForms, lo: f64, hi: f64) -> Result<usize> {
    let below_hi = eigen::count_below(&forms.stiffness, &forms.mass, hi)?;
    let below_lo = if lo <= 0.0 { 0 } else { eigen::count_below(&forms.stiffness, &forms.mass, lo)? };
    Ok(below_hi.saturating_sub(below_lo))
}

/// Fine eigenvalues around one prediction at one ε, at mesh h and (when the
/// DOF budget allows) h/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineLevel {
    pub epsilon: f64,
    pub h: f64,
    pub values: Vec<f64>,
    pub control: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPoint {
    pub epsilon: f64,
    pub h: f64,
    pub predicted: f64,
    pub guard: f64,
    pub lambda_eps: Option<f64>,
    pub lambda_control: Option<f64>,
    pub error: Option<f64>,
    /// Mesh change below 0.2 of the model error.
    pub control_ok: bool,
    /// Two candidates equidistant from the prediction within the cluster gap.
    pub ambiguous: Option<[f64; 2]>,
    /// Slope of the usable points up to this one.
    pub slope_running: Option<f64>,
}

impl MatchPoint {
    pub fn usable(&self) -> bool {
        self.error.is_some() && self.control_ok && self.ambiguous.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateVerdict {
    /// Fewer than three usable points.
    Insufficient,
    /// Errors not decreasing or slope below 1.
    Fail,
    /// Slope in [1, 1.2).
    Pass,
    /// Slope at least 1.2.
    TheoremConsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub lambda0: f64,
    pub lambda1: f64,
    pub points: Vec<MatchPoint>,
    pub slope: Option<f64>,
    pub monotone: bool,
    pub usable: usize,
    pub c_guess: Option<f64>,
    pub verdict: RateVerdict,
}

/// Matches the prediction Λ_ε = λ₀ + ελ₁ against fine eigenvalues.
///
/// `levels` must be sorted by decreasing ε. `neighbours(ε)` lists the other
/// predictions at ε; the guard radius is half the distance to the closest of
/// them. From the third ε on it is also capped by 0.5·ε^{5/4}·C_guess, where
/// C_guess is four times the largest error/ε^{5/4} of the first two matches:
/// the cap is twice the ε^{5/4} envelope through those matches.
pub fn match_and_rate(
    lambda0: f64,
    lambda1: f64,
    levels: &[FineLevel],
    neighbours: &dyn Fn(f64) -> Vec<f64>,
    tol: &Tolerances,
) -> Result<RateReport> {
    if levels.windows(2).any(|w| w[1].epsilon >= w[0].epsilon) {
        return Err(Error::InvalidArgument("epsilon levels must be strictly decreasing".into()));
    }
    let mut points: Vec<MatchPoint> = Vec::new();
    let mut c_guess = None;
    for (i, lv) in levels.iter().enumerate() {
        let e = lv.epsilon;
        let predicted = lambda0 + e * lambda1;
        let half = neighbours(e)
            .iter()
            .map(|&p| (p - predicted).abs())
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min)
            * 0.5;
        let mut guard = half;
        if i >= 2 {
            if let Some(c) = c_guess {
                guard = guard.min(0.5 * e.powf(1.25) * c);
            }
        }
        let mut sorted: Vec<f64> = lv.values.clone();
        sorted.sort_by(|a, b| (a - predicted).abs().total_cmp(&(b - predicted).abs()));
        let mut pt = MatchPoint {
            epsilon: e,
            h: lv.h,
            predicted,
            guard,
            lambda_eps: None,
            lambda_control: None,
            error: None,
            control_ok: false,
            ambiguous: None,
            slope_running: None,
        };
        if let Some(&best) = sorted.first() {
            let err = (best - predicted).abs();
            if err <= guard {
                if let Some(&second) = sorted.get(1) {
                    let d2 = (second - predicted).abs();
                    let gap = tol.cluster_gap * predicted.abs().max(1.0);
                    if (d2 - err).abs() <= gap && (second - best).abs() > gap {
                        pt.ambiguous = Some([best, second]);
                    }
                }
                pt.lambda_eps = Some(best);
                pt.error = Some(err);
                if let Some(ctrl) = &lv.control {
                    let c = ctrl.iter().copied().min_by(|a, b| (a - best).abs().total_cmp(&(b - best).abs()));
                    if let Some(c) = c {
                        pt.lambda_control = Some(c);
                        pt.control_ok = (best - c).abs() <= 0.2 * (c - predicted).abs();
                    }
                }
            }
        }
        if i < 2 {
            if let Some(err) = pt.error {
                let c = 4.0 * err / e.powf(1.25);
                c_guess = Some(c_guess.map_or(c, |g: f64| g.max(c)));
            }
        }
        points.push(pt);
        let (xs, ys) = usable_points(&points);
        if xs.len() >= 2 {
            points.last_mut().unwrap().slope_running = Some(loglog_slope(&xs, &ys));
        }
    }
    let (xs, ys) = usable_points(&points);
    let usable = xs.len();
    let slope = (usable >= 2).then(|| loglog_slope(&xs, &ys));
    let errors: Vec<f64> = points.iter().filter(|p| p.usable()).map(|p| p.error.unwrap()).collect();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let verdict = match slope {
        _ if usable < 3 => RateVerdict::Insufficient,
        Some(s) if monotone && s >= 1.2 => RateVerdict::TheoremConsistent,
        Some(s) if monotone && s >= 1.0 => RateVerdict::Pass,
        _ => RateVerdict::Fail,
    };
    Ok(RateReport { lambda0, lambda1, points, slope, monotone, usable, c_guess, verdict })
}

/// (ε, error) of the usable points.
fn usable_points(points: &[MatchPoint]) -> (Vec<f64>, Vec<f64>) {
    points.iter().filter(|p| p.usable() && p.error.unwrap() > 0.0).map(|p| (p.epsilon, p.error.unwrap())).unzip()
}

/// P1 interpolation of a field on a union-jack unit-square mesh.
pub fn sample_square(mesh: &Mesh, field: &[f64], x: [f64; 2]) -> Result<f64> {
    let n = match mesh.kind {
        MeshKind::Square { n } => n,
        _ => return Err(Error::InvalidArgument("sampling needs a unit-square mesh".into())),
    };
    let nf = n as f64;
    let i = ((x[0] * nf).floor() as usize).min(n - 1);
    let j = ((x[1] * nf).floor() as usize).min(n - 1);
    let (s, t) = (x[0] * nf - i as f64, x[1] * nf - j as f64);
    let id = |a: usize, b: usize| field[b * (n + 1) + a];
    let (f00, f10, f01, f11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
    let v = if (2 * i + 1 < n) == (2 * j + 1 < n) {
        // cut along s = t
        if s >= t {
            f00 + s * (f10 - f00) + t * (f11 - f10)
        } else {
            f00 + t * (f01 - f00) + s * (f11 - f01)
        }
    } else if s + t <= 1.0 {
        f00 + s * (f10 - f00) + t * (f01 - f00)
    } else {
        f11 + (1.0 - s) * (f01 - f11) + (1.0 - t) * (f10 - f11)
    };
    Ok(v)
}

/// Remark-style comparison of a fine eigenfunction with u(x, x/ε): v⁰(x) on
/// the matrix and v⁰(x)η(x/ε) on the inclusions. `eta` lives on the cell mesh
/// the domain mesh was tiled from. Returns min_c ‖c u_ε − u‖ / ‖u‖ in L²(Ω).
pub fn two_scale_compare(
    fine: &[f64],
    domain: &Mesh,
    v0: &[f64],
    macro_mesh: &Mesh,
    eta: &[f64],
) -> Result<f64> {
    let cell_vertex = domain
        .cell_vertex
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("domain mesh has no cell-vertex map".into()))?;
    let mut inclusion = vec![false; domain.vertices.len()];
    for (t, tri) in domain.triangles.iter().enumerate() {
        if domain.regions[t] == crate::geometry::Region::Q0 {
            tri.iter().for_each(|&v| inclusion[v] = true);
        }
    }
    let mut u = Vec::with_capacity(domain.vertices.len());
    for (v, p) in domain.vertices.iter().enumerate() {
        let base = sample_square(macro_mesh, v0, *p)?;
        // Γ vertices carry η = 1, so both phase formulas agree there
        u.push(if inclusion[v] { base * eta[cell_vertex[v]] } else { base });
    }
    let mass = fem::assemble(domain, [1.0, 1.0], [1.0, 1.0], Subdomain::All)?.mass_full;
    let mu = mass.mul_vec(&u);
    let uu = dot(&u, &mu);
    if !(uu > 0.0) {
        return Err(Error::Numerical("limit function has zero norm".into()));
    }
    let fu = dot(fine, &mu);
    let ff = mass.bilinear(fine, fine);
    if !(ff > 0.0) {
        return Err(Error::Numerical("fine eigenvector has zero norm".into()));
    }
    // ‖c u_ε − u‖² is minimized at c = (u_ε, u)/‖u_ε‖²
    let c = fu / ff;
    let r: Vec<f64> = fine.iter().zip(&u).map(|(f, x)| c * f - x).collect();
    Ok((mass.bilinear(&r, &r).max(0.0) / uu).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapViolation {
    pub epsilon: f64,
    pub interval: [f64; 2],
    /// Eigenvalues inside the shrunk interval (inertia count).
    pub count: usize,
}

/// Eigenvalue counts inside each gap shrunk by `margin` at each end.
pub fn gap_audit(forms: &AssembledForms, gaps: &[GapInterval], epsilon: f64, margin: f64) -> Result<Vec<GapViolation>> {
    let mut out = Vec::new();
    for g in gaps {
        let [lo, hi] = g.shrunk(margin);
        if !(lo < hi) {
            continue;
        }
        let count = count_in(forms, lo, hi)?;
        if count > 0 {
            out.push(GapViolation { epsilon, interval: [lo, hi], count });
        }
    }
    Ok(out)
}

/// Same audit on an explicit list of eigenvalues.
pub fn gap_audit_values(values: &[f64], gaps: &[GapInterval], epsilon: f64, margin: f64) -> Vec<GapViolation> {
    gaps.iter()
        .filter_map(|g| {
            let [lo, hi] = g.shrunk(margin);
            let count = values.iter().filter(|&&v| v > lo && v < hi).count();
            (count > 0).then_some(GapViolation { epsilon, interval: [lo, hi], count })
        })
        .collect()
}
