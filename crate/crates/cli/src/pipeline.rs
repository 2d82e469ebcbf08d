//! Computations shared by the subcommands: cell levels, limit spectra,
//! case (a)/(b) branches, homogenized levels, predictions and fine solves.

use serde::Serialize;
use twoscale::caseb::{lambda1_case_b, solve_v1, zero_mean_mode};
use twoscale::cell::{cell_problems, extrapolate_tensors, homogenized_matrix, solve_nj, CellTensors, HomogenizedMatrix};
use twoscale::fem::AssembledForms;
use twoscale::finescale::{assemble_fine, fine_nearest, FineSpectrum};
use twoscale::geometry::{build_domain_mesh_m, unit_square_mesh, CellGeometry, Mesh};
use twoscale::homogenized::{macro_spectrum, predictions, Branch, MacroSpectrum, Prediction};
use twoscale::micro::{BetaBackend, CaseTag, CellSpaces, EntryKind, LimitEntry, LimitSpectrum, Micro};
use twoscale::richardson::extrapolate;
use twoscale::{Error, Tolerances};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, InModule};

/// Relative threshold on |B(λ₀)| for the vanishing-B flag of case (b-ii).
pub const B_ZERO: f64 = 1e-2;

/// The cell discretized at h and h/2.
pub struct Levels {
    pub geometry: CellGeometry,
    pub micro: [Micro; 2],
}

impl Levels {
    pub fn new(geometry: &CellGeometry, q: [usize; 2], modes: usize, tol: &Tolerances) -> CliResult<Self> {
        let build = |q: usize| -> CliResult<Micro> {
            let spaces = CellSpaces::new(geometry, 0.5 / q as f64).module("geometry")?;
            Micro::new(spaces, modes, tol).module("micro")
        };
        Ok(Levels { geometry: *geometry, micro: [build(q[0])?, build(q[1])?] })
    }

    pub fn from_config(cfg: &RunConfig) -> CliResult<Self> {
        Self::new(&cfg.geometry.cell(), cfg.mesh.cell_q, cfg.micro.modes, &cfg.tolerances)
    }

    pub fn fine(&self) -> &Micro {
        &self.micro[1]
    }
}

/// Limit spectra at both levels, entry by entry, with extrapolated values.
#[derive(Debug, Clone, Serialize)]
pub struct LimitTable {
    pub coarse: LimitSpectrum,
    pub fine: LimitSpectrum,
    pub values: Vec<f64>,
}

impl LimitTable {
    pub fn entries(&self) -> impl Iterator<Item = (usize, &LimitEntry, f64)> {
        self.fine.entries.iter().zip(&self.values).enumerate().map(|(i, (e, &v))| (i, e, v))
    }

    /// Index of the k-th root entry (k from 1, μ₁ = 0).
    pub fn root_entry(&self, k: usize) -> CliResult<usize> {
        self.fine
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == EntryKind::Root)
            .nth(k.wrapping_sub(1))
            .map(|(i, _)| i)
            .ok_or_else(|| {
                CliError::Usage(format!("root index {k} is beyond the limit spectrum up to {}", self.fine.lambda_max))
            })
    }

    /// Ordinal (from 1) of a zero-mean entry among zero-mean entries.
    pub fn zero_mean_ordinal(&self, entry: usize) -> usize {
        self.fine.entries[..=entry].iter().filter(|e| e.kind == EntryKind::ZeroMean).count()
    }
}

pub fn limit_table(levels: &Levels, backend: BetaBackend, lambda_max: f64) -> CliResult<LimitTable> {
    let [c, f] = [0, 1].map(|i| levels.micro[i].limit_spectrum(backend, lambda_max));
    let (coarse, fine) = (c.module("micro")?, f.module("micro")?);
    let same = coarse.entries.len() == fine.entries.len()
        && coarse.entries.iter().zip(&fine.entries).all(|(a, b)| a.kind == b.kind && a.multiplicity == b.multiplicity);
    if !same {
        return Err(CliError::Numerical(format!(
            "limit spectra below {lambda_max} differ in structure between h and h/2; refine the cell meshes"
        )));
    }
    let values = coarse.entries.iter().zip(&fine.entries).map(|(a, b)| extrapolate(a.value, b.value, 2.0)).collect();
    Ok(LimitTable { coarse, fine, values })
}

/// Case (a) tensors at the root entry `entry` of both levels.
#[derive(Debug, Clone, Serialize)]
pub struct CaseA {
    pub levels: [CellTensors; 2],
    pub extrapolated: CellTensors,
}

pub fn case_a(levels: &Levels, table: &LimitTable, entry: usize) -> CliResult<CaseA> {
    let roots = [table.coarse.entries[entry].value, table.fine.entries[entry].value];
    let t0 = cell_problems(&levels.micro[0], roots[0]).module("cell")?.0;
    let t1 = cell_problems(&levels.micro[1], roots[1]).module("cell")?.0;
    let extrapolated = extrapolate_tensors(&t0, &t1);
    Ok(CaseA { levels: [t0, t1], extrapolated })
}

/// First-order case (b) data at a zero-mean cluster on both levels.
#[derive(Debug, Clone, Serialize)]
pub struct CaseBLambda {
    pub ordinal: usize,
    pub lambda0: [f64; 2],
    pub lambda1: [f64; 2],
    pub lambda0_extrapolated: f64,
    pub lambda1_extrapolated: f64,
}

pub fn case_b_lambda(levels: &Levels, ordinal: usize) -> CliResult<CaseBLambda> {
    let mut l0 = [0.0; 2];
    let mut l1 = [0.0; 2];
    for (i, m) in levels.micro.iter().enumerate() {
        let mode = zero_mean_mode(m, ordinal).module("caseb")?;
        let (v, _) = solve_v1(&m.spaces, mode.lambda0, &mode.phi, &m.tol).module("caseb")?;
        l0[i] = mode.lambda0;
        l1[i] = lambda1_case_b(&m.spaces, mode.lambda0, &mode.phi, &v).module("caseb")?.0;
    }
    Ok(CaseBLambda {
        ordinal,
        lambda0: l0,
        lambda1: l1,
        lambda0_extrapolated: extrapolate(l0[0], l0[1], 2.0),
        lambda1_extrapolated: extrapolate(l1[0], l1[1], 2.0),
    })
}

/// A^hom at both levels and extrapolated.
pub fn homogenized(levels: &Levels) -> CliResult<[HomogenizedMatrix; 3]> {
    let tol = &levels.micro[0].tol;
    let [a0, a1] = [0, 1].map(|i| {
        let sp = &levels.micro[i].spaces;
        solve_nj(sp, tol).map(|nj| homogenized_matrix(sp, &nj))
    });
    let (a0, a1) = (a0.module("cell")?, a1.module("cell")?);
    let mut e = a1;
    for j in 0..2 {
        for k in 0..2 {
            e.a[j][k] = extrapolate(a0.a[j][k], a1.a[j][k], 2.0);
        }
    }
    e.antisymmetry = a0.antisymmetry.max(a1.antisymmetry);
    Ok([a0, a1, e])
}

/// Homogenized spectrum on two square meshes; `extrapolated` keeps the
/// clusters and vectors of the finer mesh with extrapolated values.
pub struct MacroLevels {
    pub spectra: [MacroSpectrum; 2],
    pub extrapolated: MacroSpectrum,
    pub meshes: [Mesh; 2],
}

pub fn macro_levels(a: &HomogenizedMatrix, n: [usize; 2], count: usize, tol: &Tolerances) -> CliResult<MacroLevels> {
    let meshes = [unit_square_mesh(n[0]).module("geometry")?, unit_square_mesh(n[1]).module("geometry")?];
    let s0 = macro_spectrum(a, &meshes[0], count, tol).module("homogenized")?;
    let s1 = macro_spectrum(a, &meshes[1], count, tol).module("homogenized")?;
    let mut e = s1.clone();
    e.values = s0.values.iter().zip(&s1.values).map(|(a, b)| extrapolate(*a, *b, 2.0)).collect();
    e.h = 0.0;
    Ok(MacroLevels { spectra: [s0, s1], extrapolated: e, meshes })
}

/// One λ₀ of the limit spectrum turned into a prediction branch, or the
/// reason it was not.
#[derive(Debug, Clone, Serialize)]
pub struct BranchRecord {
    pub entry: usize,
    pub lambda0: f64,
    pub kind: EntryKind,
    pub case: Option<String>,
    pub lambda1: Option<f64>,
    pub skipped: Option<String>,
}

pub struct Branches {
    pub branches: Vec<Branch>,
    pub records: Vec<BranchRecord>,
}

/// Case (a) at every root off the Dirichlet spectrum, case (b) at every
/// zero-mean cluster of multiplicity at most two.
pub fn branches(levels: &Levels, table: &LimitTable) -> CliResult<Branches> {
    let fine = levels.fine();
    let mut out = Branches { branches: Vec::new(), records: Vec::new() };
    for (i, e, value) in table.entries() {
        let mut rec = BranchRecord { entry: i, lambda0: value, kind: e.kind, case: None, lambda1: None, skipped: None };
        let tag = fine.classify(e.value, B_ZERO);
        match (e.kind, tag) {
            (EntryKind::Root, Ok(CaseTag::A)) => {
                let a = case_a(levels, table, i)?;
                rec.case = Some(CaseTag::A.label().into());
                out.branches.push(Branch::A { tensors: a.extrapolated });
            }
            (EntryKind::Root, Ok(t)) => {
                rec.skipped = Some(format!("root lies on the Dirichlet spectrum ({}); see the zero-mean entry", t.label()));
            }
            (EntryKind::ZeroMean, Ok(t)) => match case_b_lambda(levels, table.zero_mean_ordinal(i)) {
                Ok(b) => {
                    rec.case = Some(t.label().into());
                    rec.lambda0 = b.lambda0_extrapolated;
                    rec.lambda1 = Some(b.lambda1_extrapolated);
                    out.branches.push(Branch::B { lambda0: b.lambda0_extrapolated, lambda1: b.lambda1_extrapolated, tag: t });
                }
                Err(err) => rec.skipped = Some(err.to_string()),
            },
            (_, Err(err)) => rec.skipped = Some(format!("micro: {err}")),
        }
        out.records.push(rec);
    }
    Ok(out)
}

/// Predictions Λ_ε for every branch × homogenized level × ε.
pub fn predict(
    branches: &[Branch],
    macro_ext: &MacroSpectrum,
    levels: usize,
    eps: &[f64],
) -> CliResult<Vec<Prediction>> {
    predictions(branches, macro_ext, levels, eps).module("homogenized")
}

/// Tiled mesh of Ω at ε = 1/m with cell refinement q, and the finest mesh
/// with q < q' ≤ 2q under the DOF cap for discretization control.
pub fn domain_mesh(geom: &CellGeometry, m: usize, q: usize, cap: usize) -> CliResult<Mesh> {
    build_domain_mesh_m(geom, m, q, cap).module("geometry")
}

pub fn control_mesh(geom: &CellGeometry, m: usize, q: usize, cap: usize) -> CliResult<Option<(usize, Mesh)>> {
    for qc in (q + 1..=2 * q).rev() {
        match build_domain_mesh_m(geom, m, qc, cap) {
            Ok(mesh) => return Ok(Some((qc, mesh))),
            Err(Error::DofCap { .. }) => continue,
            Err(e) => return Err(CliError::Module { module: "geometry", source: e }),
        }
    }
    Ok(None)
}

pub fn fine_forms(mesh: &Mesh, epsilon: f64) -> CliResult<AssembledForms> {
    assemble_fine(mesh, epsilon).module("finescale")
}

/// The `count` fine eigenpairs closest to `target`.
pub fn nearest(forms: &AssembledForms, mesh: &Mesh, epsilon: f64, target: f64, count: usize, tol: &Tolerances) -> CliResult<FineSpectrum> {
    fine_nearest(forms, mesh, epsilon, target, count, tol).module("finescale")
}
