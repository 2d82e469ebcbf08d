//! The acceptance run: every check, one verdict per criterion.

use serde::{Deserialize, Serialize};
use serde_json::json;
use twoscale::caseb::{gauge_shift, residual_orders, solve_case_b, zero_mean_mode, CaseBSolution};
use twoscale::cell::{homogenized_matrix, solve_nj, CellTensors, HomogenizedMatrix};
use twoscale::finescale::{gap_audit, match_and_rate, two_scale_compare, FineLevel, GapViolation, RateReport};
use twoscale::fmt17;
use twoscale::geometry::CellGeometry;
use twoscale::homogenized::{gap_intervals, GapEnd, GapInterval, Prediction};
use twoscale::micro::{analytic_ball_poles, pole_free_grid, BetaBackend, CellSpaces, Micro};
use twoscale::richardson::extrapolate;

use crate::artifacts::{Artifacts, Manifest, RunEntry};
use crate::commands::{model, Model};
use crate::config::{Epsilon, RunConfig};
use crate::error::{CliError, CliResult, InModule};
use crate::pipeline::{self, Levels};

pub const ACCEPTANCE: &str = "acceptance.json";
pub const DETERMINISM: &str = "determinism.json";

const C_FLUX_REL: f64 = 1e-4;
const IDENTITY_TOL: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-8;
const ISOTROPY_TOL: f64 = 1e-5;
const SMALL_DISK_TOL: f64 = 2e-2;
const MACRO_REL: f64 = 1e-4;
const ZETA_REL: f64 = 1e-3;
const MIN_USABLE: usize = 3;
const MIN_SLOPE: f64 = 1.0;
const THEOREM_SLOPE: f64 = 1.2;
const FORMS_REL: f64 = 1e-4;
const Z_TOL: f64 = 0.02;
const Z_ORDER: f64 = 1.8;
const GAUGE_TOL: f64 = 1e-8;
const SLOPE_Q1: f64 = 0.8;
const SLOPE_INTERFACE: f64 = 1.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    /// "<=" or ">=".
    pub op: String,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn le(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value: Some(value), op: "<=".into(), threshold, passed: value <= threshold }
    }

    fn ge(name: impl Into<String>, value: Option<f64>, threshold: f64) -> Self {
        let passed = value.is_some_and(|v| v >= threshold);
        Check { name: name.into(), value, op: ">=".into(), threshold, passed }
    }

    fn flag(name: impl Into<String>, ok: bool) -> Self {
        Check::ge(name, Some(if ok { 1.0 } else { 0.0 }), 1.0)
    }

    pub fn describe(&self) -> String {
        let v = self.value.map_or("none".to_string(), |v| format!("{v:.3e}"));
        format!("{} = {v} ({} {:.3e})", self.name, self.op, self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: u32,
    pub title: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Criterion {
    fn new(id: u32, title: &str, checks: Vec<Check>, notes: Vec<String>) -> Self {
        let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
        Criterion { id, title: title.into(), passed, checks, notes }
    }

    fn failed(id: u32, title: &str, err: &CliError) -> Self {
        Criterion { id, title: title.into(), passed: false, checks: Vec::new(), notes: vec![err.to_string()] }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!("criterion {:>2} {verdict} {}", self.id, self.title);
        let failing: Vec<String> = self.checks.iter().filter(|c| !c.passed).map(Check::describe).collect();
        if !failing.is_empty() {
            s.push_str(&format!(": {}", failing.join("; ")));
        } else if self.checks.is_empty() {
            s.push_str(&format!(": {}", self.notes.join("; ")));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub inclusion: String,
    pub config_hash: String,
    pub passed: bool,
    pub criteria: Vec<Criterion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Determinism {
    /// False when no earlier validate run with the same configuration exists.
    pub compared: bool,
    pub identical: Option<bool>,
    pub mismatches: Vec<String>,
}

/// Numerical failures become a failed criterion; usage errors propagate.
fn guarded(id: u32, title: &str, f: impl FnOnce() -> CliResult<Criterion>) -> CliResult<Criterion> {
    match f() {
        Ok(c) => Ok(c),
        Err(e) if e.exit_code() == 3 => Ok(Criterion::failed(id, title, &e)),
        Err(e) => Err(e),
    }
}

pub fn run(cfg: &RunConfig, arguments: Vec<String>) -> CliResult<i32> {
    cfg.validate_sweep()?;
    let dir = cfg.output.dir.clone();
    let previous = Manifest::read(&dir)?
        .and_then(|m| m.runs.get("validate").cloned())
        .filter(|r| r.config_hash == cfg.hash());
    let mut art = Artifacts::new(&dir, "validate", arguments)?;

    let disk = CellGeometry::disk(cfg.validate.oracle_radius);
    let disk_levels = Levels::new(&disk, cfg.mesh.cell_q, cfg.micro.modes, &cfg.tolerances)?;
    art.stage("disk_levels");
    let mut criteria = Vec::new();
    criteria.push(guarded(1, TITLES[0], || criterion1(cfg, &disk_levels, &mut art))?);
    art.stage("criterion_1");
    criteria.push(guarded(2, TITLES[1], || criterion2(cfg, &disk_levels))?);
    art.stage("criterion_2");
    let disk_a = pipeline::homogenized(&disk_levels);
    criteria.push(guarded(4, TITLES[3], || criterion4(cfg, disk_a.as_ref().map_err(clone_err)?))?);
    art.stage("criterion_4");
    criteria.push(guarded(5, TITLES[4], || criterion5(cfg, disk_a.as_ref().map_err(clone_err)?))?);
    art.stage("criterion_5");
    drop(disk_levels);

    let m = model(cfg)?;
    art.stage("model");
    criteria.push(guarded(3, TITLES[2], || criterion3(cfg, &m))?);
    art.stage("criterion_3");
    criteria.push(guarded(7, TITLES[6], || criterion7(cfg, &m.levels))?);
    art.stage("criterion_7");
    match sweep(cfg, &m, &mut art) {
        Ok(s) => criteria.extend(s),
        Err(e) if e.exit_code() == 3 => {
            for id in [6, 8, 9] {
                criteria.push(Criterion::failed(id, TITLES[id as usize - 1], &e));
            }
        }
        Err(e) => return Err(e),
    }
    criteria.sort_by_key(|c| c.id);

    let acceptance = Acceptance {
        inclusion: twoscale::micro::inclusion_label(&m.levels.geometry),
        config_hash: cfg.hash(),
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    };
    art.json(ACCEPTANCE, &acceptance)?;
    let det = determinism(previous.as_ref(), &art);
    art.json(DETERMINISM, &det)?;
    art.finish(cfg)?;

    for c in &acceptance.criteria {
        println!("{}", c.line());
    }
    match det.identical {
        None => println!("criterion 10 SKIP {}: no earlier run with this configuration in {}", TITLES[9], dir.display()),
        Some(true) => println!("criterion 10 PASS {}", TITLES[9]),
        Some(false) => println!("criterion 10 FAIL {}: {}", TITLES[9], det.mismatches.join("; ")),
    }
    Ok(if acceptance.passed && det.identical != Some(false) { 0 } else { 1 })
}

/// Core errors are not `Clone`; a shared failure is re-reported by message.
fn clone_err(e: &CliError) -> CliError {
    CliError::Numerical(e.to_string())
}

pub const TITLES: [&str; 10] = [
    "Analytic oracle agreement",
    "Limit spectrum equivalence",
    "Cell identities",
    "Homogenized matrix properties",
    "Macro closed loop",
    "Two-term rate",
    "Case (b) pipeline",
    "Gap audit",
    "Two-scale eigenfunction trend",
    "Determinism",
];

fn determinism(previous: Option<&RunEntry>, art: &Artifacts) -> Determinism {
    let Some(prev) = previous else {
        return Determinism { compared: false, identical: None, mismatches: Vec::new() };
    };
    let mut mismatches = Vec::new();
    for a in prev.artifacts.iter().filter(|a| a.path != DETERMINISM) {
        match art.written().iter().find(|b| b.path == a.path) {
            Some(b) if b.sha256 == a.sha256 => {}
            Some(_) => mismatches.push(format!("{}: content changed", a.path)),
            None => mismatches.push(format!("{}: not written again", a.path)),
        }
    }
    for b in art.written().iter().filter(|b| !prev.artifacts.iter().any(|a| a.path == b.path)) {
        mismatches.push(format!("{}: new artifact", b.path));
    }
    Determinism { compared: true, identical: Some(mismatches.is_empty()), mismatches }
}

fn criterion1(cfg: &RunConfig, disk: &Levels, art: &mut Artifacts) -> CliResult<Criterion> {
    let v = &cfg.validate;
    let (lo, hi, n) = v.beta_grid;
    let analytic = BetaBackend::AnalyticBall { radius: v.oracle_radius, dimension: 2 };
    // the discrete poles differ slightly from the exact ones; avoid both
    let mut poles = analytic_ball_poles(v.oracle_radius, 2, hi * (1.0 + 2.0 * v.pole_distance)).module("micro")?;
    for m in &disk.micro {
        poles.extend(m.spectrum.poles());
    }
    poles.sort_by(f64::total_cmp);
    let grid = pole_free_grid(&poles, lo, hi, n, v.pole_distance).module("micro")?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &l in &grid {
        let b0 = disk.micro[0].beta(BetaBackend::Direct, l).module("micro")?.beta;
        let b1 = disk.micro[1].beta(BetaBackend::Direct, l).module("micro")?.beta;
        let e = extrapolate(b0, b1, 2.0);
        let x = disk.micro[1].beta(analytic, l).module("micro")?.beta;
        let rel = (e - x).abs() / x.abs();
        worst = worst.max(rel);
        rows.push(vec![fmt17(l), fmt17(b0), fmt17(b1), fmt17(e), fmt17(x), fmt17(rel)]);
    }
    art.csv(
        "criterion1_beta.csv",
        &["lambda", "beta_h", "beta_h2", "beta_extrapolated", "beta_analytic", "relative_error"],
        &rows,
    )?;
    let checks = vec![
        Check::ge("grid points", Some(grid.len() as f64), n as f64),
        Check::le("max relative error", worst, cfg.tolerances.beta),
    ];
    Ok(Criterion::new(1, TITLES[0], checks, vec![format!("disk a = {}, grid [{lo}, {hi}]", v.oracle_radius)]))
}

fn criterion2(cfg: &RunConfig, disk: &Levels) -> CliResult<Criterion> {
    let n = cfg.validate.zeta_entries;
    let m = disk.fine();
    let z = m.zeta_spectrum(n + 4).module("micro")?;
    let top = *z.values.last().unwrap();
    let ls = m.limit_spectrum(BetaBackend::Direct, 0.999 * top).module("micro")?;
    let expanded = ls.expanded();
    let compared = expanded.len().min(n);
    let worst = z
        .values
        .iter()
        .zip(&expanded)
        .take(compared)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);
    let mut mismatches = 0;
    let mut pos = 0;
    for e in &ls.entries {
        if pos + e.multiplicity > compared {
            break;
        }
        match z.clusters.iter().find(|c| c.contains(&pos)) {
            Some(c) if c.len() == e.multiplicity && c[0] == pos => {}
            _ => mismatches += 1,
        }
        pos += e.multiplicity;
    }
    let checks = vec![
        Check::ge("entries compared", Some(compared as f64), n as f64),
        Check::le("max relative difference", worst, ZETA_REL),
        Check::le("multiplicity mismatches", mismatches as f64, 0.0),
    ];
    Ok(Criterion::new(2, TITLES[1], checks, vec![format!("disk a = {}, h = {}", cfg.validate.oracle_radius, m.spaces.h())]))
}

fn identity_residual(t: &CellTensors) -> f64 {
    let id = &t.identities;
    let pairs = [id.harmonic_pair, id.trace_transfer, id.helmholtz_pair].concat();
    pairs.iter().map(|x| x.abs()).fold(id.green.abs() / t.c.max(1.0), f64::max)
}

fn criterion3(cfg: &RunConfig, m: &Model) -> CliResult<Criterion> {
    let tol = &cfg.tolerances;
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    for k in [1, cfg.validate.rate_root] {
        let a = pipeline::case_a(&m.levels, &m.table, m.table.root_entry(k)?)?;
        let [t0, t1] = &a.levels;
        let c_rel = a.levels.iter().map(|t| (t.c - t.c_flux).abs() / t.c).fold(0.0, f64::max);
        checks.push(Check::le(format!("mu_{k}: K before extrapolation"), t0.k_norm().max(t1.k_norm()), tol.drift_raw));
        checks.push(Check::le(format!("mu_{k}: K after extrapolation"), a.extrapolated.k_norm(), tol.drift_extrapolated));
        checks.push(Check::le(format!("mu_{k}: C volume vs flux"), c_rel, C_FLUX_REL));
        checks.push(Check::le(
            format!("mu_{k}: Green identity residual"),
            identity_residual(t0).max(identity_residual(t1)),
            IDENTITY_TOL,
        ));
        notes.push(format!("mu_{k} = {}, C = {}", a.extrapolated.lambda0, a.extrapolated.c));
    }
    Ok(Criterion::new(3, TITLES[2], checks, notes))
}

fn criterion4(cfg: &RunConfig, a: &[HomogenizedMatrix; 3]) -> CliResult<Criterion> {
    let e = &a[2];
    let eig = e.eigenvalues();
    let small = CellGeometry::disk(cfg.validate.small_radius);
    let sp = CellSpaces::new(&small, 0.5 / cfg.mesh.cell_q[0] as f64).module("geometry")?;
    let s = homogenized_matrix(&sp, &solve_nj(&sp, &cfg.tolerances).module("cell")?);
    let dist = (0..2)
        .flat_map(|j| (0..2).map(move |k| (j, k)))
        .map(|(j, k)| (s.a[j][k] - if j == k { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    let checks = vec![
        Check::le("antisymmetry", e.antisymmetry, SYMMETRY_TOL),
        Check::flag("positive definite", eig[0] > 0.0 && eig[1] > 0.0),
        Check::le("anisotropy", e.anisotropy(), ISOTROPY_TOL),
        Check::le(format!("small disk a = {}: distance to identity", cfg.validate.small_radius), dist, SMALL_DISK_TOL),
    ];
    Ok(Criterion::new(4, TITLES[3], checks, vec![format!("A^hom eigenvalues {:?}", eig)]))
}

fn criterion5(cfg: &RunConfig, a: &[HomogenizedMatrix; 3]) -> CliResult<Criterion> {
    let eig = a[2].eigenvalues();
    let alpha = 0.5 * (eig[0] + eig[1]);
    let ml = pipeline::macro_levels(
        &HomogenizedMatrix::isotropic(alpha),
        cfg.mesh.macro_n,
        cfg.macro_.count.max(3),
        &cfg.tolerances,
    )?;
    let pi2 = std::f64::consts::PI.powi(2);
    let exact = [2.0 * pi2 * alpha, 5.0 * pi2 * alpha, 5.0 * pi2 * alpha];
    let checks = exact
        .iter()
        .enumerate()
        .map(|(i, x)| Check::le(format!("nu_{}", i + 1), (ml.extrapolated.values[i] - x).abs() / x, MACRO_REL))
        .collect();
    Ok(Criterion::new(5, TITLES[4], checks, vec![format!("alpha = {alpha}")]))
}

fn case_b_levels(levels: &Levels, j: usize) -> CliResult<[CaseBSolution; 2]> {
    let solve = |m: &Micro| -> CliResult<CaseBSolution> {
        solve_case_b(m, zero_mean_mode(m, j).module("caseb")?).module("caseb")
    };
    Ok([solve(&levels.micro[0])?, solve(&levels.micro[1])?])
}

fn criterion7(cfg: &RunConfig, levels: &Levels) -> CliResult<Criterion> {
    let j = cfg.caseb.mode_index;
    let [s0, s1] = case_b_levels(levels, j)?;
    let fine = levels.fine();
    let l1 = extrapolate(s0.lambda1, s1.lambda1, 2.0);
    let forms = (s1.lambda1_boundary - s1.lambda1_volume).abs() / s1.lambda1.abs().max(f64::MIN_POSITIVE);
    let gauge = [1.0, -250.0].iter().map(|&s| gauge_shift(&fine.spaces, &s1, s)).fold(0.0, f64::max);
    let eps: Vec<f64> = cfg.caseb.residual_eps.iter().map(|e| e.value()).collect();
    let r = residual_orders(fine, &s1, &eps).module("caseb")?;
    let mut checks = vec![
        Check::le("lambda1", l1, 0.0),
        Check::le("boundary vs volume lambda1", forms, FORMS_REL),
    ];
    for k in 0..2 {
        checks.push(Check::le(format!("Z_{} residual", k + 1), s1.z_error[k], Z_TOL));
        checks.push(Check::ge(format!("Z_{} order", k + 1), Some((s0.z_error[k] / s1.z_error[k]).log2()), Z_ORDER));
    }
    checks.push(Check::le("gauge deviation", gauge, GAUGE_TOL));
    checks.push(Check::ge("residual slope Q1", Some(r.slope_q1), SLOPE_Q1));
    checks.push(Check::ge("residual slope interface", Some(r.slope_interface), SLOPE_INTERFACE));
    let notes = vec![
        format!("mode {j}: lambda0 = {}, lambda1 = {l1}", extrapolate(s0.mode.lambda0, s1.mode.lambda0, 2.0)),
        format!("residual slope Q0 = {} (recorded only)", r.slope_q0),
    ];
    Ok(Criterion::new(7, TITLES[6], checks, notes))
}

/// A fine eigenfunction counts as the predicted mode when its aligned L²
/// distance to v⁰(x)η(x/ε) is at most this, i.e. at least 75% of its mass
/// lies along the two-scale profile.
const ALIGN_MAX: f64 = 0.5;

/// One predicted curve ε ↦ λ₀ + ελ₁ followed through the sweep.
struct Curve {
    label: String,
    lambda0: f64,
    lambda1: f64,
    nu_index: Option<usize>,
    levels: Vec<FineLevel>,
    /// η(λ₀) on the tile of the domain mesh.
    eta: Vec<f64>,
    /// Per ε: (candidate value, aligned distance) and the identified index.
    candidates: Vec<(f64, Vec<[f64; 2]>, Option<usize>)>,
}

fn curve_at(preds: &[Prediction], label: String, target: f64) -> CliResult<Curve> {
    let p = preds
        .iter()
        .filter(|p| p.nu_index == Some(1))
        .min_by(|a, b| (a.lambda0 - target).abs().total_cmp(&(b.lambda0 - target).abs()))
        .filter(|p| (p.lambda0 - target).abs() <= 1e-6 * target.abs().max(1.0))
        .ok_or_else(|| CliError::Numerical(format!("no case (a) branch at lambda0 = {target}")))?;
    Ok(Curve {
        label,
        lambda0: p.lambda0,
        lambda1: p.lambda1,
        nu_index: p.nu_index,
        levels: Vec::new(),
        eta: Vec::new(),
        candidates: Vec::new(),
    })
}

/// The first gap: from the lowest pole up to the next root, split at
/// zero-mean eigenvalues.
fn first_gap(gaps: &[GapInterval]) -> Vec<GapInterval> {
    let mut out = Vec::new();
    for g in gaps {
        out.push(*g);
        if g.hi_end != GapEnd::ZeroMean {
            break;
        }
    }
    out
}

#[derive(Serialize)]
struct TrendPoint {
    epsilon: f64,
    lambda_eps: f64,
    distance: f64,
}

/// Criteria 6, 8 and 9 share the fine solves of one ε sweep.
fn sweep(cfg: &RunConfig, m: &Model, art: &mut Artifacts) -> CliResult<Vec<Criterion>> {
    let tol = &cfg.tolerances;
    let v = &cfg.validate;
    let geom = m.levels.geometry;
    let eps: Vec<f64> = cfg.fine.eps.iter().map(|e| e.value()).collect();
    let preds = pipeline::predict(&m.branches.branches, &m.macro_levels.extrapolated, cfg.macro_.levels, &eps)?;
    let mut curves = vec![
        curve_at(&preds, "lambda0=0".into(), m.table.values[m.table.root_entry(1)?])?,
        curve_at(
            &preds,
            format!("mu_{}", v.rate_root),
            m.table.values[m.table.root_entry(v.rate_root)?],
        )?,
    ];
    let gaps = first_gap(&gap_intervals(m.levels.fine(), cfg.backend(), cfg.micro.lambda_max).module("homogenized")?);
    // η(λ₀) on the cell mesh the domain is tiled from
    let tile = Micro::new(CellSpaces::new(&geom, 0.5 / cfg.fine.q as f64).module("geometry")?, cfg.micro.modes, tol)
        .module("micro")?;
    for c in curves.iter_mut() {
        c.eta = tile.eta(c.lambda0).module("micro")?.field;
    }
    // the lowest homogenized mode, which both curves couple to
    let (v0, macro_mesh) = (&m.macro_levels.spectra[1].vectors[0], &m.macro_levels.meshes[1]);

    let mut audits: Vec<(Epsilon, Vec<GapViolation>)> = Vec::new();
    let mut trend: Vec<(Epsilon, TrendPoint)> = Vec::new();
    let mut control_q = Vec::new();
    for e in &cfg.fine.eps {
        let ev = e.value();
        let mesh = pipeline::domain_mesh(&geom, e.m, cfg.fine.q, cfg.fine.dof_cap)?;
        let forms = pipeline::fine_forms(&mesh, ev)?;
        // the identified mode of each curve: (value, distance)
        let mut picked: Vec<Option<(f64, f64)>> = Vec::new();
        for c in curves.iter_mut() {
            let s = pipeline::nearest(&forms, &mesh, ev, c.lambda0 + ev * c.lambda1, cfg.fine.nearest, tol)?;
            let mut cand = Vec::new();
            for (value, vector) in s.values.iter().zip(&s.vectors) {
                let d = two_scale_compare(vector, &mesh, v0, macro_mesh, &c.eta).module("finescale")?;
                cand.push([*value, d]);
            }
            let best = (0..cand.len()).min_by(|&a, &b| cand[a][1].total_cmp(&cand[b][1])).filter(|&i| cand[i][1] <= ALIGN_MAX);
            picked.push(best.map(|i| (cand[i][0], cand[i][1])));
            c.candidates.push((ev, cand, best));
        }
        audits.push((*e, gap_audit(&forms, &gaps, ev, v.gap_margin).module("finescale")?));
        drop(forms);
        if v.trend_eps.contains(e) {
            if let Some((value, distance)) = picked[0] {
                trend.push((*e, TrendPoint { epsilon: ev, lambda_eps: value, distance }));
            }
        }
        let control = pipeline::control_mesh(&geom, e.m, cfg.fine.q, cfg.fine.dof_cap)?;
        control_q.push(json!({ "eps": e, "q": cfg.fine.q, "control_q": control.as_ref().map(|c| c.0) }));
        let cforms = match &control {
            Some((_, cm)) => Some(pipeline::fine_forms(cm, ev)?),
            None => None,
        };
        for (c, p) in curves.iter_mut().zip(&picked) {
            let values: Vec<f64> = p.iter().map(|x| x.0).collect();
            let ctrl = match (&control, &cforms, p) {
                (Some((_, cm)), Some(cf), Some((value, _))) => {
                    Some(pipeline::nearest(cf, cm, ev, *value, cfg.fine.nearest, tol)?.values)
                }
                _ => None,
            };
            c.levels.push(FineLevel { epsilon: ev, h: mesh.h, values, control: ctrl });
        }
        art.stage(&format!("sweep_eps_1/{}", e.m));
    }

    let mut reports: Vec<RateReport> = Vec::new();
    for c in &curves {
        let neighbours = |e: f64| {
            preds
                .iter()
                .filter(|p| p.epsilon == e && !(p.lambda0 == c.lambda0 && p.nu_index == c.nu_index))
                .map(|p| p.lambda_eps)
                .collect::<Vec<f64>>()
        };
        reports.push(match_and_rate(c.lambda0, c.lambda1, &c.levels, &neighbours, tol).module("finescale")?);
    }

    // criterion 6
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    for (c, r) in curves.iter().zip(&reports) {
        checks.push(Check::ge(format!("{}: usable points", c.label), Some(r.usable as f64), MIN_USABLE as f64));
        checks.push(Check::flag(format!("{}: monotone errors", c.label), r.monotone));
        checks.push(Check::ge(format!("{}: slope", c.label), r.slope, MIN_SLOPE));
        let consistent = r.slope.is_some_and(|s| s >= THEOREM_SLOPE);
        notes.push(format!(
            "{}: lambda0 = {}, lambda1 = {}, verdict {:?}{}",
            c.label,
            c.lambda0,
            c.lambda1,
            r.verdict,
            if consistent { " (theorem-consistent)" } else { "" }
        ));
    }
    let c6 = Criterion::new(6, TITLES[5], checks, notes);

    // criterion 8
    let at_gap: usize =
        audits.iter().filter(|(e, _)| *e == v.gap_eps).flat_map(|(_, vs)| vs.iter().map(|x| x.count)).sum();
    let mut notes = vec![format!(
        "gap pieces {:?}",
        gaps.iter().map(|g| g.shrunk(v.gap_margin)).collect::<Vec<_>>()
    )];
    for (e, vs) in audits.iter().filter(|(e, vs)| *e != v.gap_eps && !vs.is_empty()) {
        let n: usize = vs.iter().map(|x| x.count).sum();
        notes.push(format!("eps = 1/{}: {n} eigenvalues inside (recorded only)", e.m));
    }
    let c8 = Criterion::new(
        8,
        TITLES[7],
        vec![Check::le(format!("eigenvalues in shrunk gap at eps=1/{}", v.gap_eps.m), at_gap as f64, 0.0)],
        notes,
    );

    // criterion 9
    let zero = &reports[0];
    let mut checks = Vec::new();
    for e in &v.trend_eps {
        let t = trend.iter().find(|(x, _)| x == e).map(|(_, t)| t);
        let matched = t.is_some_and(|t| {
            zero.points.iter().any(|p| p.epsilon == e.value() && p.lambda_eps == Some(t.lambda_eps))
        });
        checks.push(Check::flag(format!("matched at eps=1/{}", e.m), matched));
    }
    let d: Vec<f64> = trend.iter().map(|(_, t)| t.distance).collect();
    checks.push(Check::flag("distances strictly decreasing", d.len() >= 2 && d.windows(2).all(|w| w[1] < w[0])));
    let c9 = Criterion::new(9, TITLES[8], checks, vec![format!("distances {d:?}")]);

    art.json(
        "validate_sweep.json",
        &json!({
            "inclusion": twoscale::micro::inclusion_label(&geom),
            "meshes": control_q,
            "align_max": ALIGN_MAX,
            "curves": curves
                .iter()
                .zip(&reports)
                .map(|(c, r)| {
                    let candidates: Vec<_> = c
                        .candidates
                        .iter()
                        .map(|(e, cand, best)| json!({ "eps": e, "values_distances": cand, "identified": best }))
                        .collect();
                    json!({ "label": c.label, "report": r, "candidates": candidates })
                })
                .collect::<Vec<_>>(),
            "gap": gaps,
            "gap_audit": audits.iter().map(|(e, vs)| json!({ "eps": e, "violations": vs })).collect::<Vec<_>>(),
            "two_scale": trend.iter().map(|(_, t)| t).collect::<Vec<_>>(),
        }),
    )?;
    Ok(vec![c6, c8, c9])
}
