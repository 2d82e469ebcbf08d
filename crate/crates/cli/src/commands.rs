//! One function per subcommand; each writes its artifacts and returns the
//! exit status.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use twoscale::caseb::{gauge_shift, residual_orders, solve_case_b, zero_mean_mode};
use twoscale::cell::{cell_problems, extrapolate_tensors, HomogenizedMatrix};
use twoscale::fem::{self, ConstraintKind, MatrixKind, Subdomain};
use twoscale::finescale::{fine_spectrum, match_and_rate, FineLevel, RateReport};
use twoscale::fmt17;
use twoscale::geometry::{build_cell_mesh_q, unit_square_mesh, write_mesh, Mesh, MeshKind, Region};
use twoscale::homogenized::Prediction;
use twoscale::micro::{inclusion_label, CellSpaces, EntryKind, Micro};

use crate::artifacts::{opt17, Artifacts};
use crate::config::{parse_eps_list, parse_range, BackendName, Epsilon, RunConfig, OUT_ENV};
use crate::error::{CliError, CliResult, InModule};
use crate::pipeline::{self, Levels};
use crate::{report, validate};

#[derive(Debug, Parser)]
#[command(name = "twoscale", version, about = "Two-scale spectral asymptotics for doubly high-contrast periodic media")]
pub struct Cli {
    /// TOML run configuration; defaults apply to missing sections and fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config and the TWOSCALE_OUT variable).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a cell, domain or square mesh and report its quality.
    Mesh(MeshArgs),
    /// Dirichlet spectrum of the inclusion and the limit spectrum.
    Micro,
    /// β(λ) and B(λ) on a grid.
    Beta(BetaArgs),
    /// Case (a) cell problems at one root of B.
    Cell(CellArgs),
    /// Homogenized Dirichlet eigenvalues on the unit square.
    Macro(MacroArgs),
    /// Two-term predictions λ₀ + ελ₁ for every branch.
    Predict(PredictArgs),
    /// Case (b) construction at one zero-mean Dirichlet mode.
    Caseb(CaseBArgs),
    /// Fine-scale eigenvalues in a window matched against the predictions.
    Fine(FineArgs),
    /// Run every acceptance check.
    Validate,
    /// Aggregate the artifacts of the output directory into one table.
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeshKindArg {
    Cell,
    Domain,
    Square,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[arg(long, value_enum, default_value = "cell")]
    pub kind: MeshKindArg,
    /// ε = 1/m for a domain mesh (default: the first configured ε).
    #[arg(long)]
    pub eps: Option<String>,
    /// Γ segments per octant of the cell (h = 1/(2q) in cell units).
    #[arg(long)]
    pub q: Option<usize>,
    /// Squares per side of a square mesh.
    #[arg(long)]
    pub n: Option<usize>,
    /// Write the mesh text file here instead of the output directory.
    #[arg(long)]
    pub mesh_out: Option<PathBuf>,
    /// Also write stiffness and mass triplets "i j value" (0-based).
    #[arg(long)]
    pub dump_matrices: bool,
}

#[derive(Debug, Args)]
pub struct BetaArgs {
    /// λmin:λmax:N
    #[arg(long)]
    pub grid: String,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Direct,
    Series,
    Analytic,
}

#[derive(Debug, Args)]
pub struct CellArgs {
    /// A value of λ₀, or the index k of the root μ_k (μ₁ = 0).
    #[arg(long)]
    pub lambda0: String,
}

#[derive(Debug, Args)]
pub struct MacroArgs {
    /// Use A^hom = αI instead of the computed tensor.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Comma-separated ε list such as 0.5,0.25,0.125 or 1/2,1/4.
    #[arg(long)]
    pub eps: Option<String>,
}

#[derive(Debug, Args)]
pub struct CaseBArgs {
    /// Ordinal of the zero-mean Dirichlet cluster, from 1.
    #[arg(long)]
    pub mode_index: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FineArgs {
    /// Comma-separated ε list, strictly decreasing, each 1/m
    #[arg(long)]
    pub eps_list: Option<String>,
    /// λa:λb
    #[arg(long)]
    pub window: Option<String>,
}

/// Loads the configuration and applies the output-directory overrides.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = std::env::var_os(OUT_ENV) {
        cfg.output.dir = dir.into();
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

/// Runs one subcommand and returns the process exit code.
pub fn run(cli: Cli, arguments: Vec<String>) -> CliResult<i32> {
    let mut cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Mesh(a) => mesh(&cfg, a, arguments),
        Command::Micro => micro(&cfg, arguments),
        Command::Beta(a) => {
            if let Some(b) = a.backend {
                cfg.micro.backend = match b {
                    BackendArg::Direct => BackendName::Direct,
                    BackendArg::Series => BackendName::Series,
                    BackendArg::Analytic => BackendName::Analytic,
                };
                cfg.validate()?;
            }
            beta(&cfg, &a.grid, arguments)
        }
        Command::Cell(a) => cell(&cfg, &a.lambda0, arguments),
        Command::Macro(a) => macro_cmd(&cfg, a.alpha, arguments),
        Command::Predict(a) => {
            if let Some(e) = &a.eps {
                cfg.fine.eps = parse_eps_list(e)?;
                cfg.validate()?;
            }
            predict(&cfg, arguments)
        }
        Command::Caseb(a) => {
            if let Some(j) = a.mode_index {
                cfg.caseb.mode_index = j;
                cfg.validate()?;
            }
            caseb(&cfg, arguments)
        }
        Command::Fine(a) => {
            if let Some(e) = &a.eps_list {
                cfg.fine.eps = parse_eps_list(e)?;
            }
            if let Some(w) = &a.window {
                let (lo, hi, _) = parse_range(w, false)?;
                cfg.fine.window = [lo, hi];
            }
            cfg.validate()?;
            fine(&cfg, arguments)
        }
        Command::Validate => validate::run(&cfg, arguments),
        Command::Report => report::run(&cfg, arguments),
    }
}

fn mesh(cfg: &RunConfig, a: MeshArgs, arguments: Vec<String>) -> CliResult<i32> {
    let geom = cfg.geometry.cell();
    let mut art = Artifacts::new(&cfg.output.dir, "mesh", arguments)?;
    let (mesh, epsilon) = match a.kind {
        MeshKindArg::Cell => (build_cell_mesh_q(&geom, a.q.unwrap_or(cfg.mesh.cell_q[0])).module("geometry")?, None),
        MeshKindArg::Domain => {
            let e = match &a.eps {
                Some(s) => Epsilon::parse(s)?,
                None => cfg.fine.eps[0],
            };
            let q = a.q.unwrap_or(cfg.fine.q);
            (pipeline::domain_mesh(&geom, e.m, q, cfg.fine.dof_cap)?, Some(e))
        }
        MeshKindArg::Square => (unit_square_mesh(a.n.unwrap_or(cfg.mesh.macro_n[0])).module("geometry")?, None),
    };
    let report = mesh.report().module("geometry")?;
    let mut text = Vec::new();
    write_mesh(&mesh, &mut text).map_err(|source| CliError::Io { path: "mesh".into(), source })?;
    match &a.mesh_out {
        Some(path) => std::fs::write(path, &text).map_err(|source| CliError::Io { path: path.clone(), source })?,
        None => art.write("mesh.txt", &text)?,
    }
    art.json(
        "mesh_report.json",
        &json!({
            "inclusion": inclusion_label(&geom),
            "kind": format!("{:?}", mesh.kind),
            "h": mesh.h,
            "epsilon": epsilon.map(Epsilon::value),
            "report": report,
        }),
    )?;
    if a.dump_matrices {
        for (name, forms) in mesh_forms(&mesh, epsilon)? {
            for (which, label) in [(MatrixKind::Stiffness, "stiffness"), (MatrixKind::Mass, "mass")] {
                let mut buf = Vec::new();
                forms.dump(&mut buf, which).map_err(|source| CliError::Io { path: name.into(), source })?;
                art.write(&format!("{name}_{label}.txt"), &buf)?;
            }
        }
    }
    art.finish(cfg)?;
    Ok(0)
}

/// The constrained forms that belong with each mesh kind.
fn mesh_forms(mesh: &Mesh, epsilon: Option<Epsilon>) -> CliResult<Vec<(&'static str, fem::AssembledForms)>> {
    let forms = match mesh.kind {
        MeshKind::Cell { .. } => {
            let q0 = fem::assemble_phase(mesh, Region::Q0).module("fem")?;
            let q1 = fem::assemble_phase(mesh, Region::Q1).module("fem")?;
            vec![
                ("q0_dirichlet", fem::apply_constraints(&q0, ConstraintKind::DirichletGamma, mesh).module("fem")?),
                ("q1_periodic", fem::apply_constraints(&q1, ConstraintKind::PeriodicCell, mesh).module("fem")?),
            ]
        }
        MeshKind::Domain { .. } => {
            let e = epsilon.expect("domain meshes carry their epsilon").value();
            vec![("fine", pipeline::fine_forms(mesh, e)?)]
        }
        _ => {
            let f = fem::assemble(mesh, [1.0, 1.0], [1.0, 1.0], Subdomain::All).module("fem")?;
            vec![("dirichlet", fem::apply_constraints(&f, ConstraintKind::DirichletOuter, mesh).module("fem")?)]
        }
    };
    Ok(forms)
}

#[derive(Serialize)]
struct DirichletRow {
    value: f64,
    mean: f64,
    residual: f64,
    cluster: usize,
    zero_mean: bool,
}

fn dirichlet_rows(m: &Micro) -> Vec<DirichletRow> {
    let s = &m.spectrum;
    (0..s.values.len())
        .map(|i| {
            let cluster = s.clusters.iter().position(|c| c.indices.contains(&i)).unwrap_or(usize::MAX);
            DirichletRow {
                value: s.values[i],
                mean: s.means[i],
                residual: s.residuals[i],
                cluster,
                zero_mean: s.clusters.get(cluster).is_some_and(|c| c.zero_mean),
            }
        })
        .collect()
}

fn micro(cfg: &RunConfig, arguments: Vec<String>) -> CliResult<i32> {
    let mut art = Artifacts::new(&cfg.output.dir, "micro", arguments)?;
    let levels = Levels::from_config(cfg)?;
    art.stage("dirichlet");
    let table = pipeline::limit_table(&levels, cfg.backend(), cfg.micro.lambda_max)?;
    art.stage("limit_spectrum");
    let level_json: Vec<_> = levels
        .micro
        .iter()
        .zip(cfg.mesh.cell_q)
        .map(|(m, q)| {
            json!({
                "q": q,
                "h": m.spaces.h(),
                "area": m.spaces.area,
                "resolved": m.spectrum.resolved(),
                "torsion_moments": m.spectrum.torsion_moments,
                "dirichlet": dirichlet_rows(m),
                "poles": m.spectrum.poles(),
            })
        })
        .collect();
    let entries: Vec<_> = table
        .entries()
        .map(|(i, e, v)| {
            json!({
                "value": v,
                "value_h": table.coarse.entries[i].value,
                "value_h2": e.value,
                "multiplicity": e.multiplicity,
                "kind": e.kind,
                "bracket_id": e.bracket_id,
                "certificate": e.certificate,
            })
        })
        .collect();
    art.json(
        "micro.json",
        &json!({
            "inclusion": inclusion_label(&levels.geometry),
            "backend": cfg.backend(),
            "lambda_max": cfg.micro.lambda_max,
            "levels": level_json,
            "limit_spectrum": entries,
        }),
    )?;
    art.finish(cfg)?;
    Ok(0)
}

/// Evenly spaced points including both ends.
fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn beta(cfg: &RunConfig, spec: &str, arguments: Vec<String>) -> CliResult<i32> {
    let (lo, hi, n) = parse_range(spec, true)?;
    let mut art = Artifacts::new(&cfg.output.dir, "beta", arguments)?;
    let q = cfg.mesh.cell_q[1];
    let spaces = CellSpaces::new(&cfg.geometry.cell(), 0.5 / q as f64).module("geometry")?;
    let m = Micro::new(spaces, cfg.micro.modes, &cfg.tolerances).module("micro")?;
    let backend = cfg.backend();
    let poles = m.poles(backend, hi.max(m.spectrum.values[0])).module("micro")?;
    let mut rows = Vec::new();
    for lambda in grid(lo, hi, n.unwrap_or(1)) {
        let bracket = poles.iter().filter(|&&p| p < lambda).count();
        let (beta, b) = match m.beta(backend, lambda) {
            Ok(v) => (fmt17(v.beta), fmt17(v.b)),
            // within the pole tolerance β is unbounded
            Err(twoscale::Error::Pole { .. }) => (String::new(), String::new()),
            Err(e) => return Err(CliError::Module { module: "micro", source: e }),
        };
        rows.push(vec![fmt17(lambda), beta, b, backend.name().to_string(), bracket.to_string()]);
    }
    art.csv("beta.csv", &["lambda", "beta", "B", "backend", "bracket_id"], &rows)?;
    art.finish(cfg)?;
    Ok(0)
}

fn cell(cfg: &RunConfig, lambda0: &str, arguments: Vec<String>) -> CliResult<i32> {
    let mut art = Artifacts::new(&cfg.output.dir, "cell", arguments)?;
    let levels = Levels::from_config(cfg)?;
    let table = pipeline::limit_table(&levels, cfg.backend(), cfg.micro.lambda_max)?;
    let (t0, t1) = match lambda0.trim().parse::<usize>() {
        Ok(k) => {
            let c = pipeline::case_a(&levels, &table, table.root_entry(k)?)?;
            (c.levels[0], c.levels[1])
        }
        Err(_) => {
            let value: f64 =
                lambda0.trim().parse().map_err(|_| CliError::Usage(format!("bad --lambda0 '{lambda0}'")))?;
            // a root near the value on each level; otherwise the solvability check reports the defect
            let near = |s: &twoscale::micro::LimitSpectrum| {
                s.entries
                    .iter()
                    .filter(|e| e.kind == EntryKind::Root)
                    .map(|e| e.value)
                    .find(|r| (r - value).abs() <= 1e-2 * value.abs().max(1.0))
                    .unwrap_or(value)
            };
            let t0 = cell_problems(&levels.micro[0], near(&table.coarse)).module("cell")?.0;
            let t1 = cell_problems(&levels.micro[1], near(&table.fine)).module("cell")?.0;
            (t0, t1)
        }
    };
    let e = extrapolate_tensors(&t0, &t1);
    art.json(
        "cell.json",
        &json!({
            "inclusion": inclusion_label(&levels.geometry),
            "lambda0": e.lambda0,
            "a_hom": e.a_hom.a,
            "a_hom_eigenvalues": e.a_hom.eigenvalues(),
            "c": e.c,
            "c_flux": e.c_flux,
            "p_int": e.p_int,
            "k": e.k,
            "nu_coefficients": { "slope": e.c, "offset": e.nu_offset() },
            "k_norm": { "h": t0.k_norm(), "h2": t1.k_norm(), "extrapolated": e.k_norm() },
            "residuals": t1.identities,
            "levels": [t0, t1],
            "extrapolated": e,
        }),
    )?;
    art.finish(cfg)?;
    Ok(0)
}

fn macro_cmd(cfg: &RunConfig, alpha: Option<f64>, arguments: Vec<String>) -> CliResult<i32> {
    let mut art = Artifacts::new(&cfg.output.dir, "macro", arguments)?;
    let a = match alpha {
        Some(x) if x > 0.0 => HomogenizedMatrix::isotropic(x),
        Some(x) => return Err(CliError::Usage(format!("--alpha must be positive, got {x}"))),
        None => pipeline::homogenized(&Levels::from_config(cfg)?)?[2],
    };
    let ml = pipeline::macro_levels(&a, cfg.mesh.macro_n, cfg.macro_.count, &cfg.tolerances)?;
    let rows: Vec<Vec<String>> = (0..ml.extrapolated.values.len())
        .map(|i| {
            let cluster = ml.extrapolated.clusters.iter().position(|c| c.contains(&i)).unwrap_or(0);
            vec![
                (i + 1).to_string(),
                fmt17(ml.spectra[0].values[i]),
                fmt17(ml.spectra[1].values[i]),
                fmt17(ml.extrapolated.values[i]),
                (cluster + 1).to_string(),
            ]
        })
        .collect();
    art.csv("macro.csv", &["index", "nu_h", "nu_h2", "nu", "level"], &rows)?;
    art.json("macro.json", &json!({ "a_hom": a, "macro_n": cfg.mesh.macro_n }))?;
    art.finish(cfg)?;
    Ok(0)
}

/// Levels, limit table, branches and extrapolated homogenized spectrum.
pub struct Model {
    pub levels: Levels,
    pub table: pipeline::LimitTable,
    pub branches: pipeline::Branches,
    pub a_hom: [HomogenizedMatrix; 3],
    pub macro_levels: pipeline::MacroLevels,
}

pub fn model(cfg: &RunConfig) -> CliResult<Model> {
    let levels = Levels::from_config(cfg)?;
    let table = pipeline::limit_table(&levels, cfg.backend(), cfg.micro.lambda_max)?;
    let branches = pipeline::branches(&levels, &table)?;
    let a_hom = pipeline::homogenized(&levels)?;
    let macro_levels = pipeline::macro_levels(&a_hom[2], cfg.mesh.macro_n, cfg.macro_.count, &cfg.tolerances)?;
    Ok(Model { levels, table, branches, a_hom, macro_levels })
}

pub fn prediction_rows(p: &[Prediction]) -> Vec<Vec<String>> {
    p.iter()
        .map(|p| {
            vec![
                fmt17(p.lambda0),
                p.case.clone(),
                p.nu_index.map(|i| i.to_string()).unwrap_or_default(),
                opt17(p.nu),
                fmt17(p.lambda1),
                fmt17(p.epsilon),
                fmt17(p.lambda_eps),
            ]
        })
        .collect()
}

pub const PREDICTION_HEADER: [&str; 7] = ["lambda0", "case", "nu_index", "nu", "lambda1", "eps", "Lambda"];

fn predict(cfg: &RunConfig, arguments: Vec<String>) -> CliResult<i32> {
    let mut art = Artifacts::new(&cfg.output.dir, "predict", arguments)?;
    let m = model(cfg)?;
    art.stage("model");
    let eps: Vec<f64> = cfg.fine.eps.iter().map(|e| e.value()).collect();
    let p = pipeline::predict(&m.branches.branches, &m.macro_levels.extrapolated, cfg.macro_.levels, &eps)?;
    art.csv("predictions.csv", &PREDICTION_HEADER, &prediction_rows(&p))?;
    art.json(
        "predict.json",
        &json!({
            "inclusion": inclusion_label(&m.levels.geometry),
            "a_hom": m.a_hom[2],
            "nu": m.macro_levels.extrapolated.levels(),
            "branches": m.branches.records,
        }),
    )?;
    art.finish(cfg)?;
    Ok(0)
}

/// Everything `caseb` reports for one mode.
pub fn caseb_report(cfg: &RunConfig, levels: &Levels) -> CliResult<(serde_json::Value, Option<CliError>)> {
    let j = cfg.caseb.mode_index;
    let lam = pipeline::case_b_lambda(levels, j)?;
    let fine = levels.fine();
    let mode = zero_mean_mode(fine, j).module("caseb")?;
    let mut out = json!({
        "inclusion": inclusion_label(&levels.geometry),
        "mode_index": j,
        "multiplicity": mode.multiplicity,
        "reduced_by": mode.reduced_by.map(|s| format!("{s:?}")),
        "lambda0": lam.lambda0_extrapolated,
        "lambda1": lam.lambda1_extrapolated,
        "lambda0_levels": lam.lambda0,
        "lambda1_levels": lam.lambda1,
    });
    let sol = match solve_case_b(fine, mode) {
        Ok(s) => s,
        Err(e) => {
            out["a_tilde"] = serde_json::Value::Null;
            out["error"] = json!(format!("caseb: {e}"));
            return Ok((out, Some(CliError::Module { module: "caseb", source: e })));
        }
    };
    let rel = (sol.lambda1_boundary - sol.lambda1_volume).abs() / sol.lambda1.abs().max(f64::MIN_POSITIVE);
    let gauge: Vec<f64> = [1.0, -250.0].iter().map(|&s| gauge_shift(&fine.spaces, &sol, s)).collect();
    let eps: Vec<f64> = cfg.caseb.residual_eps.iter().map(|e| e.value()).collect();
    let residual = residual_orders(fine, &sol, &eps).module("caseb")?;
    let extra = json!({
        "lambda1_h2": sol.lambda1,
        "lambda1_boundary": sol.lambda1_boundary,
        "lambda1_volume": sol.lambda1_volume,
        "lambda1_forms_relative_gap": rel,
        "a_tilde": sol.a_tilde,
        "a_tilde_flux": sol.a_tilde_flux,
        "gauge_deviation": gauge,
        "b0": sol.b0,
        "eta_mean": sol.eta_mean,
        "v1_defect": sol.v1_defect,
        "w1_flux_total": sol.w1_flux_total,
        "z_error": sol.z_error,
        "residual": residual,
    });
    for (k, v) in extra.as_object().unwrap() {
        out[k] = v.clone();
    }
    Ok((out, None))
}

fn caseb(cfg: &RunConfig, arguments: Vec<String>) -> CliResult<i32> {
    let mut art = Artifacts::new(&cfg.output.dir, "caseb", arguments)?;
    let levels = Levels::from_config(cfg)?;
    let (report, err) = caseb_report(cfg, &levels)?;
    art.json("caseb.json", &report)?;
    art.finish(cfg)?;
    match err {
        Some(e) => Err(e),
        None => Ok(0),
    }
}

/// Identifies one predicted curve ε ↦ Λ_ε: λ₀ entry and homogenized level.
fn curve_key(p: &Prediction) -> (u64, Option<usize>) {
    (p.lambda0.to_bits(), p.nu_index)
}

fn fine(cfg: &RunConfig, arguments: Vec<String>) -> CliResult<i32> {
    let mut art = Artifacts::new(&cfg.output.dir, "fine", arguments)?;
    let tol = &cfg.tolerances;
    let m = model(cfg)?;
    art.stage("model");
    let geom = m.levels.geometry;
    let eps: Vec<f64> = cfg.fine.eps.iter().map(|e| e.value()).collect();
    let preds = pipeline::predict(&m.branches.branches, &m.macro_levels.extrapolated, cfg.macro_.levels, &eps)?;
    let [lo, hi] = cfg.fine.window;
    let mut keys: Vec<(u64, Option<usize>)> = Vec::new();
    for p in &preds {
        if !keys.contains(&curve_key(p)) {
            keys.push(curve_key(p));
        }
    }
    let mut window_values = Vec::new();
    // per curve, per ε
    let mut levels: Vec<Vec<FineLevel>> = vec![Vec::new(); keys.len()];
    for e in &cfg.fine.eps {
        let ev = e.value();
        let mesh = pipeline::domain_mesh(&geom, e.m, cfg.fine.q, cfg.fine.dof_cap)?;
        let forms = pipeline::fine_forms(&mesh, ev)?;
        let s = fine_spectrum(&forms, &mesh, ev, [lo, hi], cfg.fine.max_count, tol).module("finescale")?;
        drop(forms);
        let at: Vec<&Prediction> = preds.iter().filter(|p| p.epsilon == ev).collect();
        let control = pipeline::control_mesh(&geom, e.m, cfg.fine.q, cfg.fine.dof_cap)?;
        let cforms = match &control {
            Some((_, cm)) => Some(pipeline::fine_forms(cm, ev)?),
            None => None,
        };
        for (k, key) in keys.iter().enumerate() {
            let Some(p) = at.iter().find(|p| curve_key(p) == *key) else { continue };
            let ctrl = match (&control, &cforms) {
                (Some((_, cm)), Some(cf)) if p.lambda_eps > lo && p.lambda_eps < hi => {
                    Some(pipeline::nearest(cf, cm, ev, p.lambda_eps, cfg.fine.nearest, tol)?.values)
                }
                _ => None,
            };
            levels[k].push(FineLevel { epsilon: ev, h: mesh.h, values: s.values.clone(), control: ctrl });
        }
        window_values.push((ev, mesh.h, s.values));
        art.stage(&format!("eps_1/{}", e.m));
    }
    let mut reports: Vec<RateReport> = Vec::new();
    for (k, key) in keys.iter().enumerate() {
        let p0 = preds.iter().find(|p| curve_key(p) == *key).unwrap();
        let neighbours = |e: f64| {
            preds.iter().filter(|p| p.epsilon == e && curve_key(p) != *key).map(|p| p.lambda_eps).collect::<Vec<f64>>()
        };
        reports.push(match_and_rate(p0.lambda0, p0.lambda1, &levels[k], &neighbours, tol).module("finescale")?);
    }
    let mut rows = Vec::new();
    for (ev, h, values) in &window_values {
        for &v in values {
            // the closest prediction that claimed this eigenvalue
            let hit = reports
                .iter()
                .filter_map(|r| r.points.iter().find(|pt| pt.epsilon == *ev && pt.lambda_eps == Some(v)))
                .min_by(|a, b| a.error.unwrap().total_cmp(&b.error.unwrap()));
            rows.push(vec![
                fmt17(*ev),
                fmt17(*h),
                fmt17(v),
                opt17(hit.map(|p| p.predicted)),
                opt17(hit.and_then(|p| p.error)),
                opt17(hit.and_then(|p| p.slope_running)),
            ]);
        }
    }
    art.csv("fine.csv", &["eps", "h", "lambda_eps", "matched_Lambda", "error", "slope_running"], &rows)?;
    art.json("fine.json", &json!({ "window": cfg.fine.window, "rates": reports }))?;
    art.finish(cfg)?;
    Ok(0)
}
