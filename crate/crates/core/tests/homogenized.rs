use std::f64::consts::PI;

use twoscale::cell::{cell_problems, extrapolate_tensors, CellTensors, HomogenizedMatrix};
use twoscale::fem::{self, ConstraintKind, Subdomain};
use twoscale::geometry::{unit_square_mesh, CellGeometry};
use twoscale::homogenized::{gap_intervals, lambda1_case_a, macro_spectrum, predictions, Branch, GapEnd};
use twoscale::micro::{BetaBackend, CaseTag, CellSpaces, Micro};
use twoscale::richardson::extrapolate;
use twoscale::Tolerances;

fn tol() -> Tolerances {
    Tolerances::default()
}

#[test]
fn isotropic_closed_loop() {
    let alpha = 0.7;
    let a = HomogenizedMatrix::isotropic(alpha);
    let [c, f] = [32, 64].map(|n| macro_spectrum(&a, &unit_square_mesh(n).unwrap(), 4, &tol()).unwrap());
    let exact = [2.0, 5.0, 5.0, 8.0].map(|k| k * PI * PI * alpha);
    for i in 0..4 {
        let e = extrapolate(c.values[i], f.values[i], 2.0);
        assert!((e - exact[i]).abs() < 1e-4 * exact[i], "ν{} = {e} vs {}", i + 1, exact[i]);
    }
    let levels = f.levels();
    assert_eq!(levels[0].2, 1);
    assert_eq!((levels[1].0, levels[1].2), (2, 2));
    assert!(f.values.windows(2).all(|w| w[0] > 0.0 && w[1] >= w[0]));
    assert!(f.values[0] < f.values[1]);
}

#[test]
fn identity_tensor_reduces_to_dirichlet_laplacian() {
    let mesh = unit_square_mesh(16).unwrap();
    let s = macro_spectrum(&HomogenizedMatrix::isotropic(1.0), &mesh, 6, &tol()).unwrap();
    let forms = fem::assemble(&mesh, [1.0, 1.0], [1.0, 1.0], Subdomain::All).unwrap();
    let forms = fem::apply_constraints(&forms, ConstraintKind::DirichletOuter, &mesh).unwrap();
    let r = fem::solve_eigen(&forms, 6, None, &tol()).unwrap();
    for (a, b) in s.values.iter().zip(&r.values) {
        assert!((a - b).abs() < 1e-12 * b);
    }
}

#[test]
fn tensor_scaling_scales_every_eigenvalue() {
    let mesh = unit_square_mesh(12).unwrap();
    let a = HomogenizedMatrix { a: [[0.8, 0.1], [0.1, 0.6]], antisymmetry: 0.0 };
    let s1 = macro_spectrum(&a, &mesh, 6, &tol()).unwrap();
    let s2 = macro_spectrum(&a.scaled(2.0), &mesh, 6, &tol()).unwrap();
    for (x, y) in s1.values.iter().zip(&s2.values) {
        assert!((y - 2.0 * x).abs() < 1e-10 * y);
    }
}

#[test]
fn eigenfunctions_are_orthonormal() {
    let mesh = unit_square_mesh(12).unwrap();
    let s = macro_spectrum(&HomogenizedMatrix::isotropic(0.5), &mesh, 5, &tol()).unwrap();
    let m = fem::assemble(&mesh, [1.0, 1.0], [1.0, 1.0], Subdomain::All).unwrap().mass_full;
    for i in 0..5 {
        for j in 0..5 {
            let g = m.bilinear(&s.vectors[i], &s.vectors[j]);
            let d = if i == j { 1.0 } else { 0.0 };
            assert!((g - d).abs() < 1e-8);
        }
    }
}

fn tensors(lambda0: f64, c: f64, p_int: f64) -> CellTensors {
    let m = Micro::new(CellSpaces::new(&CellGeometry::disk(0.25), 1.0 / 8.0).unwrap(), 4, &tol()).unwrap();
    let (mut t, _) = cell_problems(&m, 0.0).unwrap();
    t.lambda0 = lambda0;
    t.c = c;
    t.p_int = p_int;
    t
}

#[test]
fn lambda1_at_zero_frequency() {
    let t = tensors(0.0, 0.0, 0.0);
    let t = CellTensors { c: t.area[0], ..t };
    let alpha = 0.8;
    let nu = 2.0 * PI * PI * alpha;
    assert!((lambda1_case_a(nu, &t).unwrap() - nu / t.area[0]).abs() < 1e-12);
    let delta = 3.25;
    let d = lambda1_case_a(nu + delta, &t).unwrap() - lambda1_case_a(nu, &t).unwrap();
    assert!((d - delta / t.c).abs() < 1e-12);
    let bad = CellTensors { c: 0.0, ..t };
    assert!(lambda1_case_a(nu, &bad).is_err());
}

#[test]
fn predictions_are_affine_in_epsilon() {
    let t = tensors(120.0, 0.3, -0.01);
    let mesh = unit_square_mesh(8).unwrap();
    let s = macro_spectrum(&HomogenizedMatrix::isotropic(0.8), &mesh, 4, &tol()).unwrap();
    let eps = [0.0, 0.5, 0.25];
    let tag = CaseTag::BII { cluster: 200.0, multiplicity: 1, b: 1.0, b_vanishes: false };
    let branches = [Branch::A { tensors: t }, Branch::B { lambda0: 200.0, lambda1: -4.0, tag }];
    let p = predictions(&branches, &s, 2, &eps).unwrap();
    assert_eq!(p.len(), 2 * 3 + 3);
    for chunk in p.chunks(3) {
        assert_eq!(chunk[0].lambda_eps, chunk[0].lambda0);
        let d = chunk[1].lambda_eps - chunk[2].lambda_eps;
        assert!((d - 0.25 * chunk[0].lambda1).abs() < 1e-12 * chunk[0].lambda0);
    }
    // monotone in ν for fixed λ₀
    assert!(p[3].lambda1 > p[0].lambda1);
    assert_eq!(p[3].multiplicity, 2);
    assert_eq!(p[6].case, "b-ii");
    assert!(p[6].nu_index.is_none());
}

#[test]
fn disk_gaps_run_from_pole_to_root() {
    let m = Micro::new(CellSpaces::new(&CellGeometry::disk(0.25), 1.0 / 16.0).unwrap(), 10, &tol()).unwrap();
    let backend = BetaBackend::AnalyticBall { radius: 0.25, dimension: 2 };
    let first_pole = m.poles(backend, 1e3).unwrap()[0];
    assert!(gap_intervals(&m, backend, 0.9 * first_pole).unwrap().is_empty());
    let gaps = gap_intervals(&m, backend, 600.0).unwrap();
    assert!(!gaps.is_empty());
    assert_eq!(gaps[0].lo, first_pole);
    assert_eq!(gaps[0].lo_end, GapEnd::Pole);
    let roots = m.limit_spectrum(backend, 600.0).unwrap().roots();
    for g in &gaps {
        assert!(g.b_mid < 0.0 && g.lo < g.hi);
        if g.hi_end == GapEnd::Root {
            assert!(roots.contains(&g.hi));
        }
    }
    assert!(gaps.iter().any(|g| g.hi == roots[1]));
}

#[test]
fn ellipse_gap_is_split_at_zero_mean_eigenvalue() {
    let m = Micro::new(CellSpaces::new(&CellGeometry::ellipse(0.3, 0.2), 1.0 / 32.0).unwrap(), 30, &tol()).unwrap();
    let gaps = gap_intervals(&m, BetaBackend::Direct, 300.0).unwrap();
    let z = m.spectrum.zero_mean_clusters().next().unwrap().value;
    assert_eq!(gaps[0].hi, z);
    assert_eq!(gaps[0].hi_end, GapEnd::ZeroMean);
    assert_eq!(gaps[1].lo, z);
    assert_eq!(gaps[1].hi_end, GapEnd::Root);
    let [a, b] = gaps[0].shrunk(0.15);
    assert!((b - a - 0.7 * (gaps[0].hi - gaps[0].lo)).abs() < 1e-9);
}

#[test]
fn ellipse_second_root_lambda1_fixture() {
    let t = [16, 32].map(|q| {
        let m = Micro::new(CellSpaces::new(&CellGeometry::ellipse(0.3, 0.2), 0.5 / q as f64).unwrap(), 30, &tol())
            .unwrap();
        let mu2 = m.limit_spectrum(BetaBackend::Direct, 400.0).unwrap().roots()[1];
        cell_problems(&m, mu2).unwrap().0
    });
    let e = extrapolate_tensors(&t[0], &t[1]);
    let mesh = |n| unit_square_mesh(n).unwrap();
    let nu = [32, 64].map(|n| macro_spectrum(&e.a_hom, &mesh(n), 1, &tol()).unwrap().values[0]);
    let nu1 = extrapolate(nu[0], nu[1], 2.0);
    let l1 = lambda1_case_a(nu1, &e).unwrap();
    // frozen from this pipeline (q = 16, 32 cells; n = 32, 64 squares)
    assert!((e.lambda0 - 2.449026385245e2).abs() < 1e-8 * e.lambda0);
    assert!((e.c - 2.515127255225e-1).abs() < 1e-8);
    assert!((nu1 - 1.326455280172e1).abs() < 1e-8 * nu1);
    assert!((l1 - -8.061597328886e2).abs() < 1e-7 * l1.abs(), "{l1}");
    // the homogenized level sits far below λ₀|Q₁|, so λ₁ < 0
    assert!(l1 < 0.0);
}
