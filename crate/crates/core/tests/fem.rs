use twoscale::fem::{
    apply_constraints, assemble, assemble_phase, gamma_normal_load, region_integral, solve_dirichlet, solve_eigen,
    solve_neumann, ConstraintKind, Subdomain,
};
use proptest::prelude::*;
use twoscale::eigen::Backend;
use twoscale::geometry::{build_cell_mesh, unit_square_mesh, CellGeometry, Region};
use twoscale::{Error, Tolerances};

#[test]
fn stiffness_annihilates_constants_and_mass_integrates_one() {
    let mesh = build_cell_mesh(&CellGeometry::disk(0.25), 1.0 / 16.0).unwrap();
    let f = assemble(&mesh, [0.125, 1.0], [1.0, 1.0], Subdomain::All).unwrap();
    let ones = vec![1.0; mesh.vertices.len()];
    let k1 = f.stiffness_full.mul_vec(&ones);
    assert!(k1.iter().all(|x| x.abs() < 1e-12));
    assert!((f.mass_full.bilinear(&ones, &ones) - 1.0).abs() < 1e-13);
    assert!(f.stiffness_full.asymmetry() < 1e-14);
}

#[test]
fn linear_fields_are_reproduced() {
    let mesh = unit_square_mesh(8).unwrap();
    let f = assemble_phase(&mesh, Region::Q1).unwrap();
    let f = apply_constraints(&f, ConstraintKind::DirichletOuter, &mesh).unwrap();
    let g: Vec<f64> = mesh.vertices.iter().map(|p| 2.0 * p[0] - p[1] + 0.5).collect();
    let zero = vec![0.0; g.len()];
    let u = solve_dirichlet(&f, 0.0, &zero, &g, &Tolerances::default()).unwrap();
    for (a, b) in u.iter().zip(&g) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn square_dirichlet_eigenvalue_converges_to_two_pi_squared() {
    let exact = 2.0 * std::f64::consts::PI.powi(2);
    let tol = Tolerances::default();
    let mut errs = Vec::new();
    for n in [16, 32, 64] {
        let mesh = unit_square_mesh(n).unwrap();
        let f = apply_constraints(&assemble_phase(&mesh, Region::Q1).unwrap(), ConstraintKind::DirichletOuter, &mesh)
            .unwrap();
        let s = solve_eigen(&f, 1, None, &tol).unwrap();
        errs.push(s.values[0] - exact);
    }
    assert!(errs.iter().all(|&e| e > 0.0));
    let rate = (errs[1] / errs[2]).log2();
    assert!((rate - 2.0).abs() < 0.1, "rate {rate}");
    assert!(errs[2] / exact < 2e-3);
}

#[test]
fn disk_dirichlet_ground_state() {
    // (j_{0,1} / a)² for a = 1/4
    let exact = 92.53097540714853;
    let mesh = build_cell_mesh(&CellGeometry::disk(0.25), 1.0 / 32.0).unwrap();
    let f = apply_constraints(&assemble_phase(&mesh, Region::Q0).unwrap(), ConstraintKind::DirichletGamma, &mesh)
        .unwrap();
    let s = solve_eigen(&f, 3, None, &Tolerances::default()).unwrap();
    assert!((s.values[0] - exact).abs() / exact < 5e-3, "{}", s.values[0]);
    // second eigenvalue of a disk is double
    assert_eq!(s.clusters[1].len(), 2);
}

#[test]
fn periodic_problem_reports_incompatible_load() {
    let mesh = build_cell_mesh(&CellGeometry::disk(0.2), 1.0 / 8.0).unwrap();
    let f = assemble_phase(&mesh, Region::Q1).unwrap();
    let f = apply_constraints(&f, ConstraintKind::PeriodicCell, &mesh).unwrap();
    let rhs = vec![1.0; f.n_free];
    assert!(matches!(solve_neumann(&f, &rhs, &Tolerances::default()), Err(Error::Incompatible { .. })));
}

#[test]
fn gamma_normal_load_integrates_the_normal() {
    // ∫_Γ n₁ x₁ = |Q₀| by the divergence theorem on the inclusion polygon
    let mesh = build_cell_mesh(&CellGeometry::ellipse(0.3, 0.2), 1.0 / 16.0).unwrap();
    let b = gamma_normal_load(&mesh, 0);
    let x: Vec<f64> = mesh.vertices.iter().map(|p| p[0]).collect();
    let flux: f64 = b.iter().zip(&x).map(|(a, c)| a * c).sum();
    assert!((flux - mesh.region_area(Region::Q0)).abs() < 1e-13);
    let ones = vec![1.0; x.len()];
    assert!((region_integral(&mesh, Subdomain::Only(Region::Q0), &ones) - mesh.region_area(Region::Q0)).abs() < 1e-14);
}

#[test]
fn nonpositive_coefficient_is_rejected() {
    let mesh = unit_square_mesh(4).unwrap();
    assert!(matches!(
        assemble(&mesh, [0.0, 1.0], [1.0, 1.0], Subdomain::All),
        Err(Error::NonPositiveCoefficient { .. })
    ));
}

fn square_forms(n: usize) -> twoscale::fem::AssembledForms {
    let mesh = unit_square_mesh(n).unwrap();
    apply_constraints(&assemble_phase(&mesh, Region::Q1).unwrap(), ConstraintKind::DirichletOuter, &mesh).unwrap()
}

#[test]
fn dense_and_lanczos_backends_agree() {
    let f = build_cell_mesh(&CellGeometry::disk(0.25), 1.0 / 24.0).unwrap();
    let f = apply_constraints(&assemble_phase(&f, Region::Q0).unwrap(), ConstraintKind::DirichletGamma, &f).unwrap();
    assert!(f.n_free > 600 && f.n_free <= 4000);
    let dense = Tolerances { dense_max_dofs: 4000, ..Tolerances::default() };
    let sparse = Tolerances { dense_max_dofs: 0, ..Tolerances::default() };
    let a = solve_eigen(&f, 8, None, &dense).unwrap();
    let b = solve_eigen(&f, 8, None, &sparse).unwrap();
    assert_eq!(a.backend, Backend::Dense);
    assert_eq!(b.backend, Backend::Lanczos);
    assert_eq!(a.values.len(), b.values.len());
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() <= 1e-7 * x, "{x} vs {y}");
    }
}

#[test]
fn returned_pairs_satisfy_residual_and_rayleigh_bounds() {
    let f = build_cell_mesh(&CellGeometry::ellipse(0.3, 0.2), 1.0 / 32.0).unwrap();
    let f = apply_constraints(&assemble_phase(&f, Region::Q0).unwrap(), ConstraintKind::DirichletGamma, &f).unwrap();
    let s = solve_eigen(&f, 6, None, &Tolerances::default()).unwrap();
    for (i, (lam, v)) in s.values.iter().zip(&s.vectors).enumerate() {
        let kv = f.stiffness.mul_vec(v);
        let mv = f.mass.mul_vec(v);
        let r: f64 = kv.iter().zip(&mv).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
        let mnorm = mv.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(r <= 1e-8 * mnorm * lam.max(1.0));
        let rq = f.stiffness.bilinear(v, v) / f.mass.bilinear(v, v);
        assert!((rq - lam).abs() <= 1e-9 * lam);
        for (j, w) in s.vectors.iter().enumerate() {
            let g = f.mass.bilinear(v, w);
            assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
        }
    }
}

#[test]
fn conforming_eigenvalues_decrease_under_nested_refinement() {
    let tol = Tolerances::default();
    let v: Vec<Vec<f64>> = [8, 16, 32].iter().map(|&n| solve_eigen(&square_forms(n), 4, None, &tol).unwrap().values).collect();
    for k in 0..4 {
        assert!(v[0][k] > v[1][k] && v[1][k] > v[2][k], "level {k}: {v:?}");
        let exact = [2.0, 5.0, 5.0, 8.0][k] * std::f64::consts::PI.powi(2);
        assert!(v[2][k] > exact);
    }
}

#[test]
fn shift_returns_the_spectrum_above_it() {
    let tol = Tolerances::default();
    let f = square_forms(16);
    let low = solve_eigen(&f, 6, None, &tol).unwrap();
    // λ₂ = λ₃ on the symmetric mesh; a shift between λ₃ and λ₄ starts at λ₄
    let shift = 0.5 * (low.values[2] + low.values[3]);
    let above = solve_eigen(&f, 2, Some(shift), &tol).unwrap();
    assert!((above.values[0] - low.values[3]).abs() < 1e-9 * low.values[3]);
    assert!(above.values.iter().all(|&x| x > shift));
}

#[test]
fn constraint_kinds() {
    let mesh = build_cell_mesh(&CellGeometry::disk(0.25), 1.0 / 8.0).unwrap();
    let q0 = assemble_phase(&mesh, Region::Q0).unwrap();
    let gamma = mesh.gamma_vertices();
    let c = apply_constraints(&q0, ConstraintKind::ConstantOnGamma, &mesh).unwrap();
    let d = apply_constraints(&q0, ConstraintKind::DirichletGamma, &mesh).unwrap();
    assert_eq!(c.n_free, d.n_free + 1);
    let shared = c.dof_of_vertex[gamma[0]].unwrap();
    assert!(gamma.iter().all(|&v| c.dof_of_vertex[v] == Some(shared)));
    assert!(gamma.iter().all(|&v| d.dof_of_vertex[v].is_none()));

    let q1 = apply_constraints(&assemble_phase(&mesh, Region::Q1).unwrap(), ConstraintKind::PeriodicCell, &mesh).unwrap();
    let k1 = q1.stiffness.mul_vec(&vec![1.0; q1.n_free]);
    assert!(k1.iter().all(|x| x.abs() < 1e-12));
    for (axis, pairs) in mesh.periodic_pairs().iter().enumerate() {
        assert!(!pairs.is_empty(), "axis {axis}");
        for &(a, b) in pairs {
            assert_eq!(q1.dof_of_vertex[a], q1.dof_of_vertex[b]);
        }
    }
    assert!(q1.stiffness.asymmetry() < 1e-12 && q1.mass.asymmetry() < 1e-12);

    let sq = unit_square_mesh(6).unwrap();
    let outer = apply_constraints(&assemble_phase(&sq, Region::Q1).unwrap(), ConstraintKind::DirichletOuter, &sq).unwrap();
    assert!(sq.outer_vertices().iter().all(|&v| outer.dof_of_vertex[v].is_none()));
    assert_eq!(outer.n_free, 25);
}

#[test]
fn compatible_neumann_load_gives_zero_mean_solution() {
    let mesh = build_cell_mesh(&CellGeometry::disk(0.2), 1.0 / 8.0).unwrap();
    let f = apply_constraints(&assemble_phase(&mesh, Region::Q1).unwrap(), ConstraintKind::PeriodicCell, &mesh).unwrap();
    let mut rhs: Vec<f64> = (0..f.n_free).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
    let mean = rhs.iter().sum::<f64>() / f.n_free as f64;
    rhs.iter_mut().for_each(|x| *x -= mean);
    let (u, defect) = solve_neumann(&f, &rhs, &Tolerances::default()).unwrap();
    assert!(defect.abs() < 1e-12);
    let m1 = f.mass.mul_vec(&vec![1.0; f.n_free]);
    assert!(m1.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-12);
}

#[test]
fn fine_scale_coefficients_enter_linearly() {
    let mesh = twoscale::geometry::build_domain_mesh(&CellGeometry::disk(0.25), 0.25, 0.25 / 16.0, 300_000).unwrap();
    let e = 0.25;
    let f = assemble(&mesh, [e, 1.0], [1.0 / e, 1.0], Subdomain::All).unwrap();
    let g = assemble(&mesh, [2.0 * e, 2.0], [2.0 / e, 2.0], Subdomain::All).unwrap();
    for (a, b) in f.stiffness_full.values().iter().zip(g.stiffness_full.values()) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300));
    }
    for (a, b) in f.mass_full.values().iter().zip(g.mass_full.values()) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn assembled_forms_are_symmetric_and_conservative(a0 in 0.01f64..10.0, a1 in 0.01f64..10.0, r0 in 0.01f64..10.0, r1 in 0.01f64..10.0, q in 2usize..5) {
        let mesh = twoscale::geometry::build_cell_mesh_q(&CellGeometry::ellipse(0.3, 0.2), q).unwrap();
        let f = assemble(&mesh, [a0, a1], [r0, r1], Subdomain::All).unwrap();
        prop_assert!(f.stiffness_full.asymmetry() < 1e-12 && f.mass_full.asymmetry() < 1e-12);
        let ones = vec![1.0; mesh.vertices.len()];
        let scale = a0.max(a1);
        prop_assert!(f.stiffness_full.mul_vec(&ones).iter().all(|x| x.abs() < 1e-11 * scale));
        let total = f.mass_full.bilinear(&ones, &ones);
        let expected = r0 * mesh.region_area(Region::Q0) + r1 * mesh.region_area(Region::Q1);
        prop_assert!((total - expected).abs() < 1e-12 * expected);
        // positive semi-definite: uᵀKu ≥ 0 for a deterministic probe
        let u: Vec<f64> = mesh.vertices.iter().map(|p| (7.0 * p[0]).sin() + p[1] * p[1]).collect();
        prop_assert!(f.stiffness_full.bilinear(&u, &u) >= 0.0);
    }
}
