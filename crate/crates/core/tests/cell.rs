use std::collections::HashMap;
use std::sync::OnceLock;

use twoscale::cell::{
    cell_problems, extrapolate_tensors, homogenized_convergence, homogenized_matrix, solve_nj, CellFields,
    CellTensors,
};
use twoscale::geometry::CellGeometry;
use twoscale::micro::{BetaBackend, CellSpaces, Micro};
use twoscale::{Error, Tolerances};

fn spaces(geom: &CellGeometry, q: usize) -> CellSpaces {
    CellSpaces::new(geom, 0.5 / q as f64).unwrap()
}

fn ellipse_micro(q: usize) -> Micro {
    let sp = spaces(&CellGeometry::ellipse(0.3, 0.2), q);
    Micro::new(sp, 30, &Tolerances::default()).unwrap()
}

/// Ellipse cell at q = 16 and 32 with every cell problem solved at the
/// second limit-spectrum root of the same mesh.
fn ellipse_cells() -> &'static [(CellTensors, CellFields, Micro); 2] {
    static C: OnceLock<[(CellTensors, CellFields, Micro); 2]> = OnceLock::new();
    C.get_or_init(|| {
        [16, 32].map(|q| {
            let m = ellipse_micro(q);
            let mu2 = m.limit_spectrum(BetaBackend::Direct, 400.0).unwrap().roots()[1];
            let (t, f) = cell_problems(&m, mu2).unwrap();
            (t, f, m)
        })
    })
}

fn key(x: f64, y: f64) -> (i64, i64) {
    ((x * 1e9).round() as i64, (y * 1e9).round() as i64)
}

#[test]
fn disk_correctors_are_swap_symmetric() {
    let sp = spaces(&CellGeometry::disk(0.25), 16);
    let nj = solve_nj(&sp, &Tolerances::default()).unwrap();
    let verts = &sp.mesh.vertices;
    let index: HashMap<_, _> = verts.iter().enumerate().map(|(i, p)| (key(p[0], p[1]), i)).collect();
    let mut checked = 0;
    for (i, p) in verts.iter().enumerate() {
        if !sp.q1.active[i] {
            continue;
        }
        let j = *index.get(&key(p[1], p[0])).expect("mesh is symmetric under y1 <-> y2");
        assert!((nj.n[1][i] - nj.n[0][j]).abs() < 1e-6, "vertex {i}");
        checked += 1;
    }
    assert!(checked > 100);
    for c in nj.compatibility {
        assert!(c.abs() < 1e-12);
    }
}

#[test]
fn disk_homogenized_matrix_is_isotropic_and_below_matrix_area() {
    let sp = spaces(&CellGeometry::disk(0.25), 16);
    let nj = solve_nj(&sp, &Tolerances::default()).unwrap();
    let a = homogenized_matrix(&sp, &nj);
    assert!(a.antisymmetry < 1e-10, "{}", a.antisymmetry);
    let [l0, l1] = a.eigenvalues();
    assert!(l0 > 0.0);
    assert!((l1 - l0) < 1e-5, "{l0} {l1}");
    assert!(a.a[0][1].abs() < 1e-5);
    assert!(l1 < sp.area[1]);
    // ∫|∇N_j|² = |Q₁| − A_jj
    for j in 0..2 {
        assert!((nj.energy[j] - (sp.area[1] - a.a[j][j])).abs() < 1e-10);
    }
}

#[test]
fn small_disk_is_nearly_homogeneous() {
    let sp = spaces(&CellGeometry::disk(0.05), 16);
    let nj = solve_nj(&sp, &Tolerances::default()).unwrap();
    let a = homogenized_matrix(&sp, &nj);
    for j in 0..2 {
        for k in 0..2 {
            let delta = if j == k { 1.0 } else { 0.0 };
            assert!((a.a[j][k] - delta).abs() < 2e-2);
        }
    }
}

#[test]
fn homogenized_matrix_converges_at_second_order() {
    let tol = Tolerances::default();
    let levels = [8, 16, 32].map(|q| {
        let sp = spaces(&CellGeometry::disk(0.25), q);
        homogenized_matrix(&sp, &solve_nj(&sp, &tol).unwrap())
    });
    let conv = homogenized_convergence(levels);
    for p in conv.order {
        assert!(p >= 1.5, "order {p}");
    }
    // dilute-limit estimate (1 − f)/(1 + f) for a disk of area fraction f
    let f = std::f64::consts::PI * 0.0625;
    let mg = (1.0 - f) / (1.0 + f);
    assert!((conv.extrapolated.a[0][0] - mg).abs() < 0.02, "{} vs {mg}", conv.extrapolated.a[0][0]);
}

#[test]
fn zero_frequency_cell_problems() {
    let m = Micro::new(spaces(&CellGeometry::disk(0.25), 8), 10, &Tolerances::default()).unwrap();
    let (t, f) = cell_problems(&m, 0.0).unwrap();
    assert!(f.cal_n.iter().all(|x| x.abs() < 1e-14));
    assert!(f.p.iter().all(|x| x.abs() < 1e-14));
    assert!((t.c - t.area[0]).abs() < 1e-12);
    assert_eq!(t.nu_offset(), 0.0);
    assert!(t.k_norm() < 1e-12);
}

#[test]
fn non_root_is_rejected() {
    let m = ellipse_micro(16);
    assert!(matches!(cell_problems(&m, 150.0), Err(Error::Solvability { .. })));
    let pole = m.spectrum.values[0];
    assert!(matches!(cell_problems(&m, pole), Err(Error::Pole { .. })));
}

#[test]
fn drift_vanishes_at_a_root() {
    for (t, _, _) in ellipse_cells() {
        assert!(t.identities.solvability_defect.abs() < 1e-6);
        assert!(t.k_norm() < 1e-8, "K = {:?}", t.k);
    }
    let [(c, ..), (f, ..)] = ellipse_cells();
    let e = extrapolate_tensors(c, f);
    assert!(e.k_norm() < 1e-8);
}

#[test]
fn green_identities_hold_at_a_root() {
    for (t, ..) in ellipse_cells() {
        let id = &t.identities;
        let scale = t.c.max(1.0);
        assert!(id.green.abs() < 1e-8 * scale, "{}", id.green);
        assert!((t.c - t.c_flux).abs() < 1e-8 * scale);
        for j in 0..2 {
            assert!(id.normal_integral[j].abs() < 1e-12);
            assert!(id.harmonic_pair[j].abs() < 1e-8, "{:?}", id.harmonic_pair);
            assert!(id.trace_transfer[j].abs() < 1e-8, "{:?}", id.trace_transfer);
            assert!(id.helmholtz_pair[j].abs() < 1e-8, "{:?}", id.helmholtz_pair);
        }
    }
}

#[test]
fn coupling_constants_converge() {
    let [(c, ..), (f, ..)] = ellipse_cells();
    assert!(f.c > 0.0);
    assert!((c.c - f.c).abs() < 0.05 * f.c, "{} {}", c.c, f.c);
    assert!((c.p_int - f.p_int).abs() < 0.05 * f.p_int.abs().max(f.area[0]));
    let e = extrapolate_tensors(c, f);
    assert_eq!(e.h, 0.0);
    assert!(e.a_hom.eigenvalues()[0] > 0.0);
}

#[test]
fn nu_map_round_trips() {
    let (t, ..) = &ellipse_cells()[0];
    for l1 in [0.0, 3.5, 40.0, 1e3] {
        let nu = t.nu(l1);
        assert!((t.lambda1(nu) - l1).abs() < 1e-10 * l1.max(1.0));
    }
    assert!((t.nu(0.0) - t.lambda0 * (t.area[1] + t.p_int)).abs() < 1e-12 * t.nu(0.0).abs());
}
