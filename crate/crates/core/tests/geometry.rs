use std::f64::consts::PI;

use proptest::prelude::*;
use twoscale::geometry::{
    build_cell_mesh, build_cell_mesh_q, build_domain_mesh, read_mesh, write_mesh, CellGeometry, EdgeTag, Region,
};
use twoscale::Error;

fn disk() -> CellGeometry {
    CellGeometry::disk(0.25)
}

#[test]
fn disk_cell_mesh_area_and_counts() {
    let mesh = build_cell_mesh(&disk(), 0.05).unwrap();
    let r = mesh.report().unwrap();
    assert!((r.area_q0 - PI / 16.0).abs() < 1e-3);
    assert!((r.area_q0 + r.area_q1 - 1.0).abs() < 1e-13);
    assert!(r.min_angle_deg >= 15.0);
    // frozen from the mesher
    assert_eq!((r.n_vertices, r.n_elements, r.n_gamma_edges, r.n_gamma_loops), (1881, 3680, 80, 1));
}

#[test]
fn inclusion_must_be_interior() {
    let e = build_cell_mesh(&CellGeometry::disk(0.6), 0.05).unwrap_err();
    assert!(matches!(e, Error::InvalidGeometry(_)));
    assert!(e.to_string().contains("inclusion not strictly interior"));
}

#[test]
fn refinement_is_second_order_in_area() {
    let err: Vec<(f64, f64)> = [0.05, 0.025, 0.0125]
        .iter()
        .map(|&h| {
            let r = build_cell_mesh(&disk(), h).unwrap().report().unwrap();
            ((r.area_q0 - PI / 16.0).abs(), r.max_edge)
        })
        .collect();
    for w in err.windows(2) {
        let ratio = w[0].0 / w[1].0;
        assert!((2.5..=6.0).contains(&ratio), "area error ratio {ratio}");
        let edge = w[0].1 / w[1].1;
        assert!((1.7..=2.4).contains(&edge), "edge ratio {edge}");
    }
}

#[test]
fn periodic_pairing_is_an_involution_on_the_boundary() {
    let mesh = build_cell_mesh(&CellGeometry::ellipse(0.3, 0.2), 1.0 / 16.0).unwrap();
    let on_face = |p: [f64; 2]| p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
    for (axis, pairs) in mesh.periodic_pairs().iter().enumerate() {
        let face = mesh.vertices.iter().filter(|p| p[axis] == 0.0).count();
        assert_eq!(pairs.len(), face);
        for &(a, b) in pairs {
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            assert_eq!(pa[1 - axis], pb[1 - axis]);
            assert_eq!((pa[axis], pb[axis]), (0.0, 1.0));
            // the reverse lookup returns the same partner
            assert_eq!(pairs.iter().filter(|p| p.1 == b).count(), 1);
        }
    }
    let reps = mesh.periodic_representatives();
    for (v, p) in mesh.vertices.iter().enumerate() {
        if on_face(*p) {
            assert_eq!(reps[reps[v]], reps[v]);
        } else {
            assert_eq!(reps[v], v);
        }
    }
    // the four corners share one class
    let corners: Vec<usize> = (0..mesh.vertices.len())
        .filter(|&v| {
            let p = mesh.vertices[v];
            (p[0] == 0.0 || p[0] == 1.0) && (p[1] == 0.0 || p[1] == 1.0)
        })
        .map(|v| reps[v])
        .collect();
    assert_eq!(corners.len(), 4);
    assert!(corners.iter().all(|&c| c == corners[0]));
}

#[test]
fn domain_mesh_tiles_the_inclusions() {
    let mesh = build_domain_mesh(&disk(), 0.5, 0.5 / 16.0, 300_000).unwrap();
    assert_eq!(mesh.gamma_loops().unwrap().len(), 4);
    for lp in mesh.gamma_loops().unwrap() {
        assert!(lp.iter().all(|&v| {
            let p = mesh.vertices[v];
            p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0
        }));
    }
    let mesh = build_domain_mesh(&disk(), 0.25, 0.25 / 16.0, 300_000).unwrap();
    assert_eq!(mesh.gamma_loops().unwrap().len(), 16);
    assert!((mesh.region_area(Region::Q0) - PI / 16.0).abs() < 1e-3);
    assert!(mesh.edges.iter().any(|e| e.tag == EdgeTag::Outer));
    assert!(mesh.edges.iter().all(|e| !matches!(e.tag, EdgeTag::PeriodicPair(_))));
}

#[test]
fn domain_mesh_preconditions() {
    assert!(matches!(build_domain_mesh(&disk(), 0.3, 0.01, 300_000), Err(Error::EpsilonNotReciprocal(_))));
    assert!(build_domain_mesh(&disk(), 0.5, 0.5, 300_000).is_err());
    assert!(matches!(build_domain_mesh(&disk(), 0.125, 0.125 / 32.0, 300_000), Err(Error::DofCap { .. })));
}

#[test]
fn text_format_round_trip() {
    let mesh = build_cell_mesh_q(&CellGeometry::ellipse(0.3, 0.2), 3).unwrap();
    let mut buf = Vec::new();
    write_mesh(&mesh, &mut buf).unwrap();
    let back = read_mesh(&buf[..]).unwrap();
    assert_eq!(back.vertices, mesh.vertices);
    assert_eq!(back.triangles, mesh.triangles);
    assert_eq!(back.regions, mesh.regions);
    assert_eq!(back.edges, mesh.edges);
    assert!(matches!(read_mesh(&b""[..]), Err(Error::EmptyMesh)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cell_meshes_are_valid(a in 0.05f64..0.35, ratio in 0.5f64..2.0, q in 2usize..7) {
        let b = (a * ratio).min(0.35);
        let mesh = build_cell_mesh_q(&CellGeometry::ellipse(a, b), q).unwrap();
        mesh.validate().unwrap();
        prop_assert!(mesh.min_angle_deg() >= 15.0);
        prop_assert!((0..mesh.triangles.len()).all(|t| mesh.signed_area(t) > 0.0));
        prop_assert_eq!(mesh.gamma_loops().unwrap().len(), 1);
        prop_assert_eq!(mesh.gamma_edges().count(), 8 * q);
        let area = mesh.region_area(Region::Q0);
        prop_assert!(area < PI * a * b && area > 0.8 * PI * a * b);
    }

    #[test]
    fn slender_or_large_inclusions_mesh_or_report_quality(a in 0.05f64..0.45, b in 0.05f64..0.45, q in 2usize..7) {
        match build_cell_mesh_q(&CellGeometry::ellipse(a, b), q) {
            Ok(mesh) => prop_assert!(mesh.min_angle_deg() >= 15.0),
            Err(e) => prop_assert!(matches!(e, Error::MeshQuality { .. }), "{}", e),
        }
    }

    #[test]
    fn domain_meshes_have_m_squared_loops(m in 2usize..5, q in 2usize..5) {
        let mesh = twoscale::geometry::build_domain_mesh_m(&CellGeometry::disk(0.3), m, q, 300_000).unwrap();
        prop_assert_eq!(mesh.gamma_loops().unwrap().len(), m * m);
        let cell = build_cell_mesh_q(&CellGeometry::disk(0.3), q).unwrap();
        prop_assert!((mesh.region_area(Region::Q0) - cell.region_area(Region::Q0)).abs() < 1e-12);
    }
}
