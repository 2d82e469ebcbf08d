use std::f64::consts::PI;
use std::sync::OnceLock;

use twoscale::bessel;
use twoscale::geometry::CellGeometry;
use twoscale::micro::{analytic_ball_b, pole_free_grid, BetaBackend, CaseTag, CellSpaces, EntryKind, Micro};
use twoscale::richardson::extrapolate;
use twoscale::{Error, Tolerances};

const A: f64 = 0.25;

fn disk(q: usize) -> &'static Micro {
    static COARSE: OnceLock<Micro> = OnceLock::new();
    static FINE: OnceLock<Micro> = OnceLock::new();
    let cell = if q == 16 { &COARSE } else { &FINE };
    cell.get_or_init(|| {
        let sp = CellSpaces::new(&CellGeometry::disk(A), 0.5 / q as f64).unwrap();
        Micro::new(sp, 60, &Tolerances::default()).unwrap()
    })
}

fn ellipse() -> &'static Micro {
    static E: OnceLock<Micro> = OnceLock::new();
    E.get_or_init(|| {
        let sp = CellSpaces::new(&CellGeometry::ellipse(0.3, 0.2), 1.0 / 32.0).unwrap();
        Micro::new(sp, 40, &Tolerances::default()).unwrap()
    })
}

fn j(n: u32, k: usize) -> f64 {
    bessel::jn_zeros(n, k).unwrap()[k - 1]
}

const ANALYTIC: BetaBackend = BetaBackend::AnalyticBall { radius: A, dimension: 2 };

#[test]
fn disk_ground_state_has_nonzero_mean() {
    let exact = (j(0, 1) / A).powi(2);
    let (c, f) = (disk(16), disk(32));
    let ext = extrapolate(c.spectrum.values[0], f.spectrum.values[0], 2.0);
    assert!((ext - exact).abs() / exact < 1e-4, "{ext} vs {exact}");
    let s = &f.spectrum;
    assert!(s.means[0].abs() > 0.1 * s.area_q0.sqrt());
    assert!(!s.clusters[0].zero_mean);
}

#[test]
fn disk_second_level_is_a_zero_mean_pair() {
    let exact = (j(1, 1) / A).powi(2);
    let (c, f) = (disk(16), disk(32));
    let (cc, cf) = (&c.spectrum.clusters[1], &f.spectrum.clusters[1]);
    assert_eq!(cf.indices.len(), 2);
    assert!(cf.zero_mean && cc.zero_mean);
    let ext = extrapolate(cc.value, cf.value, 2.0);
    assert!((ext - exact).abs() / exact < 1e-4, "{ext} vs {exact}");
}

#[test]
fn single_mode_request() {
    let sp = CellSpaces::new(&CellGeometry::disk(A), 1.0 / 16.0).unwrap();
    let m = Micro::new(sp, 1, &Tolerances::default()).unwrap();
    assert_eq!(m.spectrum.values.len(), 1);
    assert!(m.spectrum.means[0].is_finite());
}

#[test]
fn eta_at_zero_is_one() {
    let m = disk(16);
    let eta = m.eta(0.0).unwrap();
    for (v, &x) in eta.field.iter().enumerate() {
        if m.spaces.q0.active[v] {
            assert!((x - 1.0).abs() < 1e-10);
        }
    }
    assert!((eta.mean - m.spaces.area[0]).abs() < 1e-12);
    assert_eq!(eta.b(), 0.0);
}

#[test]
fn eta_on_nonzero_mean_eigenvalue_is_a_pole() {
    let m = disk(16);
    let l1 = m.spectrum.values[0];
    assert!(matches!(m.eta(l1), Err(Error::Pole { .. })));
}

#[test]
fn eta_mean_below_first_pole_exceeds_inclusion_area() {
    let m = disk(32);
    let lambda = 50.0;
    let eta = m.eta(lambda).unwrap();
    assert!(eta.mean > m.spaces.area[0]);
    // truncated series: every term is positive below the first pole
    let s = &m.spectrum;
    let partial: f64 =
        s.area_q0 + lambda * s.means.iter().zip(&s.values).map(|(c, l)| c * c / (l - lambda)).sum::<f64>();
    assert!(partial > s.area_q0);
    assert!(eta.mean >= partial - 1e-12);
    assert!((eta.mean - partial) / eta.mean < 1e-3);
}

#[test]
fn ball_closed_form_in_three_dimensions() {
    // λ⟨η⟩ with η = a sin(kr)/(r sin(ka)), integrated by Simpson's rule
    let (a, lambda) = (0.3f64, 40.0f64);
    let k = lambda.sqrt();
    let n = 2000;
    let f = |r: f64| 4.0 * PI * r * a * (k * r).sin() / (k * a).sin();
    let h = a / n as f64;
    let mut s = f(0.0) + f(a);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    let mean = s * h / 3.0;
    let b = analytic_ball_b(a, 3, lambda).unwrap();
    assert!((b - lambda * mean).abs() < 1e-9 * b.abs());
    assert_eq!(analytic_ball_b(a, 3, 0.0).unwrap(), 0.0);
}

#[test]
fn beta_vanishes_at_zero_for_every_backend() {
    let m = disk(16);
    for backend in [BetaBackend::Direct, BetaBackend::Series { modes: 40 }, ANALYTIC] {
        let v = m.beta(backend, 0.0).unwrap();
        assert!(v.beta.abs() < 1e-14 && v.b.abs() < 1e-14, "{backend:?}");
    }
}

#[test]
fn beta_exceeds_matrix_line_below_first_pole() {
    let m = disk(16);
    let l1 = m.spectrum.values[0];
    for i in 1..40 {
        let lambda = l1 * i as f64 / 40.0;
        let v = m.beta(BetaBackend::Direct, lambda).unwrap();
        assert!(v.beta > m.spaces.area[1] * lambda);
    }
}

#[test]
fn series_and_direct_backends_agree() {
    let m = disk(16);
    let tol = Tolerances::default();
    let poles = m.spectrum.poles();
    for lambda in pole_free_grid(&poles, 1.0, 1000.0, 50, 0.05).unwrap() {
        let d = m.beta(BetaBackend::Direct, lambda).unwrap();
        let s = m.beta(BetaBackend::Series { modes: 40 }, lambda).unwrap();
        let [lo, hi] = s.b_bounds.unwrap();
        let slack = 1e-9 * d.b.abs().max(1.0);
        assert!(lo - slack <= d.b && d.b <= hi + slack, "λ={lambda}: {} not in [{lo}, {hi}]", d.b);
        assert!((s.beta - d.beta).abs() <= tol.beta * d.beta.abs().max(1.0), "λ={lambda}");
    }
}

#[test]
fn direct_beta_extrapolates_to_bessel_formula() {
    let (c, f) = (disk(16), disk(32));
    let poles = bessel::jn_zeros(0, 3).unwrap().iter().map(|z| (z / A).powi(2)).collect::<Vec<f64>>();
    for lambda in pole_free_grid(&poles, 5.0, 700.0, 12, 0.05).unwrap() {
        let bc = c.beta(BetaBackend::Direct, lambda).unwrap().beta;
        let bf = f.beta(BetaBackend::Direct, lambda).unwrap().beta;
        let exact = f.beta(ANALYTIC, lambda).unwrap().beta;
        let ext = extrapolate(bc, bf, 2.0);
        assert!((ext - exact).abs() <= 1e-3 * exact.abs(), "λ={lambda}: {ext} vs {exact}");
    }
}

#[test]
fn parseval_sums_increase_up_to_inclusion_area() {
    let s = &disk(32).spectrum;
    let sums = s.parseval_partial_sums();
    assert!(sums.windows(2).all(|w| w[1] >= w[0]));
    assert!(*sums.last().unwrap() <= s.area_q0 * (1.0 + 1e-12));
    assert!(*sums.last().unwrap() > 0.9 * s.area_q0);
}

#[test]
fn limit_spectrum_structure() {
    let m = disk(32);
    let ls = m.limit_spectrum(BetaBackend::Direct, 700.0).unwrap();
    assert_eq!(ls.entries[0].value, 0.0);
    let poles: Vec<f64> = m.spectrum.poles().into_iter().filter(|&p| p < 700.0).collect();
    let roots = ls.roots();
    // exactly one root between consecutive poles
    for w in poles.windows(2) {
        assert_eq!(roots.iter().filter(|&&r| r > w[0] && r < w[1]).count(), 1);
    }
    let mu2 = roots[1];
    assert!(poles[0] < mu2 && mu2 < poles[1]);
    for e in ls.entries.iter().filter(|e| e.kind == EntryKind::Root && e.value > 0.0) {
        let [blo, bhi] = e.certificate.unwrap();
        assert!(blo < 0.0 && bhi > 0.0);
    }
    let pair = ls.entries.iter().find(|e| e.kind == EntryKind::ZeroMean).unwrap();
    assert_eq!(pair.multiplicity, 2);
    assert!((pair.value - (j(1, 1) / A).powi(2)).abs() / pair.value < 1e-3);
}

#[test]
fn zeta_spectrum_matches_limit_spectrum() {
    let m = disk(32);
    let z = m.zeta_spectrum(10).unwrap();
    let ls = m.limit_spectrum(BetaBackend::Direct, 0.999 * z.values[9]).unwrap().expanded();
    assert!(ls.len() >= 8);
    assert!(z.values[0].abs() < 1e-8);
    for (a, b) in z.values.iter().zip(&ls).skip(1).take(7) {
        assert!((a - b).abs() / b < 1e-3, "{a} vs {b}");
    }
    // eigenfunctions of distinct eigenvalues are L²(Q₀)-orthogonal
    for (i, c) in z.clusters.iter().enumerate() {
        for d in &z.clusters[i + 1..] {
            let (u, v) = (&z.vectors[c[0]], &z.vectors[d[0]]);
            assert!(m.spaces.inner_q0(u, v).abs() < 1e-8);
        }
    }
    // the ground state is constant
    let u0 = &z.vectors[0];
    let g = m.spaces.mesh.gamma_vertices()[0];
    for (v, &x) in u0.iter().enumerate() {
        if m.spaces.q0.active[v] {
            assert!((x - u0[g]).abs() < 1e-6 * u0[g].abs());
        }
    }
}

#[test]
fn classification_on_disk() {
    let m = disk(32);
    let tol = Tolerances::default();
    assert!(matches!(m.classify(m.spectrum.values[0], 1e-2).unwrap(), CaseTag::BI { .. }));
    let pair = m.spectrum.clusters[1].value;
    match m.classify(pair, 1e-2).unwrap() {
        CaseTag::BII { multiplicity, b, .. } => {
            assert_eq!(multiplicity, 2);
            // the disk's root and zero-mean pair coincide in the limit
            assert!(b.abs() < 1e-3 * pair * m.spaces.area[0]);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(m.classify(150.0, 1e-2).unwrap(), CaseTag::A));
    assert!(tol.pole > 0.0);
}

#[test]
fn classification_on_ellipse() {
    let m = ellipse();
    let ls = m.limit_spectrum(BetaBackend::Direct, 400.0).unwrap();
    let mu2 = ls.roots()[1];
    assert!(matches!(m.classify(mu2, 1e-2).unwrap(), CaseTag::A));
    let zm = m.spectrum.zero_mean_clusters().next().unwrap();
    assert_eq!(zm.indices.len(), 1);
    match m.classify(zm.value, 1e-2).unwrap() {
        CaseTag::BII { b_vanishes, b, .. } => {
            assert!(!b_vanishes, "B = {b}");
        }
        other => panic!("{other:?}"),
    }
}
