use nalgebra::DVector;
use proptest::prelude::*;
use std::sync::Arc;
use vlab::grid::Grid;
use vlab::jacobi::SurfaceGrid;
use vlab::qapprox::*;
use vlab::surface::TermSpec;
use vlab::varifold::*;
use vlab::{GraphSurface, SurfaceSpec};

fn flat_geo(m: usize, nodes: usize) -> Arc<SurfaceGrid> {
    SurfaceGrid::new(GraphSurface::plane(m, 1, 2.0), Grid::unit(m, nodes).unwrap()).unwrap()
}

fn sampling() -> Sampling {
    Sampling::new(1.6, 80)
}

fn crossing(m: usize, t: f64) -> DiscreteVarifold {
    let mut slope = vec![0.0; m];
    slope[0] = t;
    let neg: Vec<f64> = slope.iter().map(|v| -v).collect();
    gen_varifold(&VarifoldSpec::PlaneUnion {
        m,
        n: 1,
        planes: vec![
            AffineSheet { slope, offset: None, multiplicity: 1 },
            AffineSheet { slope: neg, offset: None, multiplicity: 1 },
        ],
        sampling: sampling(),
    })
    .unwrap()
}

#[test]
fn multiple_copy_of_m() {
    let geo = flat_geo(2, 17);
    let v = gen_varifold(&VarifoldSpec::plane(2, 1, 3, sampling())).unwrap();
    let me = maximal_function(&v, &geo, &[0.5, 0.25]);
    assert!(me.iter().all(|&e| e == 0.0));
    let (f, rep) = build_approximation(&v, &geo, &ApproxOptions::new(3, 0.01)).unwrap();
    assert!(f.good.iter().all(|&g| g));
    assert_eq!(rep.lip, 0.0);
    for p in &f.values {
        assert_eq!(p.entries.len(), 1);
        assert_eq!(p.entries[0].1, 3);
        assert!(p.entries[0].0.norm() < 1e-12);
    }
    assert_eq!(rep.density_match_rate, 1.0);
}

#[test]
fn tilted_plane_maximal_function() {
    let geo = flat_geo(2, 9);
    for theta in [0.05f64, 0.15] {
        let v = gen_varifold(&VarifoldSpec::Plane { m: 2, n: 1, multiplicity: 1, slope: Some(vec![theta.tan(), 0.0]), offset: None, sampling: sampling() }).unwrap();
        let me = maximal_function(&v, &geo, &[0.5, 0.25]);
        let want = 2.0 * theta.sin().powi(2) / theta.cos();
        for (k, e) in me.iter().enumerate() {
            assert!((e - want).abs() <= 0.02 * want, "node {k}: {e} vs {want}");
        }
        assert!((max_tilt(&v, &geo, 40, &[0.5, 0.25]) - me[40]).abs() < 1e-15);
        // below the threshold the good set is everything
        let idx = FiberIndex::new(&v, &geo, None).unwrap();
        let good = good_set(&idx, &me, &ApproxOptions::new(1, 1.5 * want));
        assert!(good.k.iter().all(|&b| b));
        assert_eq!(good.constant, 0.0);
    }
}

fn bump_varifold() -> DiscreteVarifold {
    let spec = SurfaceSpec::Gaussian { m: 2, radius: 2.0, bump_center: vec![0.5, 0.5], width: 0.12, amplitude: 0.03 };
    gen_varifold(&VarifoldSpec::Sheets { sheets: vec![GraphSheet { surface: spec, multiplicity: 1 }], sampling: sampling() }).unwrap()
}

#[test]
fn localized_bump_ordering_and_measure() {
    let geo = flat_geo(2, 17);
    let v = bump_varifold();
    let me = maximal_function(&v, &geo, &[0.5, 0.25, 0.125]);
    let near = geo.grid.node(&[12, 12]);
    let far = geo.grid.node(&[3, 3]);
    let mid = geo.grid.node(&[8, 8]);
    assert!(me[near] > me[mid] && me[mid] >= me[far], "{} {} {}", me[near], me[mid], me[far]);
    let idx = FiberIndex::new(&v, &geo, None).unwrap();
    for lambda in [0.01, 0.02, 0.05] {
        let good = good_set(&idx, &me, &ApproxOptions::new(1, lambda));
        assert!(!good.k[near] && good.k[far]);
        assert!(good.constant.is_finite() && good.constant > 0.0);
        assert!((good.complement_area + good.complement_mass) * lambda <= good.constant * good.excess * (1.0 + 1e-12));
    }
}

#[test]
fn parallel_planes_cluster() {
    let geo = flat_geo(2, 9);
    let v = gen_varifold(&VarifoldSpec::parallel(2, 1, &[vec![-0.2], vec![0.0], vec![0.3]], sampling())).unwrap();
    let idx = FiberIndex::new(&v, &geo, None).unwrap();
    for node in geo.grid.interior() {
        let f = fiber_cluster(&idx, node, 0.05, 3).unwrap();
        assert_eq!(f.value.entries.len(), 3);
        assert!(f.value.entries.iter().all(|(_, q)| *q == 1));
        assert!(f.density_match);
        let heights: Vec<f64> = f.value.entries.iter().map(|(p, _)| p[2]).collect();
        for (h, w) in heights.iter().zip([-0.2, 0.0, 0.3]) {
            assert!((h - w).abs() < 1e-12);
        }
    }
    let v = gen_varifold(&VarifoldSpec::plane(2, 1, 2, sampling())).unwrap();
    let idx = FiberIndex::new(&v, &geo, None).unwrap();
    let f = fiber_cluster(&idx, 40, 0.05, 2).unwrap();
    assert_eq!(f.value.entries.len(), 1);
    assert_eq!(f.value.entries[0].1, 2);
    assert!(matches!(fiber_cluster(&idx, 40, 0.05, 3), Err(vlab::LabError::QMismatch(2, 3))));
}

#[test]
fn sheets_merging_outside_the_fiber() {
    // sheets +-(x1 - 0.6)^2 / 2 touch on x1 = 0.6 and separate elsewhere
    let sheet = |s: f64| GraphSheet {
        surface: SurfaceSpec::Polynomial {
            m: 1,
            n: 1,
            radius: 1.5,
            terms: vec![
                TermSpec { exponents: vec![0], coeffs: vec![s * 0.18] },
                TermSpec { exponents: vec![1], coeffs: vec![-s * 0.6] },
                TermSpec { exponents: vec![2], coeffs: vec![s * 0.5] },
            ],
        },
        multiplicity: 1,
    };
    let v = gen_varifold(&VarifoldSpec::Sheets { sheets: vec![sheet(1.0), sheet(-1.0)], sampling: Sampling::new(1.25, 256) }).unwrap();
    let geo = flat_geo(1, 17);
    let idx = FiberIndex::new(&v, &geo, None).unwrap();
    let x = geo.grid.node(&[4]);
    let x0 = geo.grid.coords(x)[0];
    let f = fiber_cluster(&idx, x, 0.02, 2).unwrap();
    assert_eq!(f.value.entries.len(), 2);
    let want = 0.5 * (x0 - 0.6) * (x0 - 0.6);
    assert!((f.value.entries[1].0[1] - want).abs() < 0.05 * want);
    assert!((f.value.entries[0].0[1] + want).abs() < 0.05 * want);
    assert!(f.density_match);
}

#[test]
fn two_sheet_constant_family() {
    let geo = flat_geo(2, 17);
    let c = 0.1;
    let v = gen_varifold(&VarifoldSpec::parallel(2, 1, &[vec![c], vec![-c]], sampling())).unwrap();
    let (f, rep) = build_approximation(&v, &geo, &ApproxOptions::new(2, 0.01)).unwrap();
    assert!(rep.lip < 1e-12);
    for p in &f.values {
        assert_eq!(p.entries.len(), 2);
        assert!((p.entries[0].0[2] + c).abs() < 1e-12 && (p.entries[1].0[2] - c).abs() < 1e-12);
    }
    let bar = average_section(&f);
    assert!(bar.sup() < 1e-12);
    assert!(f.normality_defect() < 1e-10);
}

#[test]
fn crossing_sheets_recover_slope() {
    for m in [1, 2] {
        let nodes = if m == 1 { 33 } else { 17 };
        let geo = flat_geo(m, nodes);
        let t = 0.05;
        let v = crossing(m, t);
        let lambda = 0.02;
        let (f, rep) = build_approximation(&v, &geo, &ApproxOptions::new(2, lambda)).unwrap();
        assert!(rep.failures.is_empty(), "{:?}", rep.failures);
        assert_eq!(rep.density_match_rate, 1.0);
        // every node carries +-t x1
        let mut worst: f64 = 0.0;
        for k in 0..geo.grid.len() {
            if !f.good[k] {
                continue;
            }
            let x1 = geo.grid.coords(k)[0];
            let hi = f.values[k].entries.iter().map(|(p, _)| p[m]).fold(f64::NEG_INFINITY, f64::max);
            let lo = f.values[k].entries.iter().map(|(p, _)| p[m]).fold(f64::INFINITY, f64::min);
            if x1.abs() > 0.1 {
                worst = worst.max((hi - t * x1.abs()).abs() / (t * x1.abs()));
                worst = worst.max((lo + t * x1.abs()).abs() / (t * x1.abs()));
            }
        }
        assert!(worst <= 0.05, "m={m} relative sheet error {worst}");
        assert!(rep.lip_constant.is_finite());
        assert!(rep.lip <= 2f64.sqrt() * t * 1.05, "lip {}", rep.lip);
    }
}

#[test]
fn average_section_is_normal_and_translates() {
    let geo = flat_geo(2, 9);
    let t = 0.05;
    let (f, _) = build_approximation(&crossing(2, t), &geo, &ApproxOptions::new(2, 0.02)).unwrap();
    let bar = average_section(&f);
    assert!(bar.sup() < 1e-12);
    assert!(bar.normality_defect() < 1e-12);
    // shift every sheet by 0.07
    let shifted = gen_varifold(&VarifoldSpec::PlaneUnion {
        m: 2,
        n: 1,
        planes: vec![
            AffineSheet { slope: vec![t, 0.0], offset: Some(vec![0.07]), multiplicity: 1 },
            AffineSheet { slope: vec![-t, 0.0], offset: Some(vec![0.07]), multiplicity: 1 },
        ],
        sampling: sampling(),
    })
    .unwrap();
    let (g, _) = build_approximation(&shifted, &geo, &ApproxOptions::new(2, 0.02)).unwrap();
    let gbar = average_section(&g);
    for k in 0..geo.grid.len() {
        assert!((gbar.at(k)[2] - bar.at(k)[2] - 0.07).abs() < 1e-10);
    }
}

#[test]
fn qsection_text_round_trip() {
    let geo = flat_geo(1, 9);
    let (f, _) = build_approximation(&crossing(1, 0.05), &geo, &ApproxOptions::new(2, 0.02)).unwrap();
    let text = f.to_text();
    let g = QSection::from_text(&geo, &text).unwrap();
    assert_eq!(g.values, f.values);
    assert_eq!(g.good, f.good);
    assert_eq!(g.to_text(), text);
    assert!(QSection::from_text(&geo, "# qsection v1\ndims 1 1 2\nnodes 3\n").is_err());
}

fn brute_force(a: &QPoint, b: &QPoint) -> f64 {
    let xa = a.expanded();
    let xb = b.expanded();
    let q = xa.len();
    let mut perm: Vec<usize> = (0..q).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm
    fn rec(k: usize, perm: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if k == 1 {
            f(perm);
            return;
        }
        for i in 0..k {
            rec(k - 1, perm, f);
            if k % 2 == 0 {
                perm.swap(i, k - 1);
            } else {
                perm.swap(0, k - 1);
            }
        }
    }
    rec(q, &mut perm, &mut |p| {
        let c: f64 = (0..q).map(|i| (xa[i] - xb[p[i]]).norm_squared()).sum();
        best = best.min(c);
    });
    best.sqrt()
}

fn qpoint(q: usize, d: usize) -> impl Strategy<Value = QPoint> {
    proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, d), q).prop_map(|pts| {
        QPoint::new(pts.into_iter().map(|p| (DVector::from_vec(p), 1)).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_matches_enumeration((a, b) in (1usize..=4).prop_flat_map(|q| (qpoint(q, 2), qpoint(q, 2)))) {
        let g = metric_g(&a, &b).unwrap();
        prop_assert!((g - brute_force(&a, &b)).abs() < 1e-12);
        prop_assert!((g - metric_g(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(metric_g(&a, &a).unwrap() == 0.0);
    }

    #[test]
    fn metric_triangle((a, b, c) in (1usize..=4).prop_flat_map(|q| (qpoint(q, 3), qpoint(q, 3), qpoint(q, 3)))) {
        let ab = metric_g(&a, &b).unwrap();
        let bc = metric_g(&b, &c).unwrap();
        let ac = metric_g(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn metric_single_valued_is_euclidean(p in proptest::collection::vec(-5.0f64..5.0, 3), r in proptest::collection::vec(-5.0f64..5.0, 3)) {
        let a = QPoint::new(vec![(DVector::from_vec(p.clone()), 1)]).unwrap();
        let b = QPoint::new(vec![(DVector::from_vec(r.clone()), 1)]).unwrap();
        let e = (DVector::from_vec(p) - DVector::from_vec(r)).norm();
        prop_assert!((metric_g(&a, &b).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn average_minimizes_weighted_square_distance(pts in proptest::collection::vec((proptest::collection::vec(-1.0f64..1.0, 3), 1u32..4), 1..5), probe in proptest::collection::vec(-0.1f64..0.1, 3)) {
        let q = QPoint::new(pts.into_iter().map(|(p, k)| (DVector::from_vec(p), k)).collect()).unwrap();
        let avg = q.average();
        let cost = |v: &DVector<f64>| q.entries.iter().map(|(p, k)| *k as f64 * (p - v).norm_squared()).sum::<f64>();
        // first-order condition: gradient vanishes; and perturbations do not help
        let grad = q.entries.iter().fold(DVector::zeros(3), |acc, (p, k)| acc + (&avg - p) * (2.0 * *k as f64));
        prop_assert!(grad.norm() < 1e-12);
        prop_assert!(cost(&avg) <= cost(&(&avg + DVector::from_vec(probe))) + 1e-15);
    }
}
