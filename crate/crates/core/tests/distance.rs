use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlab::distance::*;
use vlab::{GraphSurface, LabError, Plane, SurfaceSpec};

fn circle() -> GraphSurface {
    SurfaceSpec::CircleCap { radius: 0.6, curvature_radius: 1.0 }.build().unwrap()
}

fn scherk() -> GraphSurface {
    SurfaceSpec::Scherk { radius: 1.0, a: 0.5 }.build().unwrap()
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn half_sq(s: &GraphSurface, z: &DVector<f64>) -> f64 {
    0.5 * closest_point(s, z).unwrap().dist.powi(2)
}

fn fd_hessian(s: &GraphSurface, z: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let d = z.len();
    DMatrix::from_fn(d, d, |i, j| {
        let mut acc = 0.0;
        for (si, sj, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
            let mut zz = z.clone();
            zz[i] += si * h;
            zz[j] += sj * h;
            acc += w * half_sq(s, &zz);
        }
        acc / (4.0 * h * h)
    })
}

fn eigen(a: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

#[test]
fn closest_point_agrees_with_brute_force() {
    let s = circle();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let nodes: Vec<f64> = (0..=24000).map(|i| -0.6 + 1.2 * i as f64 / 24000.0).collect();
    let pts: Vec<DVector<f64>> = nodes.iter().map(|&x| s.point(&[x]).unwrap()).collect();
    for _ in 0..100 {
        let x = rng.gen_range(-0.35..0.35);
        let t = rng.gen_range(-0.25..0.25);
        let loc = s.local(&[x]).unwrap();
        let z = &loc.point + loc.frame.normal.column(0) * t;
        let (i, d) = pts.iter().map(|p| (p - &z).norm()).enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let r = closest_point(&s, &z).unwrap();
        assert!((r.dist - d).abs() < 1e-6, "{} vs {d}", r.dist);
        assert!((r.x[0] - nodes[i]).abs() < 1e-4);
        assert!(r.residual <= 1e-12);
        // z - p(z) is normal at the foot
        let tangent = s.frame(&r.x).unwrap().tangent;
        assert!((tangent.transpose() * (&z - &r.foot)).norm() < 1e-10);
    }
}

#[test]
fn circle_axis_and_flat_projection() {
    let r = closest_point(&circle(), &v(&[0.0, 0.3])).unwrap();
    assert!(r.foot.norm() < 1e-15 && (r.dist - 0.3).abs() < 1e-15);
    let p = GraphSurface::plane(1, 2, 1.0);
    let r = closest_point(&p, &v(&[0.2, 0.3, -0.4])).unwrap();
    assert_eq!(r.foot.as_slice(), &[0.2, 0.0, 0.0]);
    assert!((r.dist - 0.5).abs() < 1e-15);
    assert!(closest_point(&p, &v(&[0.2, 0.3])).is_err());
}

#[test]
fn jacobian_on_the_concave_side() {
    // below the circle (away from the centre) 1 - kappa d = 1.3
    let s = circle();
    let z = v(&[0.0, -0.3]);
    let dp = projection_jacobian(&s, &z).unwrap();
    assert!((dp[(0, 0)] - 1.0 / 1.3).abs() < 1e-12);
    assert!(dp[(1, 0)].abs() < 1e-12 && dp[(1, 1)].abs() < 1e-12);
    let h = 1e-5;
    let fd = (closest_point(&s, &v(&[h, -0.3])).unwrap().foot - closest_point(&s, &v(&[-h, -0.3])).unwrap().foot) / (2.0 * h);
    assert!((fd[0] - dp[(0, 0)]).abs() < 1e-5);
}

#[test]
fn jacobian_is_singular_at_the_focal_point() {
    let r = projection_jacobian(&circle(), &v(&[0.0, 1.0]));
    assert!(r.is_err());
}

#[test]
fn jacobian_converges_at_first_order() {
    let s = scherk();
    let z = v(&[0.2, -0.1, 0.15]);
    let dp = projection_jacobian(&s, &z).unwrap();
    let dir = v(&[0.6, 0.8, 0.0]);
    let p0 = closest_point(&s, &z).unwrap().foot;
    let hs = [1e-2, 1e-3, 1e-4];
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| ((closest_point(&s, &(&z + &dir * h)).unwrap().foot - &p0) / h - &dp * &dir).norm())
        .collect();
    let order = vlab::linalg::loglog_slope(&hs, &errs);
    assert!(order >= 0.9, "{order} {errs:?}");
}

#[test]
fn hessian_spectrum_on_the_unit_circle() {
    let s = circle();
    // z above the foot points at the centre: kappa = 1; below, kappa = -1
    for (z, kappa) in [(v(&[0.0, 0.3]), 1.0), (v(&[0.0, -0.3]), -1.0)] {
        let want_t = -0.3 * kappa / (1.0 - 0.3 * kappa);
        let got = eigen(&sq_dist_hessian(&s, &z).unwrap());
        let fd = eigen(&fd_hessian(&s, &z, 1e-4));
        let mut want = vec![want_t, 1.0];
        want.sort_by(f64::total_cmp);
        for k in 0..2 {
            assert!((got[k] - want[k]).abs() < 1e-12);
            assert!((fd[k] - want[k]).abs() < 1e-4);
        }
        let (d, kap) = principal_curvatures(&s, &z).unwrap();
        assert!((d - 0.3).abs() < 1e-12 && (kap[0] - kappa).abs() < 1e-12);
    }
}

#[test]
fn hessian_on_a_plane_and_on_the_surface() {
    let p = GraphSurface::plane(2, 1, 1.0);
    let h = sq_dist_hessian(&p, &v(&[0.1, 0.2, 0.4])).unwrap();
    assert!((h - DMatrix::from_diagonal(&v(&[0.0, 0.0, 1.0]))).abs().max() < 1e-15);
    // d = 0: the normal projector
    let s = scherk();
    let z = s.point(&[0.3, 0.1]).unwrap();
    let h = sq_dist_hessian(&s, &z).unwrap();
    let nu = s.frame(&[0.3, 0.1]).unwrap().normal_projector();
    assert!((h - nu).abs().max() < 1e-12);
}

#[test]
fn elliptic_examples() {
    let p = GraphSurface::plane(1, 1, 2.0);
    let s = elliptic_inequality_check(&p, &v(&[0.4, 0.3]), &Plane::horizontal(1, 1)).unwrap();
    assert!(s.lhs.abs() < 1e-15 && s.rhs.abs() < 1e-15);
    for th in [0.1f64, 0.7, 1.2] {
        let l = Plane::from_span(DVector::zeros(2), &DMatrix::from_column_slice(2, 1, &[th.cos(), th.sin()])).unwrap();
        let s = elliptic_inequality_check(&p, &v(&[-0.3, 0.6]), &l).unwrap();
        assert!((s.lhs - th.sin().powi(2)).abs() < 1e-14);
        assert!((s.rhs - 0.5 * th.sin().powi(2)).abs() < 1e-14);
    }
}

#[test]
fn lipschitz_graph_sandwich_trivial_cases() {
    let p = GraphSurface::plane(1, 1, 1.0);
    let zero = NormalGraph::new(&p, |_: &[f64]| vec![0.0]);
    let z = v(&[0.1, 0.35]);
    let b = lip_graph_bounds(&zero, &z, 401).unwrap();
    assert!((b.graph_dist - 0.35).abs() < 1e-10 && (b.offset - 0.35).abs() < 1e-15);
    let c = NormalGraph::new(&p, |_: &[f64]| vec![0.1]);
    let b = lip_graph_bounds(&c, &z, 401).unwrap();
    assert!((b.graph_dist - 0.25).abs() < 1e-10 && (b.offset - 0.25).abs() < 1e-15);
}

#[test]
fn lipschitz_graph_sandwich_on_piecewise_linear_sections() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for surface in [GraphSurface::plane(1, 1, 1.0), SurfaceSpec::CircleCap { radius: 0.6, curvature_radius: 3.0 }.build().unwrap()] {
        // knots every 0.1 with slopes of size at most 0.9
        let knots: Vec<f64> = (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect();
        let mut vals = vec![0.0];
        for _ in 1..knots.len() {
            vals.push(vals.last().unwrap() + 0.1 * rng.gen_range(-0.9..0.9));
        }
        let shift = vals[10];
        let f = |x: &[f64]| {
            let t = ((x[0] + 1.0) / 0.1).clamp(0.0, 19.999);
            let i = t.floor() as usize;
            vec![vals[i] + (t - i as f64) * (vals[i + 1] - vals[i]) - shift]
        };
        let g = NormalGraph::new(&surface, f);
        for _ in 0..100 {
            let x = rng.gen_range(-0.3..0.3);
            let loc = surface.local(&[x]).unwrap();
            let z = &loc.point + loc.frame.normal.column(0) * rng.gen_range(-0.2..0.2);
            let b = lip_graph_bounds(&g, &z, 801).unwrap();
            assert!(b.graph_dist <= b.offset + 1e-8, "{b:?}");
            assert!(b.offset <= 3.0 * b.graph_dist + 1e-8, "{b:?}");
        }
    }
}

#[test]
fn steep_sections_are_rejected() {
    let p = GraphSurface::plane(1, 1, 1.0);
    let f = NormalGraph::new(&p, |x: &[f64]| vec![1.5 * x[0]]);
    assert!(matches!(lip_graph_bounds(&f, &v(&[0.0, 0.2]), 101), Err(LabError::LipschitzViolation(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gradient_identity_and_symmetry(x0 in -0.4f64..0.4, x1 in -0.4f64..0.4, t in -0.2f64..0.2) {
        let s = scherk();
        let loc = s.local(&[x0, x1]).unwrap();
        let z = &loc.point + loc.frame.normal.column(0) * t;
        let foot = closest_point(&s, &z).unwrap().foot;
        let h = 1e-6;
        for i in 0..3 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            let g = (half_sq(&s, &zp) - half_sq(&s, &zm)) / (2.0 * h);
            prop_assert!((g - (z[i] - foot[i])).abs() < 1e-6);
        }
        let hess = sq_dist_hessian(&s, &z).unwrap();
        prop_assert!((&hess - hess.transpose()).abs().max() < 1e-10);
        let dp = projection_jacobian(&s, &z).unwrap();
        let foot_nu = s.frame(&closest_point(&s, &z).unwrap().x).unwrap().normal;
        prop_assert!((foot_nu.transpose() * &dp).norm() < 1e-8);
    }

    #[test]
    fn hessian_eigenvalues_follow_the_curvatures(x0 in -0.4f64..0.4, x1 in -0.4f64..0.4, t in 0.02f64..0.2, sign in prop::bool::ANY) {
        let s = scherk();
        let loc = s.local(&[x0, x1]).unwrap();
        let z = &loc.point + loc.frame.normal.column(0) * if sign { t } else { -t };
        let (d, kappa) = principal_curvatures(&s, &z).unwrap();
        let mut want: Vec<f64> = kappa.iter().map(|k| -d * k / (1.0 - k * d)).collect();
        want.push(1.0);
        want.sort_by(f64::total_cmp);
        let fd = eigen(&fd_hessian(&s, &z, 1e-4));
        for k in 0..3 {
            prop_assert!((fd[k] - want[k]).abs() < 1e-4, "{fd:?} vs {want:?}");
        }
    }
}
