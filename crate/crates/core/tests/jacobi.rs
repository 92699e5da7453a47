use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use vlab::grid::Grid;
use vlab::jacobi::*;
use vlab::{GraphSurface, LabError, SurfaceSpec};

fn geo(s: &GraphSurface, nodes: usize) -> Arc<SurfaceGrid> {
    SurfaceGrid::new(s.clone(), Grid::unit(s.m, nodes).unwrap()).unwrap()
}

fn scherk(a: f64) -> GraphSurface {
    SurfaceSpec::Scherk { radius: 1.0, a }.build().unwrap()
}

fn bump(x: &[f64]) -> f64 {
    x.iter().map(|t| (1.0 - t * t).powi(2)).product()
}

fn f_coords(x: &[f64]) -> Vec<f64> {
    vec![bump(x) * (0.5 + x[0] - 0.3 * x[x.len() - 1] * x[0])]
}

fn phi_coords(x: &[f64]) -> Vec<f64> {
    vec![bump(x) * (x[0] + 0.7 * x[x.len() - 1]).cos()]
}

/// Ambient vector field c(x) nu(x) on the surface.
fn ambient(s: &GraphSurface, c: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DVector<f64> {
    let nu = s.frame(x).unwrap().normal;
    &nu * DVector::from_vec(c(x))
}

/// -int (DF : DPhi - 2 II_F : II_Phi) by a fine trapezoid rule, with chart
/// derivatives of the ambient fields by central differences.
fn weak_form_oracle(s: &GraphSurface, nodes: usize) -> f64 {
    let grid = Grid::unit(s.m, nodes).unwrap();
    let h = 1e-6;
    let mut total = 0.0;
    // the bump vanishes to second order on the boundary
    for k in grid.interior() {
        let x = grid.coords(k);
        let loc = s.local(&x).unwrap();
        let m = s.m;
        let mut df = Vec::new();
        let mut dp = Vec::new();
        for i in 0..m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            df.push((ambient(s, &f_coords, &xp) - ambient(s, &f_coords, &xm)) / (2.0 * h));
            dp.push((ambient(s, &phi_coords, &xp) - ambient(s, &phi_coords, &xm)) / (2.0 * h));
        }
        let mut grad = 0.0;
        for i in 0..m {
            for j in 0..m {
                grad += loc.metric_inv[(i, j)] * df[i].dot(&dp[j]);
            }
        }
        let fi = loc.second_form_along(&ambient(s, &f_coords, &x));
        let pi = loc.second_form_along(&ambient(s, &phi_coords, &x));
        let curv = fi.component_mul(&pi).sum();
        total += (-grad + 2.0 * curv) * loc.metric.determinant().sqrt() * grid.trapezoid(k);
    }
    total
}

#[test]
fn flat_laplacian_examples() {
    let g = geo(&GraphSurface::plane(2, 1, 1.0), 13);
    let sq = NormalSection::from_normal_coords(&g, |x| vec![x[0] * x[0]]);
    let lin = NormalSection::from_normal_coords(&g, |x| vec![2.0 - x[0] + 3.0 * x[1]]);
    let lsq = apply_jacobi(&sq).unwrap();
    let llin = apply_jacobi(&lin).unwrap();
    for k in g.grid.interior() {
        assert!((lsq.at(k)[2] - 2.0).abs() < 1e-10);
        assert!(lsq.at(k)[0] == 0.0 && lsq.at(k)[1] == 0.0);
        assert!(llin.at(k)[2].abs() < 1e-10);
    }
}

#[test]
fn coarse_grids_are_rejected() {
    assert!(matches!(Grid::unit(1, 7), Err(LabError::GridTooCoarse(7))));
}

#[test]
fn weak_form_converges_at_second_order() {
    for (s, fine) in [(SurfaceSpec::CircleCap { radius: 1.0, curvature_radius: 2.0 }.build().unwrap(), 4001), (scherk(0.4), 161)] {
        let want = weak_form_oracle(&s, fine);
        let errs: Vec<f64> = [17, 33, 65]
            .iter()
            .map(|&n| {
                let g = geo(&s, n);
                let f = NormalSection::from_normal_coords(&g, f_coords);
                let phi = NormalSection::from_normal_coords(&g, phi_coords);
                (apply_jacobi(&f).unwrap().pairing(&phi) - want).abs()
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[0] / w[1] >= 3.0, "m = {}: {errs:?}", s.m);
        }
    }
}

#[test]
fn weak_form_is_symmetric_to_first_order() {
    let s = scherk(0.4);
    let gaps: Vec<f64> = [17, 33, 65]
        .iter()
        .map(|&n| {
            let g = geo(&s, n);
            let f = NormalSection::from_normal_coords(&g, f_coords);
            let phi = NormalSection::from_normal_coords(&g, phi_coords);
            (apply_jacobi(&f).unwrap().pairing(&phi) - apply_jacobi(&phi).unwrap().pairing(&f)).abs()
        })
        .collect();
    for w in gaps.windows(2) {
        assert!(w[1] <= 0.6 * w[0] || w[1] < 1e-12, "{gaps:?}");
    }
}

#[test]
fn dirichlet_reproduces_harmonic_quadratics() {
    let g = geo(&GraphSurface::plane(2, 1, 1.0), 17);
    let exact = NormalSection::from_normal_coords(&g, |x| vec![x[0] * x[0] - x[1] * x[1]]);
    let (w, rep) = dirichlet_solve(&exact.boundary_part()).unwrap();
    assert!(rep.residual <= 1e-10);
    assert!(w.combine(1.0, &exact, -1.0).sup() < 1e-10);
    assert!(subsolution_check(&w).holds);
}

#[test]
fn dirichlet_is_a_projection() {
    let s = scherk(0.3);
    let g = geo(&s, 17);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let coords: Vec<f64> = (0..g.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v = NormalSection::from_coord_vec(&g, &coords).boundary_part();
    let op = SectionOperator::new(&g).unwrap();
    let (w1, _) = op.dirichlet(&v).unwrap();
    let (w2, _) = op.dirichlet(&v).unwrap();
    assert_eq!(w1.values, w2.values);
    let (w3, _) = dirichlet_solve(&w1).unwrap();
    assert!(w3.combine(1.0, &w1, -1.0).sup() < 1e-12);
    assert!(w1.normality_defect() < 1e-10);
}

#[test]
fn curved_dirichlet_constant_on_a_two_percent_surface() {
    let s = scherk(0.0065);
    let delta = s.flatness(1.0).unwrap();
    assert!(delta <= 0.02, "{delta}");
    let g = geo(&s, 17);
    let op = SectionOperator::new(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let coords: Vec<f64> = (0..g.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (w, rep) = op.dirichlet(&NormalSection::from_coord_vec(&g, &coords).boundary_part()).unwrap();
        assert!(rep.ratio <= 1.5, "{}", rep.ratio);
        assert!(subsolution_check(&w).holds);
    }
}

#[test]
fn source_examples() {
    let g = geo(&GraphSurface::plane(1, 1, 1.0), 33);
    let (u, rep) = source_solve(&NormalSection::zeros(&g)).unwrap();
    assert!(u.sup() == 0.0 && rep.residual == 0.0);
    let f = NormalSection::from_normal_coords(&g, |_| vec![1.0]);
    let (u, _) = source_solve(&f).unwrap();
    for k in 0..g.grid.len() {
        let x = g.grid.coords(k)[0];
        assert!((u.at(k)[1] - 0.5 * (x * x - 1.0)).abs() < 1e-12);
    }
}

#[test]
fn source_round_trip_on_a_curved_surface() {
    for s in [scherk(0.3), SurfaceSpec::SphereCap { radius: 1.0, curvature_radius: 2.0 }.build().unwrap()] {
        let g = geo(&s, 21);
        let f = NormalSection::from_normal_coords(&g, |x| vec![(1.5 * x[0]).sin() + x[1] * x[1]]);
        let (u, rep) = source_solve(&f).unwrap();
        assert!(rep.residual <= 1e-10 && rep.ratio.is_finite());
        let back = apply_jacobi(&u).unwrap();
        let err = g.grid.interior().into_iter().map(|k| (back.coords(k)[0] - f.coords(k)[0]).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }
}

#[test]
fn codimension_two_sections_stay_normal() {
    let s = SurfaceSpec::Polynomial {
        m: 2,
        n: 2,
        radius: 1.0,
        terms: vec![vlab::surface::TermSpec { exponents: vec![1, 1], coeffs: vec![0.1, -0.05] }],
    }
    .build()
    .unwrap();
    let g = geo(&s, 13);
    let v = NormalSection::from_normal_coords(&g, |x| vec![x[0], 1.0 - x[1] * x[1]]).boundary_part();
    let (w, rep) = dirichlet_solve(&v).unwrap();
    assert!(rep.residual <= 1e-10);
    assert!(w.normality_defect() < 1e-10);
    let amb = NormalSection::from_ambient(&g, |x| vec![0.0, 0.0, x[0], x[1]]);
    assert!(amb.normality_defect() < 1e-10);
}

#[test]
fn zero_is_a_subsolution() {
    let g = geo(&scherk(0.3), 9);
    assert!(subsolution_check(&NormalSection::zeros(&g)).holds);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn maximum_principle_on_flat_surfaces(a in -0.015f64..0.015, seed in 0u64..1000) {
        let s = scherk(a);
        prop_assume!(s.flatness(1.0).unwrap() <= 0.05);
        let g = geo(&s, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<f64> = (0..g.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (w, rep) = dirichlet_solve(&NormalSection::from_coord_vec(&g, &coords).boundary_part()).unwrap();
        prop_assert!(w.sup_interior() <= 2.0 * w.sup_boundary());
        prop_assert!(rep.ratio <= 2.0);
        prop_assert!(subsolution_check(&w).min_value >= -1e-8);
    }
}
