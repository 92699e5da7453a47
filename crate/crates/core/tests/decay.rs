use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use std::sync::Arc;
use vlab::chart::{Chart, PolyChart, SampledChart, SampledFn};
use vlab::decay::*;
use vlab::multiindex::graded_lex;
use vlab::surface::TermSpec;
use vlab::varifold::*;
use vlab::whitney::Jet;
use vlab::{GraphSurface, LabError, SurfaceSpec};

fn scherk(a: f64) -> SurfaceSpec {
    SurfaceSpec::Scherk { radius: 3.0, a }
}

fn small(grid: usize) -> DecayParams {
    DecayParams { grid, cells: 64, ..Default::default() }
}

/// V, M and z for one step on a Scherk graph against its tangent plane at x.
fn scherk_step_inputs(a: f64, x: &[f64], p: &DecayParams) -> (DiscreteVarifold, GraphSurface, DVector<f64>) {
    let g = scherk(a).build().unwrap();
    let mut z = x.to_vec();
    z.extend(g.value(x).unwrap());
    let m = jet_surface(&extract_jet(&g, x, 1).unwrap(), 2.6).unwrap();
    let sp = Sampling { half_width: p.reach, cells: p.cells, center: Some(x.to_vec()) };
    let v = gen_varifold_in(&VarifoldSpec::MinimalGraph { surface: scherk(a), sampling: sp.clone() }, &sp).unwrap();
    (v, m, DVector::from_vec(z))
}

#[test]
fn extract_jet_examples() {
    let sq = GraphSurface::new(1, 1, Chart::Polynomial(PolyChart::new(1, 1).with_term(&[2], &[1.0])), 1.0).unwrap();
    assert_eq!(extract_jet(&sq, &[0.0], 2).unwrap().coeffs, vec![vec![0.0], vec![0.0], vec![1.0]]);
    let affine = GraphSurface::new(2, 1, Chart::Polynomial(PolyChart::affine(2, 1, &[0.5, -0.25], &[0.1])), 1.0).unwrap();
    for l in 1..6 {
        let j = extract_jet(&affine, &[0.3, 0.2], l).unwrap();
        assert!(j.coeffs[3..].iter().all(|c| c[0] == 0.0));
        assert!((j.coeffs[0][0] - (0.1 + 0.15 - 0.05)).abs() < 1e-15);
    }
}

#[test]
fn sampled_charts_stop_at_degree_four() {
    let g = scherk(0.2).build().unwrap();
    let f: SampledFn = Arc::new(move |x: &[f64]| g.chart.value(x).unwrap());
    let sampled = GraphSurface::new(2, 1, Chart::Sampled(SampledChart { m: 2, n: 1, f }), 1.0).unwrap();
    assert!(extract_jet(&sampled, &[0.0, 0.0], 4).is_ok());
    assert!(matches!(extract_jet(&sampled, &[0.0, 0.0], 5), Err(LabError::Unsupported(_))));
}

#[test]
fn flat_varifold_on_its_own_plane_has_zero_excess() {
    let p = small(32);
    let v = gen_varifold(&VarifoldSpec::plane(2, 1, 1, Sampling::new(1.6, 48))).unwrap();
    let m = GraphSurface::plane(2, 1, 2.6);
    let out = decay_step(&v, &m, &Window::new(DVector::zeros(3), 1.0), &p).unwrap();
    assert_eq!(out.eps, 0.0);
    assert!(out.eps_next < 1e-12);
    assert!(out.surface.value(&[0.7, -0.4]).unwrap()[0].abs() < 1e-12);
}

#[test]
fn single_graph_contracts_superlinearly() {
    let p = small(32);
    let x = [0.1, 0.05];
    let mut worst: f64 = 0.0;
    for a in [0.05, 0.005, 0.0005] {
        let (v, m, z) = scherk_step_inputs(a, &x, &p);
        let out = decay_step(&v, &m, &Window::new(z, 1.0), &p).unwrap();
        assert_eq!(out.hypotheses.eta, 0.0);
        let c = out.eps_next / out.eps.powf(1.5);
        println!("a = {a}: eps {:.3e} eps' {:.3e} eps'/eps^1.5 {c:.3e}", out.eps, out.eps_next);
        worst = worst.max(c);
    }
    assert!(worst < 100.0);
}

#[test]
fn two_sheets_leave_the_average_plane_alone() {
    // both sheets have density 1 < Q, so the density gap is the whole mass
    let c = 0.05;
    let p = DecayParams { q: 2, eta0: 10.0, ..small(32) };
    let v = gen_varifold(&VarifoldSpec::parallel(2, 1, &[vec![c], vec![-c]], Sampling::new(1.6, 48))).unwrap();
    let m = GraphSurface::plane(2, 1, 2.6);
    let out = decay_step(&v, &m, &Window::new(DVector::zeros(3), 1.0), &p).unwrap();
    // both sheets sit at distance c, and the cylinder carries mass ratio 2
    let expected = c * 2f64.sqrt();
    assert!((out.eps - expected).abs() < 1e-3 * c, "{}", out.eps);
    // M' = M, and the inner cylinder sees the same sheets at `ratio` times the relative height
    assert!((out.eps_next - p.ratio * expected).abs() < 5e-3 * p.ratio * expected, "{}", out.eps_next);
    assert!(out.surface.value(&[0.3, 0.6]).unwrap()[0].abs() < 1e-10);
    let rec = out.recurrence.unwrap();
    let closed = p.ratio / (2f64.sqrt() + expected.sqrt());
    assert!((rec - closed).abs() < 0.01 * closed, "{rec}");
}

#[test]
fn failed_hypotheses_are_named() {
    let p = small(32);
    let m = GraphSurface::plane(2, 1, 2.6);
    let w = Window::new(DVector::zeros(3), 1.0);
    let high = gen_varifold(&VarifoldSpec::parallel(2, 1, &[vec![0.3]], Sampling::new(1.6, 32))).unwrap();
    let name = |r: Result<StepOutcome, LabError>| match r {
        Err(LabError::Hypothesis { name, .. }) => name,
        other => panic!("{other:?}"),
    };
    assert_eq!(name(decay_step(&high, &m, &w, &p)), "height");
    let single = gen_varifold(&VarifoldSpec::plane(2, 1, 1, Sampling::new(1.6, 32))).unwrap();
    assert_eq!(name(decay_step(&single, &m, &w, &DecayParams { q: 2, ..p.clone() })), "mass ratio");
    let tilted = gen_varifold(&VarifoldSpec::Plane { m: 2, n: 1, multiplicity: 1, slope: Some(vec![0.09, 0.0]), offset: None, sampling: Sampling::new(1.6, 32) })
        .unwrap();
    assert_eq!(name(decay_step(&tilted, &m, &w, &DecayParams { eps0: 0.01, ..p.clone() })), "excess");
    assert_eq!(name(decay_step(&single, &jet_surface(&Jet::new(vec![0.0, 0.0], 2, vec![vec![0.0], vec![0.0], vec![0.0], vec![0.4], vec![0.0], vec![0.4]]).unwrap(), 2.6).unwrap(), &w, &DecayParams { height_bound: 1.0, eps0: 1.0, ..p })), "flatness");
}

#[test]
fn decay_step_is_scale_equivariant() {
    let p = small(32);
    let x = [0.1, 0.05];
    let (v, m, z) = scherk_step_inputs(0.1, &x, &p);
    let base = decay_step(&v, &m, &Window::new(z.clone(), 1.0), &p).unwrap();
    for s in [0.25, 3.0] {
        let shift = DVector::from_vec(vec![0.4, -0.2, 0.1]);
        let vs = v.rescaled(&DVector::zeros(3), 1.0 / s).transformed(&DMatrix::identity(3, 3), &shift);
        let ms = m.rescaled(&[-0.4 / s, 0.2 / s], &[-0.1 / s], 1.0 / s);
        let zs = &z * s + &shift;
        let out = decay_step(&vs, &ms, &Window::new(zs, s), &p).unwrap();
        assert!((out.eps - base.eps).abs() < 1e-8 * base.eps.max(1e-8));
        assert!((out.eps_next - base.eps_next).abs() < 1e-8 * base.eps_next.max(1e-8), "{} {}", out.eps_next, base.eps_next);
        assert!((out.delta_next - base.delta_next).abs() < 1e-8);
    }
}

#[test]
fn reverse_check_on_an_offset_plane() {
    let t = 0.02;
    let v = gen_varifold(&VarifoldSpec::parallel(2, 1, &[vec![t]], Sampling::new(1.6, 48))).unwrap();
    let m = GraphSurface::plane(2, 1, 2.6);
    let rep = reverse_l2_check(&v, &m, &Window::new(DVector::zeros(3), 1.0), 41).unwrap();
    assert!((rep.value - t).abs() < 0.05 * t, "{}", rep.value);
    assert!((rep.ratio - 1.0).abs() < 0.1);
}

#[test]
fn reverse_check_is_bounded_on_scherk() {
    let p = small(32);
    let (v, m, z) = scherk_step_inputs(0.1, &[0.1, 0.05], &p);
    let rep = reverse_l2_check(&v, &m, &Window::new(z, 1.0), 41).unwrap();
    assert!(rep.ratio > 0.1 && rep.ratio < 10.0, "{}", rep.ratio);
}

#[test]
fn graph_comparison_reports_derivative_gaps() {
    let t = 0.01;
    let a = GraphSurface::plane(1, 1, 1.0);
    let b = GraphSurface::new(1, 1, Chart::Polynomial(PolyChart::new(1, 1).with_term(&[2], &[t])), 1.0).unwrap();
    let rows = graph_comparison(&a, &b, &[0.0], 0.1, 3, t, 0.0).unwrap();
    assert!((rows[0].gap - t * 0.01).abs() < 1e-15);
    assert!((rows[1].gap - 2.0 * t * 0.1).abs() < 1e-15);
    assert!((rows[2].gap - 2.0 * t).abs() < 1e-15);
    assert_eq!(rows[3].gap, 0.0);
    assert!((rows[2].ratio - 2.0).abs() < 1e-12);
    assert!(graph_comparison(&a, &a, &[0.3], 0.1, 2, t, t).unwrap().iter().all(|r| r.gap == 0.0));
}

#[test]
fn jet_limit_of_a_stationary_sequence() {
    let j = Jet::new(vec![0.2], 2, vec![vec![1.0], vec![0.5], vec![-0.3]]).unwrap();
    let lim = jet_limit(&[j.clone(), j.clone(), j.clone()], &[1.0, 0.5, 0.25]).unwrap();
    assert_eq!(lim.jet, j);
    assert!(lim.rates.iter().all(Option::is_none));
    assert_eq!(lim.expected, vec![3.0, 2.0, 1.0]);
}

#[test]
fn jet_limit_recovers_rate_and_limit() {
    // c_k = c + r_k^(3 - |beta|): geometric tails with known exponents
    let rs: Vec<f64> = (0..6).map(|k| 0.5f64.powi(k)).collect();
    let limit = [1.0, -2.0, 0.5];
    let jets: Vec<Jet> = rs
        .iter()
        .map(|r| Jet::new(vec![0.0], 2, (0..3).map(|b| vec![limit[b] + r.powi(3 - b as i32)]).collect()).unwrap())
        .collect();
    let lim = jet_limit(&jets, &rs).unwrap();
    for b in 0..3 {
        assert!((lim.rates[b].unwrap() - (3 - b) as f64).abs() < 1e-10);
        assert!((lim.jet.coeffs[b][0] - limit[b]).abs() < 1e-12);
    }
    assert!(lim.worst_margin().abs() < 1e-10);
}

#[test]
fn jet_limit_rejects_divergence_and_short_runs() {
    let rs = [1.0, 0.5, 0.25, 0.125];
    let jets: Vec<Jet> = (0..4).map(|k| Jet::new(vec![0.0], 0, vec![vec![2f64.powi(k)]]).unwrap()).collect();
    assert!(matches!(jet_limit(&jets, &rs), Err(LabError::NotCauchy(_))));
    assert!(matches!(jet_limit(&jets[..2], &rs[..2]), Err(LabError::Invalid(_))));
}

#[test]
fn decay_on_a_line_is_immediate() {
    let line = SurfaceSpec::Polynomial { m: 1, n: 1, radius: 4.0, terms: vec![TermSpec { exponents: vec![1], coeffs: vec![0.05] }] };
    let p = DecayParams::default();
    let (run, truth) = minimal_graph_run(&line, &[0.1], 3, 6, 0, &p).unwrap();
    assert!(run.failure.is_none(), "{:?}", run.failure);
    assert_eq!(run.states.len(), 7);
    assert!(run.states[0].eps > 1e-3);
    assert!(run.states[1..].iter().all(|s| s.eps < 1e-12));
    assert!(run.slope() >= 3.0);
    assert!(run.c_bar(p.resolution) < 100.0);
    // state 0 is the supplied tangent plane, exact at degree 1
    let (jets, radii) = (&run.jets()[1..], &run.radii()[1..]);
    let lim = jet_limit(jets, radii).unwrap();
    assert!(lim.jet.gap(&truth) < 1e-6);
}

#[test]
fn decay_on_scherk_recovers_the_jet() {
    let p = DecayParams::default();
    let x = [0.1, 0.05];
    let (run, truth) = minimal_graph_run(&scherk(0.1), &x, 3, 6, 1, &p).unwrap();
    print!("{}", run.to_csv());
    assert!(run.failure.is_none(), "{:?}", run.failure);
    assert_eq!(run.states.len(), 7);
    assert!(run.states.iter().all(|s| s.eta == 0.0 && s.eps >= 0.0 && s.delta >= 0.0));
    assert!(run.states.iter().all(|s| s.carried_over));
    for l in 1..=3 {
        assert!(run.slope() >= l as f64);
        assert!(run.d_constant(l).is_finite());
    }
    let cbar = run.c_bar(p.resolution);
    println!("C_bar {cbar:.3e}");
    assert!(cbar < 100.0);
    // state 0 is the supplied tangent plane, exact at degree 1
    let (jets, radii) = (&run.jets()[1..], &run.radii()[1..]);
    let lim = jet_limit(jets, radii).unwrap();
    assert!(lim.jet.gap(&truth) < 1e-6, "{}", lim.jet.gap(&truth));
    assert!(lim.worst_margin() >= -0.2, "{:?}", lim.rates);
    // jets nest: the degree-2 limit is the truncated degree-3 limit
    let low: Vec<Jet> = jets.iter().map(|j| j.truncated(2)).collect();
    let lim2 = jet_limit(&low, radii).unwrap();
    assert!(lim2.jet.gap(&lim.jet.truncated(2)) <= 1e-10);
    // successive jets agree at lower degrees up to r_k^(1 + l - |beta|)
    for w in run.states.windows(2) {
        let gap = w[1].jet.truncated(1).gap(&w[0].jet.truncated(1));
        assert!(gap <= 10.0 * w[0].r.powi(2), "k = {}: {gap}", w[0].k);
    }
    let csv = run.to_csv();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "k,r_k,eps_k,delta_k,eta_k,lip_k,complement_k,solver_residual,recurrence");
    assert_eq!(csv.lines().nth(1).unwrap().split(',').nth(1).unwrap(), "1.0000000000000000e0");
}

#[test]
fn hypothesis_failure_truncates_the_run() {
    let p = DecayParams { grid: 32, cells: 48, eps0: 0.015, ..Default::default() };
    let (run, _) = minimal_graph_run(&scherk(0.1), &[0.1, 0.05], 2, 3, 0, &p).unwrap();
    let (k, err) = run.failure.clone().unwrap();
    assert_eq!(k, 0);
    assert!(matches!(err, LabError::Hypothesis { ref name, .. } if name == "excess"), "{err:?}");
    assert_eq!(run.states.len(), 1);
    assert!(run.states[0].step.is_none());
}

#[test]
fn fixed_plane_source_stays_put() {
    let p = small(32);
    let v = gen_varifold(&VarifoldSpec::plane(2, 1, 1, Sampling::new(1.6, 48))).unwrap();
    let m = GraphSurface::plane(2, 1, 2.6);
    let run = decay_iterate(&VarifoldSource::Fixed(v), &DVector::zeros(3), &m, 2, 2, &p).unwrap();
    assert!(run.failure.is_none(), "{:?}", run.failure);
    assert!(run.states.iter().all(|s| s.eps < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn extract_jet_round_trips_polynomials(c in prop::collection::vec(-1.0f64..1.0, 10), x in prop::collection::vec(-0.5f64..0.5, 2)) {
        let idx = graded_lex(2, 3);
        let mut poly = PolyChart::new(2, 1);
        for (b, v) in idx.iter().zip(&c) {
            poly = poly.with_term(b, &[*v]);
        }
        let g = GraphSurface::new(2, 1, Chart::Polynomial(poly), 1.0).unwrap();
        let j = extract_jet(&g, &[0.0, 0.0], 3).unwrap();
        for (a, b) in j.coeffs.iter().zip(&c) {
            prop_assert!((a[0] - b).abs() < 1e-14);
        }
        let at = extract_jet(&g, &x, 3).unwrap();
        prop_assert!((at.eval(&[0.0, 0.0])[0] - c[0]).abs() < 1e-12);
    }
}
