//! Excess decay. One step replaces M by the minimal graph carrying the
//! boundary values of the averaged Q-valued approximation of V; iterating
//! the step while zooming in on a point of V produces the surfaces M_k and
//! their Taylor jets at that point.

use crate::chart::{Chart, PolyChart};
use crate::error::{LabError, Result};
use crate::grid::Grid;
use crate::jacobi::{NormalSection, SectionOperator, SurfaceGrid};
use crate::linalg::linear_slope;
use crate::minsurf::{solve_mss_with, MssOptions};
use crate::multiindex::{self, graded_lex, monomial};
use crate::qapprox::{average_section, build_approximation, ApproxOptions};
use crate::surface::{GraphSurface, SurfaceSpec};
use crate::varifold::{gen_varifold_in, l2_height, mass_ratio, omega, Cylinder, DiscreteVarifold, Sampling, VarifoldSpec};
use crate::whitney::Jet;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct DecayParams {
    pub q: usize,
    /// grid nodes per axis over the unit cylinder
    pub grid: usize,
    /// r_k / r_{k+1}
    pub ratio: f64,
    /// radius of the first cylinder
    pub r0: f64,
    /// level of the good set
    pub lambda: f64,
    pub eps0: f64,
    pub eta0: f64,
    pub delta0: f64,
    /// bound on |y| over supp V in the unit cylinder
    pub height_bound: f64,
    /// radius of the cylinder where the mass ratio must be within 1/2 of Q
    pub mass_radius: f64,
    /// degree of the polynomial chart fitted to each new surface
    pub fit_degree: usize,
    /// regenerated varifolds: cells per axis and half-width in cylinder radii
    pub cells: usize,
    pub reach: f64,
    pub mss: MssOptions,
    /// excess below which the pipeline no longer resolves decay
    pub resolution: f64,
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams {
            q: 1,
            grid: 64,
            ratio: 2.0,
            r0: 1.0,
            lambda: 0.02,
            eps0: 0.2,
            eta0: 0.1,
            delta0: 0.5,
            height_bound: 0.1,
            mass_radius: 0.3,
            fit_degree: 8,
            cells: 96,
            reach: 1.6,
            mss: MssOptions::default(),
            resolution: 1e-10,
        }
    }
}

impl DecayParams {
    /// 10:1 scale steps; the other radii are already relative to the cylinder.
    pub fn tenfold() -> Self {
        DecayParams { ratio: 10.0, ..Default::default() }
    }
}

/// The cylinder C_r(z) over the horizontal plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl Window {
    pub fn new(center: DVector<f64>, radius: f64) -> Window {
        Window { center, radius }
    }

    fn split(&self, m: usize) -> (Vec<f64>, Vec<f64>) {
        let c = self.center.as_slice();
        (c[..m].to_vec(), c[m..].to_vec())
    }

    /// M seen in the unit coordinates (z - center) / radius.
    pub fn to_unit(&self, s: &GraphSurface) -> GraphSurface {
        let (x0, y0) = self.split(s.m);
        s.rescaled(&x0, &y0, self.radius)
    }

    pub fn from_unit(&self, s: &GraphSurface) -> GraphSurface {
        let (x0, y0) = self.split(s.m);
        let r = self.radius;
        let x: Vec<f64> = x0.iter().map(|v| -v / r).collect();
        let y: Vec<f64> = y0.iter().map(|v| -v / r).collect();
        s.rescaled(&x, &y, 1.0 / r)
    }
}

/// Measured hypotheses of the decay step, in unit coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypotheses {
    /// sup |y| over atoms meeting C_1
    pub height: f64,
    /// mass ratio in C_{mass_radius}
    pub mass_inner: f64,
    /// mass ratio in C_1
    pub mass_outer: f64,
    /// ||V||({Theta < Q} in C_1) / omega_m
    pub eta: f64,
    pub eps: f64,
    pub delta: f64,
}

impl Hypotheses {
    pub fn measure(v: &DiscreteVarifold, m: &GraphSurface, p: &DecayParams) -> Result<Hypotheses> {
        let cyl = Cylinder::unit(v.m, v.n);
        let height = v
            .atoms
            .iter()
            .filter(|a| cyl.fraction(a) > 0.0)
            .map(|a| a.point.rows(v.m, v.n).norm())
            .fold(0.0, f64::max);
        let eta = v
            .atoms
            .iter()
            .filter(|a| (a.density as usize) < p.q)
            .map(|a| cyl.fraction(a) * a.mass())
            .sum::<f64>()
            / omega(v.m)
            + 0.0;
        Ok(Hypotheses {
            height,
            mass_inner: mass_ratio(v, &cyl.with_radius(p.mass_radius)),
            mass_outer: mass_ratio(v, &cyl),
            eta,
            eps: l2_height(v, m, &cyl)?.sqrt(),
            delta: m.flatness(m.radius.min(2.0))?,
        })
    }

    /// The first violated hypothesis, if any.
    pub fn verify(&self, p: &DecayParams) -> Result<()> {
        let q = p.q as f64;
        let fail = |name: &str, value: f64, bound: f64| Err(LabError::Hypothesis { name: name.into(), value, bound });
        if self.height > p.height_bound {
            return fail("height", self.height, p.height_bound);
        }
        if !(self.mass_inner > q - 0.5 && self.mass_inner < q + 0.5) {
            return fail("mass ratio", self.mass_inner, q);
        }
        if self.mass_outer > q + 0.5 {
            return fail("outer mass ratio", self.mass_outer, q + 0.5);
        }
        if self.eta > p.eta0 {
            return fail("density gap", self.eta, p.eta0);
        }
        if self.eps > p.eps0 {
            return fail("excess", self.eps, p.eps0);
        }
        if self.delta > p.delta0 {
            return fail("flatness", self.delta, p.delta0);
        }
        Ok(())
    }

    /// Everything but the density gap, which need not carry over.
    pub fn carried_over(&self, p: &DecayParams) -> bool {
        Hypotheses { eta: 0.0, ..self.clone() }.verify(p).is_ok()
    }
}

#[derive(Clone, Debug)]
pub struct StepDiagnostics {
    pub lip: f64,
    /// |B \ K| on M
    pub complement_area: f64,
    pub good_fraction: f64,
    pub density_match_rate: f64,
    /// ||f~ - f_bar||_L2 / eps^{3/2}
    pub harmonic_gap: f64,
    pub mss_residual: f64,
    pub mss_iterations: usize,
    /// sup residual of the polynomial fit of the new graph
    pub fit_residual: f64,
    /// sup |H| of the fitted surface over the grid, in next-scale units
    pub minimality: f64,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// M' in the caller's coordinates
    pub surface: GraphSurface,
    pub hypotheses: Hypotheses,
    pub eps: f64,
    /// excess of V against M' on the inner cylinder, at its own scale
    pub eps_next: f64,
    pub delta_next: f64,
    /// eps' / ((sqrt eta + sqrt eps) eps); None when eps = 0
    pub recurrence: Option<f64>,
    pub diagnostics: StepDiagnostics,
}

/// One decay step on C_r(z) = `window`, with the inner cylinder of radius
/// r / ratio.
pub fn decay_step(v: &DiscreteVarifold, m: &GraphSurface, window: &Window, p: &DecayParams) -> Result<StepOutcome> {
    if v.m != m.m || v.n != m.n || window.center.len() != v.dim() {
        return Err(LabError::Dimension("varifold, surface and window disagree".into()));
    }
    let vu = v.rescaled(&window.center, window.radius);
    let mu = window.to_unit(m);
    let hyp = Hypotheses::measure(&vu, &mu, p)?;
    hyp.verify(p)?;
    let mut out = step_unit(&vu, &mu, hyp, p)?;
    out.surface = window.from_unit(&out.surface);
    Ok(out)
}

fn step_unit(v: &DiscreteVarifold, m: &GraphSurface, hyp: Hypotheses, p: &DecayParams) -> Result<StepOutcome> {
    let geo = SurfaceGrid::new(m.clone(), Grid::unit(m.m, p.grid)?)?;
    let mut opts = ApproxOptions::new(p.q, p.lambda);
    opts.delta = hyp.delta;
    let (fq, arep) = build_approximation(v, &geo, &opts)?;
    let fbar = average_section(&fq);
    let (ftilde, _) = SectionOperator::new(&geo)?.dirichlet(&fbar)?;
    let gap = l2_norm(&ftilde.combine(1.0, &fbar, -1.0));
    let (fprime, mrep) = solve_mss_with(&ftilde.boundary_part(), Some(&ftilde), &p.mss)?;
    let (surface, fit_residual) = fit_graph(&fprime, p.fit_degree, 1.0)?;

    let inner = 1.0 / p.ratio;
    let eps_next = (l2_height(v, &surface, &Cylinder::unit(v.m, v.n).with_radius(inner))?).sqrt();
    let next = surface.rescaled(&vec![0.0; m.m], &vec![0.0; m.n], inner);
    let delta_next = next.flatness(next.radius.min(2.0))?;
    let minimality = geo
        .grid
        .interior()
        .par_iter()
        .filter_map(|&k| {
            let pt = &geo.local[k].point + DVector::from_column_slice(fprime.at(k));
            surface.mean_curvature(&pt.as_slice()[..m.m]).ok().map(|h| h.norm())
        })
        .reduce(|| 0.0, f64::max)
        * inner;
    let eps = hyp.eps;
    let recurrence = (eps > 0.0).then(|| eps_next / ((hyp.eta.sqrt() + eps.sqrt()) * eps));
    let good = fq.good.iter().filter(|&&g| g).count() as f64 / fq.good.len() as f64;
    let harmonic_gap = if eps > 0.0 { gap / eps.powf(1.5) } else { 0.0 };
    Ok(StepOutcome {
        surface,
        eps,
        eps_next,
        delta_next,
        recurrence,
        diagnostics: StepDiagnostics {
            lip: arep.lip,
            complement_area: arep.good.complement_area,
            good_fraction: good,
            density_match_rate: arep.density_match_rate,
            harmonic_gap,
            mss_residual: mrep.residual(),
            mss_iterations: mrep.iterations,
            fit_residual,
            minimality,
        },
        hypotheses: hyp,
    })
}

/// (1/omega_m int |f|^2 dH^m)^{1/2} over the grid domain.
fn l2_norm(f: &NormalSection) -> f64 {
    let geo = &f.geo;
    let s: f64 = (0..geo.grid.len()).map(|k| geo.area_weight(k) * f.node_norm(k).powi(2)).sum();
    (s / omega(geo.grid.m)).sqrt()
}

/// Least-squares polynomial chart of total degree `degree` through the
/// points of the normal graph of f, returned with the sup fit residual.
pub fn fit_graph(f: &NormalSection, degree: usize, radius: f64) -> Result<(GraphSurface, f64)> {
    let geo = &f.geo;
    let (m, n) = (geo.grid.m, geo.n());
    let betas = graded_lex(m, degree);
    let rows = geo.grid.len();
    if rows < betas.len() {
        return Err(LabError::Invalid(format!("{rows} points cannot fit {} coefficients", betas.len())));
    }
    let mut a = DMatrix::zeros(rows, betas.len());
    let mut b = DMatrix::zeros(rows, n);
    for k in 0..rows {
        let pt = &geo.local[k].point + DVector::from_column_slice(f.at(k));
        let x = &pt.as_slice()[..m];
        for (j, beta) in betas.iter().enumerate() {
            a[(k, j)] = monomial(x, beta);
        }
        for c in 0..n {
            b[(k, c)] = pt[m + c];
        }
    }
    let sol = a.clone().svd(true, true).solve(&b, 1e-15).map_err(|e| LabError::Singular(e.to_string()))?;
    let residual = (&a * &sol - &b).amax();
    let mut poly = PolyChart::new(m, n);
    for (j, beta) in betas.iter().enumerate() {
        poly.terms.push((beta.clone(), (0..n).map(|c| sol[(j, c)]).collect()));
    }
    Ok((GraphSurface::new(m, n, Chart::Polynomial(poly), radius)?, residual))
}

#[derive(Clone, Debug)]
pub struct ReverseReport {
    /// (1/omega_m int_{M cap C_1} d_V^2 dH^m)^{1/2}
    pub value: f64,
    pub eps: f64,
    pub ratio: f64,
}

/// Distance from M back to supp V. Atoms stand for small tangent discs, so
/// d_V is the distance to the nearest disc.
pub fn reverse_l2_check(v: &DiscreteVarifold, m: &GraphSurface, window: &Window, nodes: usize) -> Result<ReverseReport> {
    let vu = v.rescaled(&window.center, window.radius);
    let mu = window.to_unit(m);
    let cyl = Cylinder::unit(vu.m, vu.n);
    let eps = l2_height(&vu, &mu, &cyl)?.sqrt();
    let geo = SurfaceGrid::new(mu, Grid::unit(vu.m, nodes)?)?;
    let half_diag = 0.5 * (vu.m as f64).sqrt();
    let discs: Vec<(&DVector<f64>, &DMatrix<f64>, f64)> = vu
        .atoms
        .iter()
        .map(|a| (&a.point, &a.projector, half_diag * a.weight.powf(1.0 / vu.m as f64)))
        .collect();
    let s: f64 = (0..geo.grid.len())
        .into_par_iter()
        .filter(|&k| geo.grid.coords(k).iter().map(|x| x * x).sum::<f64>() <= 1.0)
        .map(|k| {
            let p = &geo.local[k].point;
            let d2 = discs
                .iter()
                .map(|(z, proj, rho)| {
                    let u = p - *z;
                    let t = *proj * &u;
                    let tan = (t.norm() - rho).max(0.0);
                    (u - t).norm_squared() + tan * tan
                })
                .fold(f64::INFINITY, f64::min);
            geo.area_weight(k) * d2
        })
        .sum();
    let value = (s / omega(vu.m)).sqrt();
    let ratio = if value == 0.0 { 0.0 } else { value / eps };
    Ok(ReverseReport { value, eps, ratio })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub order: usize,
    /// sup over B_radius(x) of |D^order (g - g'')|
    pub gap: f64,
    /// gap / (eps + sigma)
    pub ratio: f64,
}

/// Derivative gaps between two graphs near x, against eps + sigma.
pub fn graph_comparison(
    a: &GraphSurface,
    b: &GraphSurface,
    x: &[f64],
    radius: f64,
    max_order: usize,
    eps: f64,
    sigma: f64,
) -> Result<Vec<ComparisonRow>> {
    if a.m != b.m || a.n != b.n || x.len() != a.m {
        return Err(LabError::Dimension("graphs over different spaces".into()));
    }
    let m = a.m;
    let k = 4i64;
    let mut gaps = vec![0.0f64; max_order + 1];
    let mut idx = vec![-k; m];
    loop {
        let off: Vec<f64> = idx.iter().map(|&i| i as f64 * radius / k as f64).collect();
        if off.iter().map(|v| v * v).sum::<f64>() <= radius * radius * (1.0 + 1e-12) {
            let pt: Vec<f64> = off.iter().zip(x).map(|(o, c)| o + c).collect();
            let (ta, tb) = (a.chart.derivs(&pt, max_order)?, b.chart.derivs(&pt, max_order)?);
            let sp = ta[0].space();
            for (l, g) in gaps.iter_mut().enumerate() {
                let mut s = 0.0;
                for pos in sp.block(l) {
                    let beta = &sp.index[pos];
                    let f = multiindex::factorial(beta);
                    // each partial appears l!/beta! times in the symmetric tensor
                    let mult = (1..=l).map(|v| v as f64).product::<f64>() / f;
                    for (u, w) in ta.iter().zip(&tb) {
                        let d = (u.c[pos] - w.c[pos]) * f;
                        s += mult * d * d;
                    }
                }
                *g = g.max(s.sqrt());
            }
        }
        let mut i = 0;
        loop {
            if i == m {
                return Ok(gaps
                    .into_iter()
                    .enumerate()
                    .map(|(order, gap)| ComparisonRow { order, gap, ratio: gap / (eps + sigma) })
                    .collect());
            }
            idx[i] += 1;
            if idx[i] <= k {
                break;
            }
            idx[i] = -k;
            i += 1;
        }
    }
}

/// Taylor polynomial of degree l of the chart of M at x.
pub fn extract_jet(m: &GraphSurface, x: &[f64], l: usize) -> Result<Jet> {
    if l > 4 && m.chart.is_sampled() {
        return Err(LabError::Unsupported(format!("degree-{l} jet of a sampled chart")));
    }
    if x.len() != m.m {
        return Err(LabError::Dimension("jet base point".into()));
    }
    Jet::from_taylor(x.to_vec(), l, &m.chart.derivs(x, l)?)
}

/// Graph of a jet's polynomial over the cube of half-side `radius` about
/// its base.
pub fn jet_surface(jet: &Jet, radius: f64) -> Result<GraphSurface> {
    let m = jet.m();
    let chart = Chart::Polynomial(PolyChart::from_dense(m, jet.n, jet.base.clone(), 1.0, &jet.coeffs));
    Ok(GraphSurface::new(m, jet.n, chart, radius)?.with_center(jet.base.clone()))
}

#[derive(Clone, Debug)]
pub struct JetLimit {
    pub jet: Jet,
    /// fitted convergence exponent per coefficient; None for a constant stream
    pub rates: Vec<Option<f64>>,
    /// 1 + l - |beta|
    pub expected: Vec<f64>,
}

impl JetLimit {
    /// Smallest rate minus its expected value over the non-constant streams.
    pub fn worst_margin(&self) -> f64 {
        self.rates
            .iter()
            .zip(&self.expected)
            .filter_map(|(r, e)| r.map(|r| r - e))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Coefficient changes below this, relative to the coefficient size, are
/// roundoff of the chart fits.
const JET_NOISE: f64 = 1e-10;

/// Limit of the jets p^k taken at radii r_k, extrapolating the geometric
/// tail of the coefficient differences.
pub fn jet_limit(jets: &[Jet], radii: &[f64]) -> Result<JetLimit> {
    if jets.len() < 3 || radii.len() != jets.len() {
        return Err(LabError::Invalid("jet limit needs at least three jets and one radius per jet".into()));
    }
    let last = jets.last().unwrap();
    if jets.iter().any(|j| j.degree != last.degree || j.base != last.base || j.n != last.n) {
        return Err(LabError::Dimension("jets of different shapes or bases".into()));
    }
    let betas = last.index();
    let mut coeffs = last.coeffs.clone();
    let mut rates = Vec::with_capacity(betas.len());
    let mut expected = Vec::with_capacity(betas.len());
    for (pos, beta) in betas.iter().enumerate() {
        expected.push((1 + last.degree - multiindex::degree(beta)) as f64);
        let scale = jets.iter().flat_map(|j| j.coeffs[pos].iter()).fold(1.0f64, |a, v| a.max(v.abs()));
        let diffs: Vec<(f64, f64)> = jets
            .windows(2)
            .zip(&radii[1..])
            .map(|(w, &r)| {
                let d = w[1].coeffs[pos].iter().zip(&w[0].coeffs[pos]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                (r, d)
            })
            .filter(|&(_, d)| d > JET_NOISE * scale)
            .collect();
        if diffs.len() < 2 {
            rates.push(None);
            continue;
        }
        let lr: Vec<f64> = diffs.iter().map(|(r, _)| r.ln()).collect();
        let ld: Vec<f64> = diffs.iter().map(|(_, d)| d.ln()).collect();
        let rate = linear_slope(&lr, &ld);
        if !(rate > 0.0) {
            return Err(LabError::NotCauchy(format!("coefficient {beta:?} differences grow (rate {rate:.3})")));
        }
        let k = jets.len() - 1;
        let q = (radii[k] / radii[k - 1]).powf(rate);
        for c in 0..last.n {
            let step = jets[k].coeffs[pos][c] - jets[k - 1].coeffs[pos][c];
            coeffs[pos][c] += step * q / (1.0 - q);
        }
        rates.push(Some(rate));
    }
    Ok(JetLimit { jet: Jet::new(last.base.clone(), last.degree, coeffs)?, rates, expected })
}

/// Where the varifold of an iteration comes from at each scale.
#[derive(Clone, Debug)]
pub enum VarifoldSource {
    /// one fixed cloud, rescaled at every step
    Fixed(DiscreteVarifold),
    /// resampled over a window proportional to each cylinder
    Generated(VarifoldSpec),
}

impl VarifoldSource {
    fn at_scale(&self, z: &DVector<f64>, r: f64, p: &DecayParams) -> Result<DiscreteVarifold> {
        match self {
            VarifoldSource::Fixed(v) => Ok(v.clone()),
            VarifoldSource::Generated(spec) => {
                let m = spec.dims()?.0;
                let sampling = Sampling { half_width: p.reach * r, cells: p.cells, center: Some(z.as_slice()[..m].to_vec()) };
                gen_varifold_in(spec, &sampling)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecayState {
    pub k: usize,
    pub r: f64,
    /// M_k in the original coordinates
    pub surface: GraphSurface,
    pub eps: f64,
    pub delta: f64,
    pub eta: f64,
    pub jet: Jet,
    pub hypotheses: Hypotheses,
    /// hypotheses other than the density gap hold at this scale
    pub carried_over: bool,
    /// the step leaving this state
    pub step: Option<StepDiagnostics>,
    pub recurrence: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DecayRun {
    pub states: Vec<DecayState>,
    /// scale index and error of a truncated run
    pub failure: Option<(usize, LabError)>,
}

impl DecayRun {
    /// Least-squares slope of log eps_k against log r_k over the states with
    /// eps_k > 0; infinite when fewer than two such states exist.
    pub fn slope(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.states.iter().filter(|s| s.eps > 0.0).map(|s| (s.r.ln(), s.eps.ln())).collect();
        if pts.len() < 2 {
            return f64::INFINITY;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        linear_slope(&x, &y)
    }

    /// D_l = max_k eps_k / r_k^l.
    pub fn d_constant(&self, l: usize) -> f64 {
        self.states.iter().map(|s| s.eps / s.r.powi(l as i32)).fold(0.0, f64::max)
    }

    /// Largest recurrence ratio, with eps_{k+1} measured above the floor
    /// (eps_{k+1} - floor)_+ so that steps ending at roundoff count as 0.
    pub fn c_bar(&self, floor: f64) -> f64 {
        self.states
            .windows(2)
            .filter(|w| w[0].eps > 0.0)
            .map(|w| {
                let s = &w[0];
                (w[1].eps - floor).max(0.0) / ((s.eta.sqrt() + s.eps.sqrt()) * s.eps)
            })
            .fold(0.0, f64::max)
    }

    pub fn jets(&self) -> Vec<Jet> {
        self.states.iter().map(|s| s.jet.clone()).collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.r).collect()
    }

    /// k, r_k, eps_k, delta_k, eta_k, Lip_K, |B\K|, solver residual, recurrence
    /// ratio; 17 significant digits, empty cells where a step did not run.
    pub fn to_csv(&self) -> String {
        let num = |v: f64| format!("{v:.16e}");
        let mut s = String::from("k,r_k,eps_k,delta_k,eta_k,lip_k,complement_k,solver_residual,recurrence\n");
        for st in &self.states {
            let (lip, comp, res) = match &st.step {
                Some(d) => (num(d.lip), num(d.complement_area), num(d.mss_residual)),
                None => (String::new(), String::new(), String::new()),
            };
            let rec = st.recurrence.map(num).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                st.k,
                num(st.r),
                num(st.eps),
                num(st.delta),
                num(st.eta),
                lip,
                comp,
                res,
                rec
            ));
        }
        s
    }
}

/// Runs `steps` decay steps on the cylinders C_{r_k}(z), r_k = r0 ratio^-k,
/// starting from M0. A failed step truncates the run; the failure is kept.
pub fn decay_iterate(
    source: &VarifoldSource,
    z: &DVector<f64>,
    m0: &GraphSurface,
    l: usize,
    steps: usize,
    p: &DecayParams,
) -> Result<DecayRun> {
    let m = m0.m;
    if z.len() != m0.dim() {
        return Err(LabError::Dimension("center point".into()));
    }
    let x = &z.as_slice()[..m];
    let mut surface = m0.clone();
    let mut states = Vec::new();
    let mut failure = None;
    for k in 0..=steps {
        let r = p.r0 * p.ratio.powi(-(k as i32));
        let window = Window::new(z.clone(), r);
        let v = match source.at_scale(z, r, p) {
            Ok(v) => v,
            Err(e) => {
                failure = Some((k, e));
                break;
            }
        };
        let jet = extract_jet(&surface, x, l)?;
        let state = |hyp: Hypotheses, step: Option<StepDiagnostics>, recurrence: Option<f64>, surface: &GraphSurface| DecayState {
            k,
            r,
            surface: surface.clone(),
            eps: hyp.eps,
            delta: hyp.delta,
            eta: hyp.eta,
            jet: jet.clone(),
            carried_over: hyp.carried_over(p),
            hypotheses: hyp,
            step,
            recurrence,
        };
        if k == steps {
            let vu = v.rescaled(z, r);
            match Hypotheses::measure(&vu, &window.to_unit(&surface), p) {
                Ok(h) => {
                    if let Err(e) = h.verify(p) {
                        failure = Some((k, e));
                    }
                    states.push(state(h, None, None, &surface));
                }
                Err(e) => failure = Some((k, e)),
            }
            break;
        }
        match decay_step(&v, &surface, &window, p) {
            Ok(out) => {
                states.push(state(out.hypotheses.clone(), Some(out.diagnostics.clone()), out.recurrence, &surface));
                surface = out.surface;
            }
            Err(e) => {
                if let Ok(h) = Hypotheses::measure(&v.rescaled(z, r), &window.to_unit(&surface), p) {
                    states.push(state(h, None, None, &surface));
                }
                failure = Some((k, e));
                break;
            }
        }
    }
    Ok(DecayRun { states, failure })
}

/// Decay on a minimal graph resampled at every scale, centred at the graph
/// point over x and started from the degree-`start` jet of the graph there
/// (1: tangent plane, 0: horizontal plane through the point). Returns the
/// run and the exact jet of the graph at x.
pub fn minimal_graph_run(
    surface: &SurfaceSpec,
    x: &[f64],
    l: usize,
    steps: usize,
    start: usize,
    p: &DecayParams,
) -> Result<(DecayRun, Jet)> {
    let g = surface.build()?;
    let mut z = x.to_vec();
    z.extend(g.value(x)?);
    let m0 = jet_surface(&extract_jet(&g, x, start)?, p.r0 * (1.0 + p.reach))?;
    let spec = VarifoldSpec::MinimalGraph { surface: surface.clone(), sampling: Sampling::new(p.reach * p.r0, p.cells) };
    let run = decay_iterate(&VarifoldSource::Generated(spec), &DVector::from_vec(z), &m0, l, steps, p)?;
    Ok((run, extract_jet(&g, x, l)?))
}
