//! Graph surfaces M = {(x, g(x))} in R^{m+n}, their frames and curvature,
//! and m-planes with the Frobenius projector metric.

use crate::chart::{Chart, PolyChart};
use crate::error::{LabError, Result};
use crate::multiindex;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub base: DVector<f64>,
    pub projector: DMatrix<f64>,
    pub dim: usize,
}

impl Plane {
    pub fn from_projector(base: DVector<f64>, projector: DMatrix<f64>) -> Result<Plane> {
        let d = projector.nrows();
        if projector.ncols() != d || base.len() != d {
            return Err(LabError::Dimension("projector must be square and match the base point".into()));
        }
        let sym = (&projector - projector.transpose()).abs().max();
        let idem = (&projector * &projector - &projector).abs().max();
        let tr = projector.trace();
        if sym > 1e-12 || idem > 1e-12 || (tr - tr.round()).abs() > 1e-12 {
            return Err(LabError::InvalidPlane(format!("symmetry {sym:e}, idempotency {idem:e}, trace {tr}")));
        }
        Ok(Plane { base, projector, dim: tr.round() as usize })
    }

    /// Plane through `base` spanned by the columns of `span`.
    pub fn from_span(base: DVector<f64>, span: &DMatrix<f64>) -> Result<Plane> {
        let q = orthonormalize(span)?;
        let projector = &q * q.transpose();
        let dim = q.ncols();
        Ok(Plane { base, projector, dim })
    }

    /// pi_0 = R^m x {0} in R^{m+n}.
    pub fn horizontal(m: usize, n: usize) -> Plane {
        let d = m + n;
        let mut p = DMatrix::zeros(d, d);
        for i in 0..m {
            p[(i, i)] = 1.0;
        }
        Plane { base: DVector::zeros(d), projector: p, dim: m }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient(&self) -> usize {
        self.projector.nrows()
    }

    /// Orthonormal basis of the plane (columns), ordered by eigen-decomposition.
    pub fn basis(&self) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.projector.clone());
        let mut idx: Vec<usize> = (0..self.ambient()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        DMatrix::from_fn(self.ambient(), self.dim, |r, c| eig.eigenvectors[(r, idx[c])])
    }
}

/// Gram-Schmidt on the columns, in order.
pub fn orthonormalize(span: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut q = span.clone();
    for j in 0..q.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let c = q.column(i).dot(&q.column(j));
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-c, &qi, 1.0);
            }
        }
        let nrm = q.column(j).norm();
        if nrm < 1e-14 {
            return Err(LabError::InvalidPlane("spanning vectors are dependent".into()));
        }
        q.column_mut(j).scale_mut(1.0 / nrm);
    }
    Ok(q)
}

pub fn grassmann_dist(p: &Plane, s: &Plane) -> Result<f64> {
    if p.ambient() != s.ambient() {
        return Err(LabError::Dimension("planes live in different ambient spaces".into()));
    }
    if p.dim() != s.dim() {
        return Err(LabError::Dimension(format!("rank {} vs {}", p.dim(), s.dim())));
    }
    Ok((&p.projector - &s.projector).norm())
}

/// Returns (trace of A restricted to span(basis), sum of the k smallest
/// eigenvalues of A).
pub fn trace_restricted_bound(a: &DMatrix<f64>, basis: &DMatrix<f64>) -> Result<(f64, f64)> {
    let scale = a.abs().max().max(1.0);
    let defect = (a - a.transpose()).abs().max();
    if defect > 1e-12 * scale {
        return Err(LabError::NotSymmetric(defect));
    }
    if basis.nrows() != a.nrows() {
        return Err(LabError::Dimension("basis and matrix sizes differ".into()));
    }
    let k = basis.ncols();
    let left = (basis.transpose() * a * basis).trace();
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok((left, ev[..k].iter().sum()))
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub base: DVector<f64>,
    /// d x m, orthonormal columns spanning T_xM
    pub tangent: DMatrix<f64>,
    /// d x n, orthonormal columns spanning the normal space
    pub normal: DMatrix<f64>,
}

impl Frame {
    pub fn tangent_projector(&self) -> DMatrix<f64> {
        &self.tangent * self.tangent.transpose()
    }

    pub fn normal_projector(&self) -> DMatrix<f64> {
        &self.normal * self.normal.transpose()
    }

    pub fn tangent_plane(&self) -> Plane {
        let dim = self.tangent.ncols();
        Plane { base: self.base.clone(), projector: self.tangent_projector(), dim }
    }
}

/// Everything the solvers need at one chart point.
#[derive(Clone, Debug)]
pub struct LocalGeometry {
    pub x: Vec<f64>,
    pub point: DVector<f64>,
    /// Dg, n x m
    pub jac: DMatrix<f64>,
    /// D^2 g per component, each m x m
    pub hess: Vec<DMatrix<f64>>,
    /// chart tangents t_i = (e_i, d_i g), d x m
    pub tangents: DMatrix<f64>,
    pub metric: DMatrix<f64>,
    pub metric_inv: DMatrix<f64>,
    pub frame: Frame,
    /// frame.tangent = tangents * coef
    pub coef: DMatrix<f64>,
    /// d_ij X, full ambient vectors, index i*m + j
    pub d2x: Vec<DVector<f64>>,
    /// normal part of d_ij X
    pub h: Vec<DVector<f64>>,
}

impl LocalGeometry {
    pub fn m(&self) -> usize {
        self.x.len()
    }

    pub fn n(&self) -> usize {
        self.jac.nrows()
    }

    /// II(e_a, e_b) in the orthonormal tangent frame, as ambient vectors.
    pub fn second_form(&self) -> Vec<Vec<DVector<f64>>> {
        let m = self.m();
        let d = self.point.len();
        let mut out = vec![vec![DVector::zeros(d); m]; m];
        for a in 0..m {
            for b in 0..m {
                let mut v = DVector::zeros(d);
                for i in 0..m {
                    for j in 0..m {
                        v.axpy(self.coef[(i, a)] * self.coef[(j, b)], &self.h[i * m + j], 1.0);
                    }
                }
                out[a][b] = v;
            }
        }
        out
    }

    pub fn mean_curvature(&self) -> DVector<f64> {
        let m = self.m();
        let mut hv = DVector::zeros(self.point.len());
        for i in 0..m {
            for j in 0..m {
                hv.axpy(self.metric_inv[(i, j)], &self.h[i * m + j], 1.0);
            }
        }
        hv
    }

    /// II_v(e_a, e_b) = II(e_a, e_b) . v
    pub fn second_form_along(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let ii = self.second_form();
        let m = self.m();
        DMatrix::from_fn(m, m, |a, b| ii[a][b].dot(v))
    }
}

#[derive(Clone, Debug)]
pub struct GraphSurface {
    pub m: usize,
    pub n: usize,
    pub chart: Chart,
    /// half-width of the chart cube around `center`
    pub radius: f64,
    /// base center of the chart domain (R^m)
    pub center: Vec<f64>,
}

impl GraphSurface {
    pub fn new(m: usize, n: usize, chart: Chart, radius: f64) -> Result<Self> {
        let s = GraphSurface { m, n, chart, radius, center: vec![0.0; m] };
        let v = s.chart.derivs(&s.center, 0)?;
        if v.len() != n || v[0].space().m != m {
            return Err(LabError::Dimension(format!("chart does not map R^{m} to R^{n}")));
        }
        Ok(s)
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Self {
        self.center = center;
        self
    }

    pub fn plane(m: usize, n: usize, radius: f64) -> Self {
        GraphSurface { m, n, chart: Chart::zero(m, n), radius, center: vec![0.0; m] }
    }

    pub fn dim(&self) -> usize {
        self.m + self.n
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.center).all(|(xi, c)| (xi - c).abs() <= self.radius * (1.0 + 1e-12))
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.m {
            return Err(LabError::Dimension(format!("chart point has {} coordinates, need {}", x.len(), self.m)));
        }
        if !self.in_domain(x) {
            return Err(LabError::Domain { point: x.to_vec() });
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        self.chart.value(x)
    }

    pub fn point(&self, x: &[f64]) -> Result<DVector<f64>> {
        let g = self.value(x)?;
        Ok(DVector::from_iterator(self.dim(), x.iter().chain(&g).copied()))
    }

    pub fn local(&self, x: &[f64]) -> Result<LocalGeometry> {
        self.check(x)?;
        let (m, n, d) = (self.m, self.n, self.dim());
        let tay = self.chart.derivs(x, 2)?;
        let mut jac = DMatrix::zeros(n, m);
        let mut hess = vec![DMatrix::zeros(m, m); n];
        let mut beta = vec![0usize; m];
        for k in 0..n {
            for i in 0..m {
                beta.iter_mut().for_each(|b| *b = 0);
                beta[i] = 1;
                jac[(k, i)] = tay[k].c[multiindex::position(&beta)];
                for j in 0..m {
                    beta.iter_mut().for_each(|b| *b = 0);
                    beta[i] += 1;
                    beta[j] += 1;
                    hess[k][(i, j)] = tay[k].derivative(&beta);
                }
            }
        }
        let point = DVector::from_iterator(d, x.iter().copied().chain(tay.iter().map(|t| t.value())));
        let mut tangents = DMatrix::zeros(d, m);
        for i in 0..m {
            tangents[(i, i)] = 1.0;
            for k in 0..n {
                tangents[(m + k, i)] = jac[(k, i)];
            }
        }
        let metric = tangents.transpose() * &tangents;
        let metric_inv = metric.clone().try_inverse().ok_or_else(|| LabError::Singular("chart metric".into()))?;
        let etan = orthonormalize(&tangents)?;
        // coef solves tangents * coef = etan; tangents has full column rank
        let coef = &metric_inv * tangents.transpose() * &etan;
        let mut cols = DMatrix::zeros(d, m + n);
        cols.columns_mut(0, m).copy_from(&etan);
        for k in 0..n {
            cols[(m + k, m + k)] = 1.0;
        }
        let full = orthonormalize(&cols)?;
        let normal = full.columns(m, n).into_owned();
        let nproj = &normal * normal.transpose();
        let mut d2x = Vec::with_capacity(m * m);
        let mut h = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let mut v = DVector::zeros(d);
                for k in 0..n {
                    v[m + k] = hess[k][(i, j)];
                }
                h.push(&nproj * &v);
                d2x.push(v);
            }
        }
        Ok(LocalGeometry {
            x: x.to_vec(),
            point: point.clone(),
            jac,
            hess,
            tangents,
            metric,
            metric_inv,
            frame: Frame { base: point, tangent: etan, normal },
            coef,
            d2x,
            h,
        })
    }

    pub fn frame(&self, x: &[f64]) -> Result<Frame> {
        Ok(self.local(x)?.frame)
    }

    /// II(e_i, e_j) . e_{m+k} as nested [i][j][k].
    pub fn second_fundamental_form(&self, x: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
        let loc = self.local(x)?;
        let ii = loc.second_form();
        Ok(ii
            .iter()
            .map(|row| row.iter().map(|v| (0..self.n).map(|k| v.dot(&loc.frame.normal.column(k))).collect()).collect())
            .collect())
    }

    pub fn mean_curvature(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.local(x)?.mean_curvature())
    }

    /// sup over a grid on B_r(center) of r^-1|g| + |Dg| + r|D^2 g| (Frobenius norms).
    pub fn flatness(&self, r: f64) -> Result<f64> {
        self.flatness_with(r, 64)
    }

    pub fn flatness_with(&self, r: f64, subdivisions: usize) -> Result<f64> {
        if r > self.radius * (1.0 + 1e-12) {
            return Err(LabError::Domain { point: vec![r] });
        }
        let step = r / subdivisions as f64;
        let k = subdivisions as i64;
        let mut best: f64 = 0.0;
        let mut idx = vec![-k; self.m];
        loop {
            let off: Vec<f64> = idx.iter().map(|&i| i as f64 * step).collect();
            if off.iter().map(|v| v * v).sum::<f64>() <= r * r * (1.0 + 1e-12) {
                let x: Vec<f64> = off.iter().zip(&self.center).map(|(o, c)| o + c).collect();
                let tay = self.chart.derivs(&x, 2)?;
                let (mut g2, mut d1, mut d2) = (0.0, 0.0, 0.0);
                for t in &tay {
                    g2 += t.c[0] * t.c[0];
                    for p in t.space().block(1) {
                        d1 += t.c[p] * t.c[p];
                    }
                    for (p, beta) in t.space().index.iter().enumerate() {
                        if multiindex::degree(beta) == 2 {
                            // each mixed partial appears twice in the Frobenius sum
                            let dv = t.c[p] * multiindex::factorial(beta);
                            let mult = if beta.iter().any(|&b| b == 2) { 1.0 } else { 2.0 };
                            d2 += mult * dv * dv;
                        }
                    }
                }
                best = best.max(g2.sqrt() / r + d1.sqrt() + r * d2.sqrt());
            }
            let mut i = 0;
            loop {
                if i == self.m {
                    return Ok(best);
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

    /// The same surface seen in coordinates (z - (x0, y0)) / r.
    pub fn rescaled(&self, x0: &[f64], y0: &[f64], r: f64) -> GraphSurface {
        GraphSurface {
            m: self.m,
            n: self.n,
            chart: self.chart.rescaled(x0, y0, r),
            radius: self.radius / r,
            center: self.center.iter().zip(x0).map(|(c, x)| (c - x) / r).collect(),
        }
    }

    pub fn to_spec(&self) -> Option<SurfaceSpec> {
        let center = Some(self.center.clone()).filter(|c| c.iter().any(|v| *v != 0.0));
        match &self.chart {
            Chart::Polynomial(p) => Some(SurfaceSpec::CustomCoefficients {
                m: self.m,
                n: self.n,
                radius: self.radius,
                center,
                poly_center: p.center.clone(),
                scale: p.scale,
                coefficients: p.dense(p.degree()),
            }),
            Chart::Cap { radius } if self.m == 1 => Some(SurfaceSpec::CircleCap { radius: self.radius, curvature_radius: *radius }),
            Chart::Cap { radius } if self.m == 2 => Some(SurfaceSpec::SphereCap { radius: self.radius, curvature_radius: *radius }),
            Chart::Scherk { a } => Some(SurfaceSpec::Scherk { radius: self.radius, a: *a }),
            Chart::Gaussian { center, width, amplitude } => Some(SurfaceSpec::Gaussian {
                m: self.m,
                radius: self.radius,
                bump_center: center.clone(),
                width: *width,
                amplitude: *amplitude,
            }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub exponents: Vec<usize>,
    pub coeffs: Vec<f64>,
}

/// Declarative surface description used by configs and the text format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurfaceSpec {
    Polynomial {
        m: usize,
        n: usize,
        radius: f64,
        #[serde(default)]
        terms: Vec<TermSpec>,
    },
    CircleCap {
        radius: f64,
        curvature_radius: f64,
    },
    SphereCap {
        radius: f64,
        curvature_radius: f64,
    },
    CustomCoefficients {
        m: usize,
        n: usize,
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        poly_center: Vec<f64>,
        scale: f64,
        /// graded-lex order, one n-vector per multi-index
        coefficients: Vec<Vec<f64>>,
    },
    Scherk {
        radius: f64,
        a: f64,
    },
    /// amplitude * exp(-|x - bump_center|^2 / width^2), n = 1
    Gaussian {
        m: usize,
        radius: f64,
        bump_center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<GraphSurface> {
        match self {
            SurfaceSpec::Polynomial { m, n, radius, terms } => {
                let mut p = PolyChart::new(*m, *n);
                for t in terms {
                    if t.exponents.len() != *m || t.coeffs.len() != *n {
                        return Err(LabError::Invalid(format!("term {:?} does not fit m={m}, n={n}", t.exponents)));
                    }
                    p = p.with_term(&t.exponents, &t.coeffs);
                }
                GraphSurface::new(*m, *n, Chart::Polynomial(p), *radius)
            }
            SurfaceSpec::CircleCap { radius, curvature_radius } => {
                if radius >= curvature_radius {
                    return Err(LabError::Invalid("cap chart must stay inside the circle".into()));
                }
                GraphSurface::new(1, 1, Chart::Cap { radius: *curvature_radius }, *radius)
            }
            SurfaceSpec::SphereCap { radius, curvature_radius } => {
                if radius * 2f64.sqrt() >= *curvature_radius {
                    return Err(LabError::Invalid("cap chart must stay inside the sphere".into()));
                }
                GraphSurface::new(2, 1, Chart::Cap { radius: *curvature_radius }, *radius)
            }
            SurfaceSpec::CustomCoefficients { m, n, radius, center, poly_center, scale, coefficients } => {
                if poly_center.len() != *m || coefficients.iter().any(|c| c.len() != *n) {
                    return Err(LabError::Invalid("coefficient table does not fit (m, n)".into()));
                }
                let p = PolyChart::from_dense(*m, *n, poly_center.clone(), *scale, coefficients);
                let s = GraphSurface::new(*m, *n, Chart::Polynomial(p), *radius)?;
                Ok(match center {
                    Some(c) => s.with_center(c.clone()),
                    None => s,
                })
            }
            SurfaceSpec::Scherk { radius, a } => {
                if a * radius * 2f64.sqrt() >= std::f64::consts::FRAC_PI_2 {
                    return Err(LabError::Invalid("Scherk chart leaves its fundamental square".into()));
                }
                GraphSurface::new(2, 1, Chart::Scherk { a: *a }, *radius)
            }
            SurfaceSpec::Gaussian { m, radius, bump_center, width, amplitude } => {
                if bump_center.len() != *m || !(*width > 0.0) {
                    return Err(LabError::Invalid("gaussian bump needs an m-vector center and positive width".into()));
                }
                GraphSurface::new(*m, 1, Chart::Gaussian { center: bump_center.clone(), width: *width, amplitude: *amplitude }, *radius)
            }
        }
    }

    /// Line-oriented `key = value` text.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        match self {
            SurfaceSpec::Polynomial { m, n, radius, terms } => {
                s += &format!("kind = polynomial\nm = {m}\nn = {n}\nradius = {radius:?}\n");
                for t in terms {
                    let e: Vec<String> = t.exponents.iter().map(|v| v.to_string()).collect();
                    s += &format!("term = {} : {}\n", e.join(" "), join(&t.coeffs));
                }
            }
            SurfaceSpec::CircleCap { radius, curvature_radius } => {
                s += &format!("kind = circle-cap\nm = 1\nn = 1\nradius = {radius:?}\ncurvature_radius = {curvature_radius:?}\n");
            }
            SurfaceSpec::SphereCap { radius, curvature_radius } => {
                s += &format!("kind = sphere-cap\nm = 2\nn = 1\nradius = {radius:?}\ncurvature_radius = {curvature_radius:?}\n");
            }
            SurfaceSpec::CustomCoefficients { m, n, radius, center, poly_center, scale, coefficients } => {
                s += &format!("kind = custom-coefficients\nm = {m}\nn = {n}\nradius = {radius:?}\n");
                if let Some(c) = center {
                    s += &format!("center = {}\n", join(c));
                }
                s += &format!("poly_center = {}\nscale = {scale:?}\n", join(poly_center));
                let flat: Vec<f64> = coefficients.iter().flatten().copied().collect();
                s += &format!("coefficients = {}\n", join(&flat));
            }
            SurfaceSpec::Scherk { radius, a } => {
                s += &format!("kind = scherk\nm = 2\nn = 1\nradius = {radius:?}\na = {a:?}\n");
            }
            SurfaceSpec::Gaussian { m, radius, bump_center, width, amplitude } => {
                s += &format!("kind = gaussian\nm = {m}\nn = 1\nradius = {radius:?}\nbump_center = {}\n", join(bump_center));
                s += &format!("width = {width:?}\namplitude = {amplitude:?}\n");
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<SurfaceSpec> {
        let mut kv: Vec<(usize, String, String)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LabError::Parse { line: i + 1, msg: "expected key = value".into() })?;
            kv.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let get = |key: &str| kv.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_str()));
        let num = |key: &str| -> Result<f64> {
            let (l, v) = get(key).ok_or_else(|| LabError::Parse { line: 0, msg: format!("missing `{key}`") })?;
            v.parse().map_err(|_| LabError::Parse { line: l, msg: format!("bad number for `{key}`") })
        };
        let nums = |l: usize, v: &str| -> Result<Vec<f64>> {
            v.split_whitespace()
                .map(|t| t.parse().map_err(|_| LabError::Parse { line: l, msg: format!("bad number `{t}`") }))
                .collect()
        };
        let kind = get("kind").ok_or_else(|| LabError::Parse { line: 0, msg: "missing `kind`".into() })?.1;
        let m = num("m")? as usize;
        let n = num("n")? as usize;
        let radius = num("radius")?;
        Ok(match kind {
            "polynomial" => {
                let mut terms = Vec::new();
                for (l, k, v) in &kv {
                    if k == "term" {
                        let (e, c) = v.split_once(':').ok_or_else(|| LabError::Parse { line: *l, msg: "term needs `:`".into() })?;
                        let exponents = nums(*l, e)?.into_iter().map(|x| x as usize).collect();
                        terms.push(TermSpec { exponents, coeffs: nums(*l, c)? });
                    }
                }
                SurfaceSpec::Polynomial { m, n, radius, terms }
            }
            "circle-cap" => SurfaceSpec::CircleCap { radius, curvature_radius: num("curvature_radius")? },
            "sphere-cap" => SurfaceSpec::SphereCap { radius, curvature_radius: num("curvature_radius")? },
            "scherk" => SurfaceSpec::Scherk { radius, a: num("a")? },
            "gaussian" => {
                let (l, c) = get("bump_center").ok_or_else(|| LabError::Parse { line: 0, msg: "missing `bump_center`".into() })?;
                SurfaceSpec::Gaussian { m, radius, bump_center: nums(l, c)?, width: num("width")?, amplitude: num("amplitude")? }
            }
            "custom-coefficients" => {
                let center = match get("center") {
                    Some((l, v)) => Some(nums(l, v)?),
                    None => None,
                };
                let (l, pc) = get("poly_center").ok_or_else(|| LabError::Parse { line: 0, msg: "missing `poly_center`".into() })?;
                let poly_center = nums(l, pc)?;
                let (l, cv) = get("coefficients").ok_or_else(|| LabError::Parse { line: 0, msg: "missing `coefficients`".into() })?;
                let flat = nums(l, cv)?;
                if n == 0 || flat.len() % n != 0 {
                    return Err(LabError::Parse { line: l, msg: "coefficient count is not a multiple of n".into() });
                }
                let coefficients = flat.chunks(n).map(|c| c.to_vec()).collect();
                SurfaceSpec::CustomCoefficients { m, n, radius, center, poly_center, scale: num("scale")?, coefficients }
            }
            other => return Err(LabError::Parse { line: get("kind").unwrap().0, msg: format!("unknown kind `{other}`") }),
        })
    }
}
