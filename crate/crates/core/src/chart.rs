//! Chart evaluators g: R^m -> R^n. Every chart reports its local Taylor
//! expansion, so callers read values and derivatives of any order from one
//! call.

use crate::error::{LabError, Result};
use crate::multiindex::{self, MultiIndex};
use crate::taylor::{space, Taylor};
use std::fmt;
use std::sync::Arc;

/// Sum of c_beta * ((x - center)/scale)^beta, one coefficient vector per
/// term (length n).
#[derive(Clone, Debug, PartialEq)]
pub struct PolyChart {
    pub m: usize,
    pub n: usize,
    pub center: Vec<f64>,
    pub scale: f64,
    pub terms: Vec<(MultiIndex, Vec<f64>)>,
}

impl PolyChart {
    pub fn new(m: usize, n: usize) -> Self {
        PolyChart { m, n, center: vec![0.0; m], scale: 1.0, terms: Vec::new() }
    }

    pub fn with_term(mut self, beta: &[usize], coeff: &[f64]) -> Self {
        assert_eq!(beta.len(), self.m);
        assert_eq!(coeff.len(), self.n);
        self.terms.push((beta.to_vec(), coeff.to_vec()));
        self
    }

    /// y = A x + b with A given row-major as n x m.
    pub fn affine(m: usize, n: usize, a: &[f64], b: &[f64]) -> Self {
        let mut p = PolyChart::new(m, n);
        p.terms.push((vec![0; m], b.to_vec()));
        for i in 0..m {
            let mut beta = vec![0; m];
            beta[i] = 1;
            p.terms.push((beta, (0..n).map(|k| a[k * m + i]).collect()));
        }
        p
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|(b, _)| multiindex::degree(b)).max().unwrap_or(0)
    }

    /// Dense coefficient table in graded-lex order up to `degree`.
    pub fn dense(&self, degree: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; multiindex::count(self.m, degree)];
        for (b, c) in &self.terms {
            if multiindex::degree(b) <= degree {
                let p = multiindex::position(b);
                for k in 0..self.n {
                    out[p][k] += c[k];
                }
            }
        }
        out
    }

    pub fn from_dense(m: usize, n: usize, center: Vec<f64>, scale: f64, coeffs: &[Vec<f64>]) -> Self {
        let degree = (0..).find(|&d| multiindex::count(m, d) >= coeffs.len()).unwrap();
        let idx = multiindex::graded_lex(m, degree);
        let terms = idx.into_iter().zip(coeffs.iter().cloned()).collect();
        PolyChart { m, n, center, scale, terms }
    }

    fn derivs(&self, x: &[f64], order: usize) -> Vec<Taylor> {
        let sp = space(self.m, order);
        let deg = self.degree();
        let mut powers: Vec<Vec<Taylor>> = Vec::with_capacity(self.m);
        for i in 0..self.m {
            let u = Taylor::var(sp, i, x[i]).add_const(-self.center[i]).scale(1.0 / self.scale);
            let mut row = vec![Taylor::constant(sp, 1.0)];
            for k in 1..=deg {
                let next = row[k - 1].mul_ref(&u);
                row.push(next);
            }
            powers.push(row);
        }
        let mut out = vec![Taylor::constant(sp, 0.0); self.n];
        for (beta, coeff) in &self.terms {
            let mut mono = powers[0][beta[0]].clone();
            for i in 1..self.m {
                if beta[i] > 0 {
                    mono = mono.mul_ref(&powers[i][beta[i]]);
                }
            }
            for k in 0..self.n {
                if coeff[k] != 0.0 {
                    for (o, v) in out[k].c.iter_mut().zip(&mono.c) {
                        *o += coeff[k] * v;
                    }
                }
            }
        }
        out
    }
}

pub type SampledFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A chart known only through values; derivatives come from central
/// finite differences.
#[derive(Clone)]
pub struct SampledChart {
    pub m: usize,
    pub n: usize,
    pub f: SampledFn,
}

impl fmt::Debug for SampledChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SampledChart(m={}, n={})", self.m, self.n)
    }
}

// 1-D central stencils (offset, weight), scaled by h^-k.
fn stencil(k: usize, high: bool) -> &'static [(i32, f64)] {
    match (k, high) {
        (0, _) => &[(0, 1.0)],
        (1, false) => &[(-1, -0.5), (1, 0.5)],
        (2, false) => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        (1, true) => &[(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)],
        (2, true) => &[(-2, -1.0 / 12.0), (-1, 16.0 / 12.0), (0, -30.0 / 12.0), (1, 16.0 / 12.0), (2, -1.0 / 12.0)],
        (3, _) => &[
            (-3, 1.0 / 8.0),
            (-2, -1.0),
            (-1, 13.0 / 8.0),
            (1, -13.0 / 8.0),
            (2, 1.0),
            (3, -1.0 / 8.0),
        ],
        (4, _) => &[
            (-3, -1.0 / 6.0),
            (-2, 2.0),
            (-1, -6.5),
            (0, 28.0 / 3.0),
            (1, -6.5),
            (2, 2.0),
            (3, -1.0 / 6.0),
        ],
        _ => &[],
    }
}

impl SampledChart {
    fn derivs(&self, x: &[f64], order: usize) -> Result<Vec<Taylor>> {
        if order > 4 {
            return Err(LabError::Unsupported(format!("derivatives of order {order} from a sampled chart")));
        }
        let sp = space(self.m, order);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut out = vec![Taylor::constant(sp, 0.0); self.n];
        for (pos, beta) in sp.index.iter().enumerate() {
            let d = multiindex::degree(beta);
            let high = d >= 3;
            let h = if high { 2e-3 } else { 1e-5 } * (1.0 + norm);
            // tensor product of 1-D stencils
            let mut pts: Vec<(Vec<f64>, f64)> = vec![(x.to_vec(), 1.0)];
            for (i, &b) in beta.iter().enumerate() {
                let st = stencil(b, high);
                let mut next = Vec::with_capacity(pts.len() * st.len());
                for (p, w) in &pts {
                    for &(off, sw) in st {
                        let mut q = p.clone();
                        q[i] += off as f64 * h;
                        next.push((q, w * sw / h.powi(b as i32)));
                    }
                }
                pts = next;
            }
            let mut acc = vec![0.0; self.n];
            for (p, w) in &pts {
                let v = (self.f)(p);
                for k in 0..self.n {
                    acc[k] += w * v[k];
                }
            }
            let fact = multiindex::factorial(beta);
            for k in 0..self.n {
                out[k].c[pos] = acc[k] / fact;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub enum Chart {
    Polynomial(PolyChart),
    /// Lower cap of the sphere of radius R touching the origin:
    /// g(x) = R - sqrt(R^2 - |x|^2), n = 1.
    Cap { radius: f64 },
    /// Scherk's surface g(x1, x2) = ln(cos(a x2) / cos(a x1)) / a, m = 2, n = 1.
    Scherk { a: f64 },
    /// a exp(-|x - c|^2 / w^2), n = 1.
    Gaussian { center: Vec<f64>, width: f64, amplitude: f64 },
    /// (inner(x0 + r xi) - y0) / r
    Rescaled { inner: Box<Chart>, x0: Vec<f64>, y0: Vec<f64>, r: f64 },
    Sum(Vec<Chart>),
    Sampled(SampledChart),
}

impl Chart {
    pub fn zero(m: usize, n: usize) -> Chart {
        Chart::Polynomial(PolyChart::new(m, n))
    }

    pub fn is_sampled(&self) -> bool {
        match self {
            Chart::Sampled(_) => true,
            Chart::Rescaled { inner, .. } => inner.is_sampled(),
            Chart::Sum(v) => v.iter().any(|c| c.is_sampled()),
            _ => false,
        }
    }

    /// Taylor expansion of every output component at x up to `order`.
    pub fn derivs(&self, x: &[f64], order: usize) -> Result<Vec<Taylor>> {
        match self {
            Chart::Polynomial(p) => Ok(p.derivs(x, order)),
            Chart::Cap { radius } => {
                let sp = space(x.len(), order);
                let mut r2 = Taylor::constant(sp, radius * radius);
                for (i, &xi) in x.iter().enumerate() {
                    let v = Taylor::var(sp, i, xi);
                    r2 = &r2 - &v.mul_ref(&v);
                }
                if r2.value() <= 0.0 {
                    return Err(LabError::Domain { point: x.to_vec() });
                }
                Ok(vec![(&r2.sqrt()).scale(-1.0).add_const(*radius)])
            }
            Chart::Scherk { a } => {
                let sp = space(2, order);
                let c1 = Taylor::var(sp, 0, x[0]).scale(*a).cos();
                let c2 = Taylor::var(sp, 1, x[1]).scale(*a).cos();
                if c1.value() <= 0.0 || c2.value() <= 0.0 {
                    return Err(LabError::Domain { point: x.to_vec() });
                }
                Ok(vec![(&c2.ln() - &c1.ln()).scale(1.0 / a)])
            }
            Chart::Gaussian { center, width, amplitude } => {
                let sp = space(x.len(), order);
                let mut q = Taylor::constant(sp, 0.0);
                for (i, (&xi, c)) in x.iter().zip(center).enumerate() {
                    let u = Taylor::var(sp, i, xi).add_const(-c);
                    q = &q + &u.mul_ref(&u);
                }
                Ok(vec![q.scale(-1.0 / (width * width)).exp().scale(*amplitude)])
            }
            Chart::Rescaled { inner, x0, y0, r } => {
                let xs: Vec<f64> = x.iter().zip(x0).map(|(xi, c)| c + r * xi).collect();
                let mut out = inner.derivs(&xs, order)?;
                let sp = space(x.len(), order);
                for (k, t) in out.iter_mut().enumerate() {
                    for d in 0..=order {
                        let f = r.powi(d as i32 - 1);
                        for p in sp.block(d) {
                            t.c[p] *= f;
                        }
                    }
                    t.c[0] -= y0[k] / r;
                }
                Ok(out)
            }
            Chart::Sum(parts) => {
                let mut acc: Option<Vec<Taylor>> = None;
                for p in parts {
                    let d = p.derivs(x, order)?;
                    acc = Some(match acc {
                        None => d,
                        Some(a) => a.iter().zip(&d).map(|(u, v)| u + v).collect(),
                    });
                }
                acc.ok_or_else(|| LabError::Empty("sum chart".into()))
            }
            Chart::Sampled(s) => s.derivs(x, order),
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.derivs(x, 0)?.iter().map(|t| t.value()).collect())
    }

    /// g~(xi) = (g(x0 + r xi) - y0) / r, exact for polynomials.
    pub fn rescaled(&self, x0: &[f64], y0: &[f64], r: f64) -> Chart {
        match self {
            Chart::Polynomial(p) => {
                let mut q = p.clone();
                q.center = p.center.iter().zip(x0).map(|(c, x)| (c - x) / r).collect();
                q.scale = p.scale / r;
                for (_, c) in q.terms.iter_mut() {
                    for v in c.iter_mut() {
                        *v /= r;
                    }
                }
                let zero = vec![0; p.m];
                q.terms.push((zero, y0.iter().map(|v| -v / r).collect()));
                Chart::Polynomial(q)
            }
            _ => Chart::Rescaled { inner: Box::new(self.clone()), x0: x0.to_vec(), y0: y0.to_vec(), r },
        }
    }
}
