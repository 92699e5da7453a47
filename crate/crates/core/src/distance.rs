//! Closest-point projection onto a graph surface and the calculus of d_M.

use crate::error::{LabError, Result};
use crate::surface::{grassmann_dist, trace_restricted_bound, GraphSurface, Plane};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

#[derive(Clone, Debug)]
pub struct ProjectionResult {
    pub query: DVector<f64>,
    pub foot: DVector<f64>,
    /// chart coordinates of the foot
    pub x: Vec<f64>,
    pub dist: f64,
    pub normal_dir: Option<DVector<f64>>,
    pub newton_iters: usize,
    pub residual: f64,
}

const MAX_ITERS: usize = 50;

pub fn closest_point(surface: &GraphSurface, z: &DVector<f64>) -> Result<ProjectionResult> {
    closest_point_from(surface, z, &z.as_slice()[..surface.m])
}

/// Newton on the first-order condition t_i . (X(x) - z) = 0, started at `x0`.
pub fn closest_point_from(surface: &GraphSurface, z: &DVector<f64>, x0: &[f64]) -> Result<ProjectionResult> {
    let (m, n) = (surface.m, surface.n);
    if z.len() != m + n {
        return Err(LabError::Dimension(format!("query has {} coordinates, need {}", z.len(), m + n)));
    }
    let mut x = x0.to_vec();
    let scale = 1.0 + z.norm();
    let mut grad = DVector::zeros(m);
    let mut hess = DMatrix::zeros(m, m);
    let mut residual = f64::INFINITY;
    for it in 0..=MAX_ITERS {
        let tay = surface.chart.derivs(&x, 2)?;
        let sp = tay[0].space();
        let r: Vec<f64> = (0..m + n)
            .map(|k| if k < m { x[k] - z[k] } else { tay[k - m].c[0] - z[k] })
            .collect();
        // first derivatives of g sit at slots 1..=m, second at the degree-2 block
        for i in 0..m {
            let mut gi = r[i];
            for k in 0..n {
                gi += tay[k].c[1 + i] * r[m + k];
            }
            grad[i] = gi;
        }
        for (p, beta) in sp.index.iter().enumerate().skip(1 + m) {
            let (i, j) = pair(beta);
            let fact = if i == j { 2.0 } else { 1.0 };
            let mut v = 0.0;
            for k in 0..n {
                v += fact * tay[k].c[p] * r[m + k];
            }
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
        for i in 0..m {
            for j in 0..m {
                let mut tt = if i == j { 1.0 } else { 0.0 };
                for k in 0..n {
                    tt += tay[k].c[1 + i] * tay[k].c[1 + j];
                }
                hess[(i, j)] += tt;
            }
        }
        residual = grad.norm();
        if residual <= 1e-14 * scale || it == MAX_ITERS {
            if residual > 1e-12 * scale {
                return Err(LabError::NoConvergence { iterations: it, residual });
            }
            if !surface.in_domain(&x) {
                return Err(LabError::BoundaryHit { foot: x });
            }
            let foot = DVector::from_iterator(m + n, x.iter().copied().chain(tay.iter().map(|t| t.c[0])));
            let diff = z - &foot;
            let dist = diff.norm();
            let normal_dir = if dist > 0.0 { Some(diff / dist) } else { None };
            return Ok(ProjectionResult { query: z.clone(), foot, x, dist, normal_dir, newton_iters: it, residual });
        }
        let step = hess
            .clone()
            .lu()
            .solve(&(-&grad))
            .ok_or_else(|| LabError::NoConvergence { iterations: it, residual })?;
        for i in 0..m {
            x[i] += step[i];
        }
        if step.norm() <= 1e-16 * scale {
            // stalled at round-off: accept if the residual is small enough
            if residual <= 1e-12 * scale {
                continue;
            }
        }
    }
    Err(LabError::NoConvergence { iterations: MAX_ITERS, residual })
}

fn pair(beta: &[usize]) -> (usize, usize) {
    let mut idx = Vec::with_capacity(2);
    for (i, &b) in beta.iter().enumerate() {
        for _ in 0..b {
            idx.push(i);
        }
    }
    (idx[0], idx[1])
}

pub fn dist(surface: &GraphSurface, z: &DVector<f64>) -> Result<f64> {
    Ok(closest_point(surface, z)?.dist)
}

/// Dp(z) = E (Id - II_{z-p})^{-1} E^T with E the tangent frame at p(z).
pub fn projection_jacobian(surface: &GraphSurface, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    let pr = closest_point(surface, z)?;
    let loc = surface.local(&pr.x)?;
    let s = loc.second_form_along(&(z - &pr.foot));
    let eig = SymmetricEigen::new(s.clone());
    if eig.eigenvalues.iter().any(|&k| k >= 1.0 - 1e-12) {
        return Err(LabError::Singular(format!("Id - II has eigenvalue {:e}", 1.0 - eig.eigenvalues.max())));
    }
    let m = surface.m;
    let a = DMatrix::<f64>::identity(m, m) - s;
    let inv = a.try_inverse().ok_or_else(|| LabError::Singular("Id - II".into()))?;
    let e = &loc.frame.tangent;
    Ok(e * inv * e.transpose())
}

/// D^2(d^2/2) = Id - Dp.
pub fn sq_dist_hessian(surface: &GraphSurface, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    let dp = projection_jacobian(surface, z)?;
    let d = dp.nrows();
    let h = DMatrix::<f64>::identity(d, d) - dp;
    Ok((&h + h.transpose()) * 0.5)
}

/// Principal curvatures kappa_j of II along (z - p(z))/d, ascending; empty
/// when z lies on M.
pub fn principal_curvatures(surface: &GraphSurface, z: &DVector<f64>) -> Result<(f64, Vec<f64>)> {
    let pr = closest_point(surface, z)?;
    let Some(nu) = pr.normal_dir.clone() else {
        return Ok((0.0, vec![]));
    };
    let loc = surface.local(&pr.x)?;
    let eig = SymmetricEigen::new(loc.second_form_along(&nu));
    let mut k: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    k.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((pr.dist, k))
}

#[derive(Clone, Copy, Debug)]
pub struct InequalitySides {
    pub lhs: f64,
    pub rhs: f64,
}

/// trace_L D^2(d^2/2) + delta^2 d^2 against |L - T_pM|^2 / 4, with delta
/// the flatness of M over its unit ball.
pub fn elliptic_inequality_check(surface: &GraphSurface, z: &DVector<f64>, l: &Plane) -> Result<InequalitySides> {
    let delta = surface.flatness(surface.radius.min(1.0))?;
    elliptic_inequality_check_with(surface, z, l, delta)
}

pub fn elliptic_inequality_check_with(surface: &GraphSurface, z: &DVector<f64>, l: &Plane, delta: f64) -> Result<InequalitySides> {
    let pr = closest_point(surface, z)?;
    let hess = sq_dist_hessian(surface, z)?;
    let (tr, _) = trace_restricted_bound(&hess, &l.basis())?;
    let tp = surface.local(&pr.x)?.frame.tangent_plane();
    let g = grassmann_dist(l, &tp)?;
    Ok(InequalitySides { lhs: tr + delta * delta * pr.dist * pr.dist, rhs: 0.25 * g * g })
}

/// A section over M given in normal-frame coordinates: f(x) = sum_a c_a(x) nu_a(x).
pub struct NormalGraph<'a> {
    pub surface: &'a GraphSurface,
    pub coords: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync + 'a>,
}

impl<'a> NormalGraph<'a> {
    pub fn new(surface: &'a GraphSurface, coords: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'a) -> Self {
        NormalGraph { surface, coords: Box::new(coords) }
    }

    pub fn section(&self, x: &[f64]) -> Result<DVector<f64>> {
        let loc = self.surface.local(x)?;
        Ok(&loc.frame.normal * DVector::from_vec((self.coords)(x)))
    }

    pub fn graph_point(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.surface.point(x)? + self.section(x)?)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LipGraphBounds {
    pub graph_dist: f64,
    pub offset: f64,
}

/// Returns (d_Gamma(z), |z - p(z) - f(p(z))|); d_Gamma by grid search over
/// the chart domain followed by a shrinking pattern search.
pub fn lip_graph_bounds(f: &NormalGraph, z: &DVector<f64>, samples: usize) -> Result<LipGraphBounds> {
    let s = f.surface;
    let m = s.m;
    let k = samples.max(2);
    let h = 2.0 * s.radius / (k - 1) as f64;
    let mut idx = vec![0usize; m];
    let mut best = (f64::INFINITY, vec![0.0; m]);
    let mut lip: f64 = 0.0;
    let node = |idx: &[usize]| -> Vec<f64> { idx.iter().zip(&s.center).map(|(&i, c)| c - s.radius + i as f64 * h).collect() };
    loop {
        let x = node(&idx);
        let c = (f.coords)(&x);
        let dz = (z - f.graph_point(&x)?).norm();
        if dz < best.0 {
            best = (dz, x.clone());
        }
        for i in 0..m {
            if idx[i] + 1 < k {
                let mut j = idx.clone();
                j[i] += 1;
                let cy = (f.coords)(&node(&j));
                let d: f64 = c.iter().zip(&cy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                lip = lip.max(d / h);
            }
        }
        let mut i = 0;
        loop {
            if i == m {
                break;
            }
            idx[i] += 1;
            if idx[i] < k {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
        if i == m {
            break;
        }
    }
    if lip > 1.0 + 1e-9 {
        return Err(LabError::LipschitzViolation(lip));
    }
    // pattern search refinement
    let (mut bd, mut bx) = best;
    let mut step = h;
    while step > 1e-10 * s.radius {
        let mut improved = false;
        for i in 0..m {
            for sgn in [-1.0, 1.0] {
                let mut y = bx.clone();
                y[i] += sgn * step;
                if !s.in_domain(&y) {
                    continue;
                }
                let d = (z - f.graph_point(&y)?).norm();
                if d < bd {
                    bd = d;
                    bx = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let pr = closest_point(s, z)?;
    let offset = (z - &pr.foot - f.section(&pr.x)?).norm();
    Ok(LipGraphBounds { graph_dist: bd, offset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::SurfaceSpec;

    fn circle() -> GraphSurface {
        SurfaceSpec::CircleCap { radius: 0.6, curvature_radius: 1.0 }.build().unwrap()
    }

    #[test]
    fn plane_projection() {
        let p = GraphSurface::plane(2, 1, 2.0);
        let z = DVector::from_vec(vec![0.3, -0.4, 0.7]);
        let r = closest_point(&p, &z).unwrap();
        assert_eq!(r.foot.as_slice(), &[0.3, -0.4, 0.0]);
        assert_eq!(r.dist, 0.7);
        let dp = projection_jacobian(&p, &z).unwrap();
        let mut want = DMatrix::zeros(3, 3);
        want[(0, 0)] = 1.0;
        want[(1, 1)] = 1.0;
        assert!((dp - want).abs().max() < 1e-15);
    }

    #[test]
    fn circle_axis() {
        let r = closest_point(&circle(), &DVector::from_vec(vec![0.0, 0.3])).unwrap();
        assert!(r.foot.norm() < 1e-15);
        assert!((r.dist - 0.3).abs() < 1e-15);
    }

    #[test]
    fn tilted_line_elliptic_example() {
        let th: f64 = 0.3;
        let m = GraphSurface::plane(1, 1, 2.0);
        let l = Plane::from_span(DVector::zeros(2), &DMatrix::from_column_slice(2, 1, &[th.cos(), th.sin()])).unwrap();
        let s = elliptic_inequality_check(&m, &DVector::from_vec(vec![0.2, 0.5]), &l).unwrap();
        assert!((s.lhs - th.sin().powi(2)).abs() < 1e-14);
        assert!((s.rhs - 0.5 * th.sin().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn lipschitz_violation_detected() {
        let p = GraphSurface::plane(1, 1, 1.0);
        let f = NormalGraph::new(&p, |x: &[f64]| vec![2.0 * x[0]]);
        assert!(matches!(lip_graph_bounds(&f, &DVector::from_vec(vec![0.0, 0.5]), 41), Err(LabError::LipschitzViolation(_))));
    }
}
