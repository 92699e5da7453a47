//! Mean curvature of normal graphs Gamma_f = {x + f(x)} over M, the
//! linearization H ~ L_M f, and Newton's method for the minimal surface system.

use crate::error::{LabError, Result};
use crate::grid::{fd_gradient, fd_hessian, Grid};
use crate::jacobi::{apply_jacobi, NormalSection, SectionOperator, SurfaceGrid};
use crate::linalg::{solve_refined, BandMatrix};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

/// Tangent vectors w_i = d_i(X + f) and second derivatives d_ij(X + f) at an
/// interior node, with derivatives of f from central differences.
fn graph_jet(geo: &SurfaceGrid, f: &[f64], node: usize) -> (DMatrix<f64>, Vec<DVector<f64>>) {
    let d = geo.dim();
    let m = geo.grid.m;
    let loc = &geo.local[node];
    let gr = fd_gradient(&geo.grid, f, d, node);
    let he = fd_hessian(&geo.grid, f, d, node);
    let w = DMatrix::from_fn(d, m, |c, i| loc.tangents[(c, i)] + gr[i][c]);
    let a = (0..m * m).map(|ij| &loc.d2x[ij] + DVector::from_column_slice(&he[ij])).collect();
    (w, a)
}

fn mean_curvature_from(w: &DMatrix<f64>, a: &[DVector<f64>]) -> Result<DVector<f64>> {
    let m = w.ncols();
    let g = w.transpose() * w;
    let sv = g.clone().symmetric_eigenvalues();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    if lo <= 0.0 || hi / lo > 1e6 {
        return Err(LabError::IllConditioned(if lo > 0.0 { hi / lo } else { f64::INFINITY }));
    }
    let gi = g.try_inverse().ok_or(LabError::IllConditioned(f64::INFINITY))?;
    let mut v = DVector::zeros(w.nrows());
    for i in 0..m {
        for j in 0..m {
            v.axpy(gi[(i, j)], &a[i * m + j], 1.0);
        }
    }
    // H = V - w G^-1 w^T V
    let t = w * (&gi * (w.transpose() * &v));
    Ok(v - t)
}

/// H_{Gamma_f}(x + f(x)) at an interior node.
pub fn graph_mean_curvature(f: &NormalSection, node: usize) -> Result<DVector<f64>> {
    if f.geo.grid.is_boundary(node) {
        return Err(LabError::Invalid("mean curvature needs an interior node".into()));
    }
    let (w, a) = graph_jet(&f.geo, &f.values, node);
    mean_curvature_from(&w, &a)
}

/// H on every interior node (zero vectors on the boundary ring), flat.
pub fn mean_curvature_field(geo: &SurfaceGrid, values: &[f64]) -> Result<Vec<f64>> {
    let d = geo.dim();
    let interior = geo.grid.interior();
    let rows: Vec<DVector<f64>> = interior
        .par_iter()
        .map(|&k| {
            let (w, a) = graph_jet(geo, values, k);
            mean_curvature_from(&w, &a)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; geo.grid.len() * d];
    for (&k, h) in interior.iter().zip(rows) {
        out[k * d..(k + 1) * d].copy_from_slice(h.as_slice());
    }
    Ok(out)
}

fn node_sup(values: &[f64], d: usize, nodes: &[usize]) -> f64 {
    nodes
        .iter()
        .map(|&k| values[k * d..(k + 1) * d].iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Hoelder quotient [u]_{1/2} of a flat field over node pairs separated by
/// dyadic multiples of h along each axis, restricted to `nodes`.
pub fn holder_half(grid: &Grid, values: &[f64], dim: usize, nodes: &[usize]) -> f64 {
    let mut inside = vec![false; grid.len()];
    for &k in nodes {
        inside[k] = true;
    }
    let h = grid.h();
    let mut q: f64 = 0.0;
    let mut s = 1usize;
    while s < grid.n {
        for &k in nodes {
            for axis in 0..grid.m {
                let mut off = vec![0i64; grid.m];
                off[axis] = s as i64;
                if let Some(j) = grid.shift(k, &off) {
                    if inside[j] {
                        let diff: f64 = (0..dim)
                            .map(|c| (values[k * dim + c] - values[j * dim + c]).powi(2))
                            .sum::<f64>()
                            .sqrt();
                        q = q.max(diff / (s as f64 * h).sqrt());
                    }
                }
            }
        }
        s *= 2;
    }
    q
}

/// Discrete C^{2,1/2} proxy: max(sup|f|, sup|Df|, sup|D^2 f|) + [D^2 f]_{1/2}.
pub fn c2_half_norm(f: &NormalSection) -> f64 {
    let geo = &f.geo;
    let d = geo.dim();
    let m = geo.grid.m;
    let interior = geo.grid.interior();
    let mut d1: f64 = 0.0;
    let mut d2: f64 = 0.0;
    let mut hess = vec![0.0; geo.grid.len() * d * m * m];
    for &k in &interior {
        let g = fd_gradient(&geo.grid, &f.values, d, k);
        d1 = d1.max(g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt());
        let h = fd_hessian(&geo.grid, &f.values, d, k);
        d2 = d2.max(h.iter().flatten().map(|v| v * v).sum::<f64>().sqrt());
        for (ij, v) in h.iter().enumerate() {
            hess[(k * m * m + ij) * d..(k * m * m + ij + 1) * d].copy_from_slice(v);
        }
    }
    let sup = f.sup();
    sup.max(d1).max(d2) + holder_half(&geo.grid, &hess, d * m * m, &interior)
}

fn require_minimal(geo: &SurfaceGrid) -> Result<()> {
    let worst = geo.local.iter().map(|l| l.mean_curvature().norm()).fold(0.0, f64::max);
    if worst > 1e-8 {
        return Err(LabError::Invalid(format!("surface is not minimal: sup|H_M| = {worst:e}")));
    }
    Ok(())
}

/// sup |H_{Gamma_f} - L_M f| + its Hoelder-1/2 quotient, over interior nodes.
pub fn linearization_residual(f: &NormalSection) -> Result<f64> {
    let geo = &f.geo;
    require_minimal(geo)?;
    let d = geo.dim();
    let h = mean_curvature_field(geo, &f.values)?;
    let lf = apply_jacobi(f)?;
    let r: Vec<f64> = h.iter().zip(&lf.values).map(|(a, b)| a - b).collect();
    let interior = geo.grid.interior();
    Ok(node_sup(&r, d, &interior) + holder_half(&geo.grid, &r, d, &interior))
}

#[derive(Clone, Debug)]
pub struct DivergenceReport {
    /// R per node (zero on the boundary ring)
    pub field: Vec<f64>,
    pub sup: f64,
    /// sup|R| / sup(|D phi| (delta0 |f| + |Df|)^2)
    pub ratio: f64,
}

/// R = Div_{Gamma_f}(phi o p)(x + f(x)) - (Df : D phi - 2 II_f : II_phi).
pub fn divergence_expansion_residual(f: &NormalSection, phi: &NormalSection, delta0: f64) -> Result<DivergenceReport> {
    let geo = &f.geo;
    let d = geo.dim();
    let m = geo.grid.m;
    let mut field = vec![0.0; geo.grid.len()];
    let mut denom: f64 = 0.0;
    for k in geo.grid.interior() {
        let loc = &geo.local[k];
        let (w, _) = graph_jet(geo, &f.values, k);
        let g = w.transpose() * &w;
        let sv = g.clone().symmetric_eigenvalues();
        let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        if lo <= 0.0 || hi / lo > 1e6 {
            return Err(LabError::IllConditioned(hi / lo));
        }
        let gi = g.try_inverse().unwrap();
        let dphi = fd_gradient(&geo.grid, &phi.values, d, k);
        let df = fd_gradient(&geo.grid, &f.values, d, k);
        let mut div = 0.0;
        let mut dd = 0.0;
        for i in 0..m {
            for j in 0..m {
                let wi_dphij: f64 = (0..d).map(|c| w[(c, i)] * dphi[j][c]).sum();
                div += gi[(i, j)] * wi_dphij;
                let dfi_dphij: f64 = (0..d).map(|c| df[i][c] * dphi[j][c]).sum();
                dd += loc.metric_inv[(i, j)] * dfi_dphij;
            }
        }
        let r = div - (dd - 2.0 * geo.curvature_pairing(k, f.at(k), phi.at(k)));
        field[k] = r;
        let ndphi = dphi.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let ndf = df.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        denom = denom.max(ndphi * (delta0 * f.node_norm(k) + ndf).powi(2));
    }
    let sup = field.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let ratio = if denom > 0.0 { sup / denom } else if sup == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(DivergenceReport { field, sup, ratio })
}

/// Per interior node: (|Df|^2, delta0^2 |f|^2 + |T_xM - T Gamma_f|^2).
pub fn gradient_tilt_bound_check(f: &NormalSection, delta0: f64) -> Result<(Vec<(f64, f64)>, f64)> {
    let geo = &f.geo;
    let d = geo.dim();
    let m = geo.grid.m;
    let mut out = Vec::new();
    let mut c: f64 = 0.0;
    for k in geo.grid.interior() {
        let loc = &geo.local[k];
        let (w, _) = graph_jet(geo, &f.values, k);
        let g = w.transpose() * &w;
        let gi = g.try_inverse().ok_or(LabError::IllConditioned(f64::INFINITY))?;
        let pg = &w * gi * w.transpose();
        let tilt = (pg - loc.frame.tangent_projector()).norm_squared();
        let df = fd_gradient(&geo.grid, &f.values, d, k);
        let mut lhs = 0.0;
        for i in 0..m {
            for j in 0..m {
                lhs += loc.metric_inv[(i, j)] * (0..d).map(|cc| df[i][cc] * df[j][cc]).sum::<f64>();
            }
        }
        let rhs = delta0 * delta0 * f.node_norm(k).powi(2) + tilt;
        if rhs > 0.0 {
            c = c.max(lhs / rhs);
        } else if lhs > 1e-24 {
            c = f64::INFINITY;
        }
        out.push((lhs, rhs));
    }
    Ok((out, c))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NewtonMode {
    /// Jacobian of the discrete system re-assembled at every iterate.
    Full,
    /// L_M assembled once at f = 0 (a chord method).
    Frozen,
}

#[derive(Clone, Debug)]
pub struct MssOptions {
    pub mode: NewtonMode,
    pub max_iters: usize,
    /// stop once sup|H| falls below this
    pub tol: f64,
    /// accept the result when sup|H| is below this after max_iters
    pub accept: f64,
}

impl Default for MssOptions {
    fn default() -> Self {
        MssOptions { mode: NewtonMode::Full, max_iters: 10, tol: 1e-12, accept: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct MssReport {
    pub iterations: usize,
    /// sup|H| before each Newton step and after the last one
    pub residuals: Vec<f64>,
    pub h_ext: NormalSection,
    /// c2_half_norm(f' - h_ext)
    pub ext_distance: f64,
}

impl MssReport {
    pub fn residual(&self) -> f64 {
        *self.residuals.last().unwrap()
    }
}

pub fn solve_mss(h: &NormalSection) -> Result<(NormalSection, MssReport)> {
    solve_mss_with(h, None, &MssOptions::default())
}

/// Solves H_{Gamma_f} = 0 with f = h on the boundary ring, starting from the
/// Jacobi-field extension of h or from `start`.
pub fn solve_mss_with(h: &NormalSection, start: Option<&NormalSection>, opts: &MssOptions) -> Result<(NormalSection, MssReport)> {
    let geo = h.geo.clone();
    let op = SectionOperator::new(&geo)?;
    let (h_ext, _) = op.dirichlet(h)?;
    let mut f = match start {
        Some(s) => {
            let mut s = s.clone();
            let d = geo.dim();
            for k in geo.grid.boundary() {
                s.values[k * d..(k + 1) * d].copy_from_slice(h.at(k));
            }
            s
        }
        None => h_ext.clone(),
    };
    let interior = geo.grid.interior();
    let n = geo.n();
    let d = geo.dim();
    let mut residuals = Vec::new();
    let mut iterations = 0;
    loop {
        let hv = mean_curvature_field(&geo, &f.values)?;
        let res = node_sup(&hv, d, &interior);
        residuals.push(res);
        if !res.is_finite() || (residuals.len() > 1 && res > 1e3 * residuals[0].max(1e-12)) {
            return Err(LabError::NoConvergence { iterations, residual: res });
        }
        if res <= opts.tol {
            break;
        }
        if iterations == opts.max_iters {
            if res <= opts.accept {
                break;
            }
            return Err(LabError::NoConvergence { iterations, residual: res });
        }
        let rhs: Vec<f64> = interior
            .iter()
            .flat_map(|&k| {
                let nu = &geo.local[k].frame.normal;
                let hv = &hv;
                (0..n).map(move |b| -(0..d).map(|c| nu[(c, b)] * hv[k * d + c]).sum::<f64>())
            })
            .collect();
        let delta = match opts.mode {
            NewtonMode::Frozen => solve_refined(&op.matrix, &op_lu(&op)?, &rhs).0,
            NewtonMode::Full => {
                let jac = probe_jacobian(&geo, &f)?;
                let lu = jac.factor()?;
                solve_refined(&jac, &lu, &rhs).0
            }
        };
        let mut coords = f.coord_vec();
        for (i, &k) in interior.iter().enumerate() {
            for a in 0..n {
                coords[k * n + a] += delta[i * n + a];
            }
        }
        let boundary = f.boundary_part();
        let mut next = NormalSection::from_coord_vec(&geo, &coords);
        for k in geo.grid.boundary() {
            next.values[k * d..(k + 1) * d].copy_from_slice(boundary.at(k));
        }
        f = next;
        iterations += 1;
    }
    let ext_distance = c2_half_norm(&f.combine(1.0, &h_ext, -1.0));
    Ok((f, MssReport { iterations, residuals, h_ext, ext_distance }))
}

fn op_lu(op: &SectionOperator) -> Result<crate::linalg::BandLu> {
    op.matrix.factor()
}

/// Jacobian of x -> (nu_b(x) . H(x)) with respect to interior normal
/// coordinates, by coloured central differences.
fn probe_jacobian(geo: &Arc<SurfaceGrid>, f: &NormalSection) -> Result<BandMatrix> {
    let grid = &geo.grid;
    let n = geo.n();
    let d = geo.dim();
    let m = grid.m;
    let interior = grid.interior();
    let mut pos = vec![usize::MAX; grid.len()];
    for (i, &k) in interior.iter().enumerate() {
        pos[k] = i;
    }
    let bw = crate::jacobi::band_width(grid, n);
    let mut jac = BandMatrix::zeros(interior.len() * n, bw, bw);
    let scale = f.sup().max(1e-3);
    let tau = 1e-6 * scale;
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(m as u32))
        .map(|c| {
            let mut o = vec![0i64; m];
            let mut r = c;
            for k in (0..m).rev() {
                o[k] = (r % 3) as i64 - 1;
                r /= 3;
            }
            o
        })
        .collect();
    for colour in 0..grid.colours() {
        for a in 0..n {
            let mut plus = f.values.clone();
            let mut minus = f.values.clone();
            for &k in &interior {
                if grid.colour(k) == colour {
                    let nu = geo.local[k].frame.normal.column(a);
                    for c in 0..d {
                        plus[k * d + c] += tau * nu[c];
                        minus[k * d + c] -= tau * nu[c];
                    }
                }
            }
            let hp = mean_curvature_field(geo, &plus)?;
            let hm = mean_curvature_field(geo, &minus)?;
            for &x in &interior {
                // the unique node of this colour in the 3^m block around x
                let y = offsets
                    .iter()
                    .filter_map(|o| grid.shift(x, o))
                    .find(|&y| grid.colour(y) == colour)
                    .expect("colour present in every stencil block");
                if grid.is_boundary(y) {
                    continue;
                }
                let nu = &geo.local[x].frame.normal;
                for b in 0..n {
                    let v: f64 = (0..d).map(|c| nu[(c, b)] * (hp[x * d + c] - hm[x * d + c])).sum::<f64>() / (2.0 * tau);
                    if v != 0.0 {
                        jac.add(pos[x] * n + b, pos[y] * n + a, v);
                    }
                }
            }
        }
    }
    Ok(jac)
}
