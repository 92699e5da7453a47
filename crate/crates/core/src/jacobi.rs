//! Normal sections on a chart grid and the Jacobi operator
//! L_M f = (Delta_M f)^perp + 2 II_f : II with its Dirichlet and source solvers.

use crate::error::{LabError, Result};
use crate::grid::{fd_gradient, Grid};
use crate::linalg::{solve_refined, BandLu, BandMatrix};
use crate::surface::{GraphSurface, LocalGeometry};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

/// A surface together with its geometry cached on every grid node.
#[derive(Debug)]
pub struct SurfaceGrid {
    pub surface: GraphSurface,
    pub grid: Grid,
    pub local: Vec<LocalGeometry>,
    /// b^k = G^ij Gamma^k_ij, the first-order part of Delta_M
    drift: Vec<Vec<f64>>,
}

impl SurfaceGrid {
    pub fn new(surface: GraphSurface, grid: Grid) -> Result<Arc<SurfaceGrid>> {
        if grid.m != surface.m {
            return Err(LabError::Dimension("grid and surface dimensions differ".into()));
        }
        let local: Vec<LocalGeometry> = (0..grid.len())
            .into_par_iter()
            .map(|k| surface.local(&grid.coords(k)))
            .collect::<Result<_>>()?;
        let m = surface.m;
        let drift = local
            .iter()
            .map(|loc| {
                let mut v0 = DVector::zeros(surface.dim());
                for i in 0..m {
                    for j in 0..m {
                        v0.axpy(loc.metric_inv[(i, j)], &loc.d2x[i * m + j], 1.0);
                    }
                }
                let b = &loc.metric_inv * loc.tangents.transpose() * v0;
                b.iter().copied().collect()
            })
            .collect();
        Ok(Arc::new(SurfaceGrid { surface, grid, local, drift }))
    }

    pub fn dim(&self) -> usize {
        self.surface.dim()
    }

    pub fn n(&self) -> usize {
        self.surface.n
    }

    /// Scalar Laplace-Beltrami stencil at an interior node.
    pub fn lb_weights(&self, node: usize) -> Vec<(usize, f64)> {
        let m = self.grid.m;
        let loc = &self.local[node];
        let mut w: Vec<(usize, f64)> = Vec::with_capacity(3usize.pow(m as u32) + 2 * m);
        let mut push = |k: usize, v: f64| {
            if let Some(e) = w.iter_mut().find(|e| e.0 == k) {
                e.1 += v;
            } else {
                w.push((k, v));
            }
        };
        for i in 0..m {
            for j in 0..m {
                for (k, v) in self.grid.d2(node, i, j) {
                    push(k, loc.metric_inv[(i, j)] * v);
                }
            }
            for (k, v) in self.grid.d1(node, i) {
                push(k, -self.drift[node][i] * v);
            }
        }
        w
    }

    /// Area element sqrt(det G) times the trapezoid weight.
    pub fn area_weight(&self, node: usize) -> f64 {
        self.local[node].metric.determinant().sqrt() * self.grid.trapezoid(node)
    }

    /// (G^-1 T G^-1) contracted with h: 2 II_v : II as an ambient vector,
    /// where T_ij = h_ij . v.
    pub fn curvature_term(&self, node: usize, v: &[f64]) -> DVector<f64> {
        let loc = &self.local[node];
        let m = self.grid.m;
        let vv = DVector::from_column_slice(v);
        let t = DMatrix::from_fn(m, m, |i, j| loc.h[i * m + j].dot(&vv));
        let s = &loc.metric_inv * t * &loc.metric_inv;
        let mut out = DVector::zeros(self.dim());
        for k in 0..m {
            for l in 0..m {
                out.axpy(2.0 * s[(k, l)], &loc.h[k * m + l], 1.0);
            }
        }
        out
    }

    /// II_f : II_g at a node for two ambient vectors.
    pub fn curvature_pairing(&self, node: usize, f: &[f64], g: &[f64]) -> f64 {
        let loc = &self.local[node];
        let m = self.grid.m;
        let fv = DVector::from_column_slice(f);
        let gv = DVector::from_column_slice(g);
        let tf = DMatrix::from_fn(m, m, |i, j| loc.h[i * m + j].dot(&fv));
        let tg = DMatrix::from_fn(m, m, |i, j| loc.h[i * m + j].dot(&gv));
        (&loc.metric_inv * tf * &loc.metric_inv).component_mul(&tg).sum()
    }
}

#[derive(Clone, Debug)]
pub struct NormalSection {
    pub geo: Arc<SurfaceGrid>,
    /// ambient values, `dim` per node
    pub values: Vec<f64>,
}

impl NormalSection {
    pub fn zeros(geo: &Arc<SurfaceGrid>) -> Self {
        NormalSection { geo: geo.clone(), values: vec![0.0; geo.grid.len() * geo.dim()] }
    }

    /// Ambient values from a closure, projected onto the normal spaces.
    pub fn from_ambient(geo: &Arc<SurfaceGrid>, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let d = geo.dim();
        let mut values = Vec::with_capacity(geo.grid.len() * d);
        for k in 0..geo.grid.len() {
            let v = DVector::from_vec(f(&geo.grid.coords(k)));
            let p = geo.local[k].frame.normal_projector() * v;
            values.extend(p.iter());
        }
        NormalSection { geo: geo.clone(), values }
    }

    /// f(x) = sum_a c_a(x) nu_a(x).
    pub fn from_normal_coords(geo: &Arc<SurfaceGrid>, c: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let d = geo.dim();
        let mut values = Vec::with_capacity(geo.grid.len() * d);
        for k in 0..geo.grid.len() {
            let cv = DVector::from_vec(c(&geo.grid.coords(k)));
            values.extend((&geo.local[k].frame.normal * cv).iter());
        }
        NormalSection { geo: geo.clone(), values }
    }

    pub fn from_coord_vec(geo: &Arc<SurfaceGrid>, coords: &[f64]) -> Self {
        let n = geo.n();
        let d = geo.dim();
        let mut values = vec![0.0; geo.grid.len() * d];
        for k in 0..geo.grid.len() {
            let nu = &geo.local[k].frame.normal;
            for a in 0..n {
                for c in 0..d {
                    values[k * d + c] += coords[k * n + a] * nu[(c, a)];
                }
            }
        }
        NormalSection { geo: geo.clone(), values }
    }

    pub fn dim(&self) -> usize {
        self.geo.dim()
    }

    pub fn at(&self, node: usize) -> &[f64] {
        let d = self.dim();
        &self.values[node * d..(node + 1) * d]
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let nu = &self.geo.local[node].frame.normal;
        let v = self.at(node);
        (0..self.geo.n()).map(|a| (0..v.len()).map(|c| nu[(c, a)] * v[c]).sum()).collect()
    }

    pub fn coord_vec(&self) -> Vec<f64> {
        (0..self.geo.grid.len()).flat_map(|k| self.coords(k)).collect()
    }

    pub fn normality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.geo.grid.len() {
            let t = &self.geo.local[k].frame.tangent;
            let v = DVector::from_column_slice(self.at(k));
            worst = worst.max((t.transpose() * v).amax());
        }
        worst
    }

    pub fn node_norm(&self, node: usize) -> f64 {
        self.at(node).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sup(&self) -> f64 {
        (0..self.geo.grid.len()).map(|k| self.node_norm(k)).fold(0.0, f64::max)
    }

    pub fn sup_interior(&self) -> f64 {
        self.geo.grid.interior().into_iter().map(|k| self.node_norm(k)).fold(0.0, f64::max)
    }

    pub fn sup_boundary(&self) -> f64 {
        self.geo.grid.boundary().into_iter().map(|k| self.node_norm(k)).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        NormalSection { geo: self.geo.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn combine(&self, a: f64, other: &NormalSection, b: f64) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        NormalSection { geo: self.geo.clone(), values }
    }

    /// Copy with interior values zeroed (keeps boundary data).
    pub fn boundary_part(&self) -> Self {
        let mut out = self.clone();
        let d = self.dim();
        for k in self.geo.grid.interior() {
            out.values[k * d..(k + 1) * d].iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }

    /// sup|f| + sup|Df| with Df from central differences on interior nodes.
    pub fn c1_norm(&self) -> f64 {
        let d = self.dim();
        let mut g: f64 = 0.0;
        for k in self.geo.grid.interior() {
            let gr = fd_gradient(&self.geo.grid, &self.values, d, k);
            let s: f64 = gr.iter().flatten().map(|v| v * v).sum();
            g = g.max(s.sqrt());
        }
        self.sup() + g
    }

    /// sum over interior nodes of f . g with the area weight.
    pub fn pairing(&self, other: &NormalSection) -> f64 {
        self.geo
            .grid
            .interior()
            .into_iter()
            .map(|k| self.at(k).iter().zip(other.at(k)).map(|(a, b)| a * b).sum::<f64>() * self.geo.area_weight(k))
            .sum()
    }
}

/// Half bandwidth of interior unknowns in lexicographic order.
pub fn band_width(grid: &Grid, n: usize) -> usize {
    let inner = grid.n - 2;
    let span: usize = (0..grid.m).map(|k| inner.pow(k as u32)).sum();
    span * n + n - 1
}

fn check_grid(geo: &SurfaceGrid) -> Result<()> {
    if geo.grid.n < 8 {
        return Err(LabError::GridTooCoarse(geo.grid.n));
    }
    Ok(())
}

/// L_M f on interior nodes; boundary nodes carry zero.
pub fn apply_jacobi(f: &NormalSection) -> Result<NormalSection> {
    let geo = &f.geo;
    check_grid(geo)?;
    let d = geo.dim();
    let mut out = NormalSection::zeros(geo);
    let rows: Vec<(usize, DVector<f64>)> = geo
        .grid
        .interior()
        .into_par_iter()
        .map(|k| {
            let mut acc = DVector::zeros(d);
            for (nb, w) in geo.lb_weights(k) {
                acc.axpy(w, &DVector::from_column_slice(f.at(nb)), 1.0);
            }
            let v = geo.local[k].frame.normal_projector() * acc + geo.curvature_term(k, f.at(k));
            (k, v)
        })
        .collect();
    for (k, v) in rows {
        out.values[k * d..(k + 1) * d].copy_from_slice(v.as_slice());
    }
    Ok(out)
}

/// Assembled L_M on the interior unknowns (normal-frame coordinates).
#[derive(Debug)]
pub struct SectionOperator {
    pub geo: Arc<SurfaceGrid>,
    pub matrix: BandMatrix,
    lu: BandLu,
    interior: Vec<usize>,
    /// boundary couplings per interior row: (boundary node, weight)
    boundary_links: Vec<Vec<(usize, f64)>>,
}

impl SectionOperator {
    pub fn new(geo: &Arc<SurfaceGrid>) -> Result<Self> {
        check_grid(geo)?;
        let grid = &geo.grid;
        let n = geo.n();
        let interior = grid.interior();
        let mut pos = vec![usize::MAX; grid.len()];
        for (i, &k) in interior.iter().enumerate() {
            pos[k] = i;
        }
        let bw = band_width(grid, n);
        let mut a = BandMatrix::zeros(interior.len() * n, bw, bw);
        let rows: Vec<(Vec<(usize, usize, f64)>, Vec<(usize, f64)>)> = interior
            .par_iter()
            .map(|&k| {
                let loc = &geo.local[k];
                let mut entries = Vec::new();
                let mut links = Vec::new();
                let r0 = pos[k] * n;
                for (nb, w) in geo.lb_weights(k) {
                    if grid.is_boundary(nb) {
                        links.push((nb, w));
                        continue;
                    }
                    let nu_y = &geo.local[nb].frame.normal;
                    let c0 = pos[nb] * n;
                    for b in 0..n {
                        for a2 in 0..n {
                            let v = w * loc.frame.normal.column(b).dot(&nu_y.column(a2));
                            entries.push((r0 + b, c0 + a2, v));
                        }
                    }
                }
                for a2 in 0..n {
                    let term = geo.curvature_term(k, loc.frame.normal.column(a2).as_slice());
                    for b in 0..n {
                        entries.push((r0 + b, r0 + a2, term.dot(&loc.frame.normal.column(b))));
                    }
                }
                (entries, links)
            })
            .collect();
        let mut boundary_links = Vec::with_capacity(interior.len());
        for (entries, links) in rows {
            for (i, j, v) in entries {
                a.add(i, j, v);
            }
            boundary_links.push(links);
        }
        let lu = a.factor()?;
        Ok(SectionOperator { geo: geo.clone(), matrix: a, lu, interior, boundary_links })
    }

    fn solve_coords(&self, rhs: &[f64]) -> (Vec<f64>, f64) {
        solve_refined(&self.matrix, &self.lu, rhs)
    }

    fn assemble_section(&self, boundary: Option<&NormalSection>, u: &[f64]) -> NormalSection {
        let geo = &self.geo;
        let d = geo.dim();
        let n = geo.n();
        let mut out = match boundary {
            Some(b) => b.boundary_part(),
            None => NormalSection::zeros(geo),
        };
        for (i, &k) in self.interior.iter().enumerate() {
            let nu = &geo.local[k].frame.normal;
            for c in 0..d {
                out.values[k * d + c] = (0..n).map(|a| u[i * n + a] * nu[(c, a)]).sum();
            }
        }
        out
    }

    /// L_M w = 0 inside, w = v on the boundary ring.
    pub fn dirichlet(&self, v: &NormalSection) -> Result<(NormalSection, SolveReport)> {
        let geo = &self.geo;
        let n = geo.n();
        let mut rhs = vec![0.0; self.interior.len() * n];
        for (i, &k) in self.interior.iter().enumerate() {
            let nu = &geo.local[k].frame.normal;
            for &(nb, w) in &self.boundary_links[i] {
                let vb = v.at(nb);
                for b in 0..n {
                    let dot: f64 = (0..vb.len()).map(|c| nu[(c, b)] * vb[c]).sum();
                    rhs[i * n + b] -= w * dot;
                }
            }
        }
        let (u, residual) = self.solve_coords(&rhs);
        let w = self.assemble_section(Some(v), &u);
        let sb = v.sup_boundary();
        let ratio = if sb > 0.0 { w.sup() / sb } else { 0.0 };
        Ok((w, SolveReport { residual, ratio }))
    }

    /// L_M u = f inside, u = 0 on the boundary ring.
    pub fn source(&self, f: &NormalSection) -> Result<(NormalSection, SolveReport)> {
        let n = self.geo.n();
        let mut rhs = vec![0.0; self.interior.len() * n];
        for (i, &k) in self.interior.iter().enumerate() {
            let c = f.coords(k);
            rhs[i * n..(i + 1) * n].copy_from_slice(&c);
        }
        let (u, residual) = self.solve_coords(&rhs);
        let sol = self.assemble_section(None, &u);
        let fs = f.sup_interior();
        let ratio = if fs > 0.0 { sol.c1_norm() / fs } else { 0.0 };
        Ok((sol, SolveReport { residual, ratio }))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveReport {
    /// sup-norm residual of the discrete system
    pub residual: f64,
    /// Dirichlet: sup|w| / sup_boundary|v|. Source: ||u||_C1 / sup|f|.
    pub ratio: f64,
}

pub fn dirichlet_solve(v: &NormalSection) -> Result<(NormalSection, SolveReport)> {
    SectionOperator::new(&v.geo)?.dirichlet(v)
}

pub fn source_solve(f: &NormalSection) -> Result<(NormalSection, SolveReport)> {
    SectionOperator::new(&f.geo)?.source(f)
}

#[derive(Clone, Copy, Debug)]
pub struct SubsolutionReport {
    pub holds: bool,
    /// min over interior nodes of (Delta_M |w|^2 + c |w|^2)
    pub min_value: f64,
    /// the zeroth-order constant c = C delta_0^2 = 4 sup |II|^2
    pub constant: f64,
}

/// Nodal check of Delta_M |w|^2 + C delta0^2 |w|^2 >= 0 (hat test functions).
pub fn subsolution_check(w: &NormalSection) -> SubsolutionReport {
    let geo = &w.geo;
    let sq: Vec<f64> = (0..geo.grid.len()).map(|k| w.node_norm(k).powi(2)).collect();
    let mut ii2: f64 = 0.0;
    for k in 0..geo.grid.len() {
        let s: f64 = geo.local[k].second_form().iter().flatten().map(|v| v.norm_squared()).sum();
        ii2 = ii2.max(s);
    }
    let c = 4.0 * ii2;
    let mut min_value = f64::INFINITY;
    for k in geo.grid.interior() {
        let lap: f64 = geo.lb_weights(k).iter().map(|&(nb, wt)| wt * sq[nb]).sum();
        min_value = min_value.min(lap + c * sq[k]);
    }
    if !min_value.is_finite() {
        min_value = 0.0;
    }
    SubsolutionReport { holds: min_value >= -1e-8, min_value, constant: c }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(m: usize, n: usize, nodes: usize) -> Arc<SurfaceGrid> {
        SurfaceGrid::new(GraphSurface::plane(m, n, 1.0), Grid::unit(m, nodes).unwrap()).unwrap()
    }

    #[test]
    fn flat_laplacian_of_square() {
        let geo = flat(2, 1, 11);
        let f = NormalSection::from_normal_coords(&geo, |x| vec![x[0] * x[0]]);
        let lf = apply_jacobi(&f).unwrap();
        for k in geo.grid.interior() {
            assert!((lf.at(k)[2] - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn source_solve_parabola() {
        let geo = flat(1, 1, 21);
        let f = NormalSection::from_normal_coords(&geo, |_| vec![1.0]);
        let (u, rep) = source_solve(&f).unwrap();
        assert!(rep.residual < 1e-10);
        for k in 0..geo.grid.len() {
            let x = geo.grid.coords(k)[0];
            assert!((u.at(k)[1] - (x * x - 1.0) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_reproduces_linear() {
        let geo = flat(2, 2, 9);
        let v = NormalSection::from_normal_coords(&geo, |x| vec![1.0 + x[0] - 2.0 * x[1], 0.5 * x[1]]);
        let (w, rep) = dirichlet_solve(&v).unwrap();
        assert!(rep.residual < 1e-12);
        let diff = w.combine(1.0, &v, -1.0).sup();
        assert!(diff < 1e-12, "{diff}");
        assert!(subsolution_check(&w).holds);
    }
}
