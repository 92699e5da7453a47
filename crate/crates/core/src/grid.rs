//! Tensor grids over chart cubes and their finite-difference stencils.

use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub m: usize,
    /// nodes per axis
    pub n: usize,
    pub center: Vec<f64>,
    pub half_width: f64,
}

impl Grid {
    pub fn new(m: usize, n: usize, center: Vec<f64>, half_width: f64) -> Result<Grid> {
        if n < 8 {
            return Err(LabError::GridTooCoarse(n));
        }
        if center.len() != m {
            return Err(LabError::Dimension("grid center".into()));
        }
        Ok(Grid { m, n, center, half_width })
    }

    pub fn unit(m: usize, n: usize) -> Result<Grid> {
        Grid::new(m, n, vec![0.0; m], 1.0)
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.m as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi(&self, node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.m];
        let mut r = node;
        for k in (0..self.m).rev() {
            idx[k] = r % self.n;
            r /= self.n;
        }
        idx
    }

    pub fn node(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let h = self.h();
        self.multi(node)
            .iter()
            .zip(&self.center)
            .map(|(&i, c)| c - self.half_width + i as f64 * h)
            .collect()
    }

    /// Nodes, ascending, in the index box that contains the ball B_r(node).
    pub fn nodes_near(&self, node: usize, r: f64) -> Vec<usize> {
        let k = (r / self.h() + 1e-9).floor() as usize;
        let c = self.multi(node);
        let lo: Vec<usize> = c.iter().map(|&i| i.saturating_sub(k)).collect();
        let hi: Vec<usize> = c.iter().map(|&i| (i + k).min(self.n - 1)).collect();
        let mut out = Vec::new();
        let mut idx = lo.clone();
        'cells: loop {
            out.push(self.node(&idx));
            for a in (0..self.m).rev() {
                idx[a] += 1;
                if idx[a] <= hi[a] {
                    continue 'cells;
                }
                idx[a] = lo[a];
            }
            break;
        }
        out
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.multi(node).iter().any(|&i| i == 0 || i == self.n - 1)
    }

    pub fn interior(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| !self.is_boundary(k)).collect()
    }

    pub fn boundary(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_boundary(k)).collect()
    }

    /// Node shifted by `off` (per-axis steps), if inside the grid.
    pub fn shift(&self, node: usize, off: &[i64]) -> Option<usize> {
        let mut idx = self.multi(node);
        for (i, o) in idx.iter_mut().zip(off) {
            let v = *i as i64 + o;
            if v < 0 || v >= self.n as i64 {
                return None;
            }
            *i = v as usize;
        }
        Some(self.node(&idx))
    }

    fn step(&self, node: usize, axis: usize, s: i64) -> usize {
        let mut off = vec![0; self.m];
        off[axis] = s;
        self.shift(node, &off).expect("stencil leaves the grid")
    }

    /// Weights of the central first difference along `axis` (interior node).
    pub fn d1(&self, node: usize, axis: usize) -> [(usize, f64); 2] {
        let h = self.h();
        [(self.step(node, axis, 1), 0.5 / h), (self.step(node, axis, -1), -0.5 / h)]
    }

    /// Weights of the central second difference D_ij (interior node).
    pub fn d2(&self, node: usize, i: usize, j: usize) -> Vec<(usize, f64)> {
        let h2 = self.h() * self.h();
        if i == j {
            vec![(self.step(node, i, 1), 1.0 / h2), (node, -2.0 / h2), (self.step(node, i, -1), 1.0 / h2)]
        } else {
            let mut out = Vec::with_capacity(4);
            for (si, sj, w) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                let mut off = vec![0; self.m];
                off[i] = si;
                off[j] = sj;
                out.push((self.shift(node, &off).expect("stencil leaves the grid"), w / (4.0 * h2)));
            }
            out
        }
    }

    /// Colour of a node such that every 3^m stencil block holds each colour once.
    pub fn colour(&self, node: usize) -> usize {
        self.multi(node).iter().fold(0, |acc, &i| acc * 3 + i % 3)
    }

    pub fn colours(&self) -> usize {
        3usize.pow(self.m as u32)
    }

    /// Quadrature weight (tensor trapezoid) of a node.
    pub fn trapezoid(&self, node: usize) -> f64 {
        let h = self.h();
        self.multi(node)
            .iter()
            .map(|&i| if i == 0 || i == self.n - 1 { 0.5 * h } else { h })
            .product()
    }
}

/// FD gradient of a vector field stored flat with `dim` components per
/// node: returns m vectors of length dim.
pub fn fd_gradient(grid: &Grid, values: &[f64], dim: usize, node: usize) -> Vec<Vec<f64>> {
    (0..grid.m)
        .map(|k| {
            let mut v = vec![0.0; dim];
            for (nb, w) in grid.d1(node, k) {
                for c in 0..dim {
                    v[c] += w * values[nb * dim + c];
                }
            }
            v
        })
        .collect()
}

/// FD Hessian (index i*m+j) of a flat vector field at an interior node.
pub fn fd_hessian(grid: &Grid, values: &[f64], dim: usize, node: usize) -> Vec<Vec<f64>> {
    let m = grid.m;
    let mut out = vec![vec![0.0; dim]; m * m];
    for i in 0..m {
        for j in i..m {
            let mut v = vec![0.0; dim];
            for (nb, w) in grid.d2(node, i, j) {
                for c in 0..dim {
                    v[c] += w * values[nb * dim + c];
                }
            }
            out[j * m + i] = v.clone();
            out[i * m + j] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trip() {
        let g = Grid::unit(2, 9).unwrap();
        for k in 0..g.len() {
            assert_eq!(g.node(&g.multi(k)), k);
        }
        assert_eq!(g.coords(0), vec![-1.0, -1.0]);
        assert_eq!(g.coords(g.len() - 1), vec![1.0, 1.0]);
        assert_eq!(g.interior().len(), 49);
        assert!(Grid::unit(1, 7).is_err());
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let g = Grid::unit(2, 11).unwrap();
        let vals: Vec<f64> = (0..g.len())
            .map(|k| {
                let x = g.coords(k);
                x[0] * x[0] + 3.0 * x[0] * x[1] - x[1]
            })
            .collect();
        let node = g.node(&[4, 6]);
        let x = g.coords(node);
        let gr = fd_gradient(&g, &vals, 1, node);
        assert!((gr[0][0] - (2.0 * x[0] + 3.0 * x[1])).abs() < 1e-12);
        assert!((gr[1][0] - (3.0 * x[0] - 1.0)).abs() < 1e-12);
        let he = fd_hessian(&g, &vals, 1, node);
        assert!((he[0][0] - 2.0).abs() < 1e-10 && (he[1][0] - 3.0).abs() < 1e-10 && he[3][0].abs() < 1e-10);
    }
}
