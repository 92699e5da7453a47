//! Banded LU with partial pivoting and small least-squares helpers.

use crate::error::{LabError, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals. Storage keeps
/// `kl` extra super-diagonals for fill-in produced by row pivoting.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl, "({i},{j}) outside band");
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            return 0.0;
        }
        self.data[self.slot(i, j)]
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i},{j}) outside the declared band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.data[self.slot(i, j)] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn factor(&self) -> Result<BandLu> {
        let mut a = self.clone();
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a.data[a.slot(k, k)].abs();
            for r in k + 1..=last {
                let v = a.data[a.slot(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= 1e-14 * scale {
                return Err(LabError::Singular(format!("pivot {best:e} at column {k}")));
            }
            piv[k] = p;
            let cmax = (k + ku + kl).min(n - 1);
            if p != k {
                for c in k..=cmax {
                    let (s1, s2) = (a.slot(k, c), a.slot(p, c));
                    a.data.swap(s1, s2);
                }
            }
            let d = a.data[a.slot(k, k)];
            for r in k + 1..=last {
                let sr = a.slot(r, k);
                let l = a.data[sr] / d;
                a.data[sr] = l;
                if l != 0.0 {
                    for c in k + 1..=cmax {
                        let src = a.data[a.slot(k, c)];
                        let dst = a.slot(r, c);
                        a.data[dst] -= l * src;
                    }
                }
            }
        }
        Ok(BandLu { a, piv })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let a = &self.a;
        let n = a.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let last = (k + a.kl).min(n - 1);
            let xk = x[k];
            for r in k + 1..=last {
                x[r] -= a.data[a.slot(r, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + a.ku + a.kl).min(n - 1);
            let mut acc = x[k];
            for c in k + 1..=cmax {
                acc -= a.data[a.slot(k, c)] * x[c];
            }
            x[k] = acc / a.data[a.slot(k, k)];
        }
        x
    }
}

/// Solve with one step of iterative refinement; returns (x, sup residual).
pub fn solve_refined(a: &BandMatrix, lu: &BandLu, b: &[f64]) -> (Vec<f64>, f64) {
    let mut x = lu.solve(b);
    let r: Vec<f64> = a.mul_vec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
    let dx = lu.solve(&r);
    for (xi, d) in x.iter_mut().zip(&dx) {
        *xi += d;
    }
    let res = a.mul_vec(&x).iter().zip(b).fold(0.0f64, |m, (ax, bi)| m.max((bi - ax).abs()));
    (x, res)
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_slope(&lx, &ly)
}

pub fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn band_lu_matches_dense() {
        let n = 40;
        let (kl, ku) = (3, 2);
        let mut b = BandMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::zeros(n, n);
        let mut s = 1u64;
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                // weak diagonal so pivoting actually happens
                let v = ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5 + if i == j { 0.1 } else { 0.0 };
                b.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = b.factor().unwrap().solve(&rhs);
        let want = dense.lu().solve(&DVector::from_vec(rhs)).unwrap();
        for i in 0..n {
            assert!((x[i] - want[i]).abs() < 1e-9 * (1.0 + want[i].abs()));
        }
    }

    #[test]
    fn singular_is_reported() {
        let b = BandMatrix::zeros(5, 1, 1);
        assert!(b.factor().is_err());
    }
}
