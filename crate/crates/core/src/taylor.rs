//! Truncated multivariate Taylor arithmetic. A `Taylor` value stores the
//! coefficients c_beta = D^beta u / beta! of a function of m variables around
//! a fixed point, truncated at a fixed total order. Closed-form charts are
//! written once against this type and get exact derivatives of every order.

use crate::multiindex::{self, MultiIndex};
use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Mutex, OnceLock};

pub struct TaylorSpace {
    pub m: usize,
    pub order: usize,
    pub index: Vec<MultiIndex>,
    products: Vec<(u32, u32, u32)>,
    block_start: Vec<usize>,
}

impl TaylorSpace {
    fn build(m: usize, order: usize) -> Self {
        let index = multiindex::graded_lex(m, order);
        let mut products = Vec::new();
        for (i, a) in index.iter().enumerate() {
            for (j, b) in index.iter().enumerate() {
                if multiindex::degree(a) + multiindex::degree(b) <= order {
                    let s: Vec<usize> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                    products.push((i as u32, j as u32, multiindex::position(&s) as u32));
                }
            }
        }
        let block_start = (0..=order + 1)
            .map(|d| if d == 0 { 0 } else { multiindex::count(m, d - 1) })
            .collect();
        TaylorSpace { m, order, index, products, block_start }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Range of coefficient slots holding total degree d.
    pub fn block(&self, d: usize) -> std::ops::Range<usize> {
        self.block_start[d]..self.block_start[d + 1]
    }
}

pub fn space(m: usize, order: usize) -> &'static TaylorSpace {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), &'static TaylorSpace>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry((m, order))
        .or_insert_with(|| Box::leak(Box::new(TaylorSpace::build(m, order))))
}

#[derive(Clone, Debug)]
pub struct Taylor {
    sp: &'static TaylorSpace,
    pub c: Vec<f64>,
}

impl std::fmt::Debug for TaylorSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TaylorSpace(m={}, order={})", self.m, self.order)
    }
}

impl Taylor {
    pub fn constant(sp: &'static TaylorSpace, v: f64) -> Self {
        let mut c = vec![0.0; sp.len()];
        c[0] = v;
        Taylor { sp, c }
    }

    /// The coordinate function x_i expanded around x_i = at.
    pub fn var(sp: &'static TaylorSpace, i: usize, at: f64) -> Self {
        let mut t = Self::constant(sp, at);
        if sp.order >= 1 {
            t.c[1 + i] = 1.0;
        }
        t
    }

    pub fn space(&self) -> &'static TaylorSpace {
        self.sp
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// D^beta of the expanded function at the expansion point.
    pub fn derivative(&self, beta: &[usize]) -> f64 {
        self.c[multiindex::position(beta)] * multiindex::factorial(beta)
    }

    pub fn scale(&self, s: f64) -> Self {
        Taylor { sp: self.sp, c: self.c.iter().map(|v| v * s).collect() }
    }

    pub fn add_const(&self, s: f64) -> Self {
        let mut r = self.clone();
        r.c[0] += s;
        r
    }

    pub fn mul_ref(&self, o: &Taylor) -> Taylor {
        let mut c = vec![0.0; self.sp.len()];
        for &(i, j, k) in &self.sp.products {
            c[k as usize] += self.c[i as usize] * o.c[j as usize];
        }
        Taylor { sp: self.sp, c }
    }

    pub fn powi(&self, k: usize) -> Taylor {
        let mut r = Taylor::constant(self.sp, 1.0);
        for _ in 0..k {
            r = r.mul_ref(self);
        }
        r
    }

    /// Compose with a univariate function given its scaled derivatives
    /// f^(k)(a)/k! at a = self.value().
    fn compose(&self, coeffs: &[f64]) -> Taylor {
        let mut t = self.clone();
        t.c[0] = 0.0;
        let mut out = Taylor::constant(self.sp, coeffs[0]);
        let mut pw = Taylor::constant(self.sp, 1.0);
        for ck in coeffs.iter().skip(1) {
            pw = pw.mul_ref(&t);
            for (o, p) in out.c.iter_mut().zip(&pw.c) {
                *o += ck * p;
            }
        }
        out
    }

    pub fn recip(&self) -> Taylor {
        let a = self.value();
        let coeffs: Vec<f64> = (0..=self.sp.order).map(|k| (-1f64).powi(k as i32) / a.powi(k as i32 + 1)).collect();
        self.compose(&coeffs)
    }

    pub fn powf(&self, p: f64) -> Taylor {
        let a = self.value();
        let mut coeffs = Vec::with_capacity(self.sp.order + 1);
        let mut binom = 1.0;
        for k in 0..=self.sp.order {
            coeffs.push(binom * a.powf(p - k as f64));
            binom *= (p - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&coeffs)
    }

    pub fn sqrt(&self) -> Taylor {
        self.powf(0.5)
    }

    pub fn ln(&self) -> Taylor {
        let a = self.value();
        let coeffs: Vec<f64> = (0..=self.sp.order)
            .map(|k| {
                if k == 0 {
                    a.ln()
                } else {
                    (-1f64).powi(k as i32 + 1) / (k as f64 * a.powi(k as i32))
                }
            })
            .collect();
        self.compose(&coeffs)
    }

    pub fn exp(&self) -> Taylor {
        let a = self.value().exp();
        let mut coeffs = Vec::with_capacity(self.sp.order + 1);
        let mut fact = 1.0;
        for k in 0..=self.sp.order {
            if k > 0 {
                fact *= k as f64;
            }
            coeffs.push(a / fact);
        }
        self.compose(&coeffs)
    }

    fn trig(&self, phase: f64) -> Taylor {
        let a = self.value();
        let mut coeffs = Vec::with_capacity(self.sp.order + 1);
        let mut fact = 1.0;
        for k in 0..=self.sp.order {
            if k > 0 {
                fact *= k as f64;
            }
            coeffs.push((a + phase + k as f64 * std::f64::consts::FRAC_PI_2).sin() / fact);
        }
        self.compose(&coeffs)
    }

    pub fn sin(&self) -> Taylor {
        self.trig(0.0)
    }

    pub fn cos(&self) -> Taylor {
        self.trig(std::f64::consts::FRAC_PI_2)
    }
}

impl Add for &Taylor {
    type Output = Taylor;
    fn add(self, o: &Taylor) -> Taylor {
        Taylor { sp: self.sp, c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Taylor {
    type Output = Taylor;
    fn sub(self, o: &Taylor) -> Taylor {
        Taylor { sp: self.sp, c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &Taylor {
    type Output = Taylor;
    fn mul(self, o: &Taylor) -> Taylor {
        self.mul_ref(o)
    }
}

impl Neg for &Taylor {
    type Output = Taylor;
    fn neg(self) -> Taylor {
        self.scale(-1.0)
    }
}
