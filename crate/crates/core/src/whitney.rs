//! Jets at scattered points and the classical Whitney extension at a fixed
//! finite degree.

use crate::error::{LabError, Result};
use crate::grid::Grid;
use crate::multiindex::{self, MultiIndex};
use crate::taylor::Taylor;
use rayon::prelude::*;

/// Degree-l polynomial sum_beta c_beta (x - base)^beta with values in R^n;
/// `coeffs` follows graded-lex order.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub base: Vec<f64>,
    pub degree: usize,
    pub n: usize,
    pub coeffs: Vec<Vec<f64>>,
}

impl Jet {
    pub fn zero(base: Vec<f64>, degree: usize, n: usize) -> Jet {
        let count = multiindex::count(base.len(), degree);
        Jet { base, degree, n, coeffs: vec![vec![0.0; n]; count] }
    }

    pub fn new(base: Vec<f64>, degree: usize, coeffs: Vec<Vec<f64>>) -> Result<Jet> {
        let count = multiindex::count(base.len(), degree);
        if coeffs.len() != count {
            return Err(LabError::Dimension(format!("jet of degree {degree} needs {count} coefficients, got {}", coeffs.len())));
        }
        let n = coeffs.first().map_or(0, |c| c.len());
        if n == 0 || coeffs.iter().any(|c| c.len() != n) {
            return Err(LabError::Dimension("jet coefficients of unequal length".into()));
        }
        if coeffs.iter().flatten().chain(&base).any(|v| !v.is_finite()) {
            return Err(LabError::Invalid("non-finite jet entry".into()));
        }
        Ok(Jet { base, degree, n, coeffs })
    }

    /// Jet of the Taylor expansions (one per output component) at `base`.
    pub fn from_taylor(base: Vec<f64>, degree: usize, t: &[Taylor]) -> Result<Jet> {
        let sp = t.first().ok_or_else(|| LabError::Empty("taylor list".into()))?.space();
        if sp.order < degree || sp.m != base.len() {
            return Err(LabError::Dimension(format!("expansion of order {} cannot give a degree-{degree} jet", sp.order)));
        }
        let coeffs = multiindex::graded_lex(base.len(), degree)
            .iter()
            .map(|beta| t.iter().map(|c| c.c[multiindex::position(beta)]).collect())
            .collect();
        Jet::new(base, degree, coeffs)
    }

    pub fn m(&self) -> usize {
        self.base.len()
    }

    pub fn index(&self) -> Vec<MultiIndex> {
        multiindex::graded_lex(self.m(), self.degree)
    }

    pub fn coeff(&self, beta: &[usize]) -> &[f64] {
        &self.coeffs[multiindex::position(beta)]
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.derivative(&vec![0; self.m()], x)
    }

    /// D^alpha p (x).
    pub fn derivative(&self, alpha: &[usize], x: &[f64]) -> Vec<f64> {
        let u: Vec<f64> = x.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        let mut out = vec![0.0; self.n];
        for (beta, c) in self.index().iter().zip(&self.coeffs) {
            if let Some((gamma, f)) = multiindex::differentiate(beta, alpha) {
                let mono = f * multiindex::monomial(&u, &gamma);
                for (o, v) in out.iter_mut().zip(c) {
                    *o += mono * v;
                }
            }
        }
        out
    }

    /// Lower-degree part.
    pub fn truncated(&self, degree: usize) -> Jet {
        let degree = degree.min(self.degree);
        let count = multiindex::count(self.m(), degree);
        Jet { degree, coeffs: self.coeffs[..count].to_vec(), ..self.clone() }
    }

    /// The same polynomial expanded around another base point.
    pub fn recentered(&self, base: &[f64]) -> Jet {
        let coeffs = self
            .index()
            .iter()
            .map(|gamma| self.derivative(gamma, base).into_iter().map(|v| v / multiindex::factorial(gamma)).collect())
            .collect();
        Jet { base: base.to_vec(), degree: self.degree, n: self.n, coeffs }
    }

    /// Largest coefficient difference, per degree block.
    pub fn gap(&self, other: &Jet) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JetField {
    pub m: usize,
    pub n: usize,
    pub degree: usize,
    pub jets: Vec<Jet>,
}

impl JetField {
    pub fn new(jets: Vec<Jet>) -> Result<JetField> {
        let first = jets.first().ok_or_else(|| LabError::Empty("jet field".into()))?;
        let (m, n, degree) = (first.m(), first.n, first.degree);
        if jets.iter().any(|j| j.m() != m || j.n != n || j.degree != degree) {
            return Err(LabError::Dimension("jets of different shapes".into()));
        }
        for i in 0..jets.len() {
            for j in i + 1..jets.len() {
                if dist(&jets[i].base, &jets[j].base) == 0.0 {
                    return Err(LabError::Coincident(i, j));
                }
            }
        }
        Ok(JetField { m, n, degree, jets })
    }

    /// Jets of one function given through its derivatives.
    pub fn sample(bases: &[Vec<f64>], degree: usize, deriv: impl Fn(&[f64], &[usize]) -> Vec<f64>) -> Result<JetField> {
        let jets = bases
            .iter()
            .map(|x| {
                let coeffs = multiindex::graded_lex(x.len(), degree)
                    .iter()
                    .map(|beta| deriv(x, beta).into_iter().map(|v| v / multiindex::factorial(beta)).collect())
                    .collect();
                Jet::new(x.clone(), degree, coeffs)
            })
            .collect::<Result<_>>()?;
        JetField::new(jets)
    }

    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.jets.len() {
            for j in i + 1..self.jets.len() {
                best = best.min(dist(&self.jets[i].base, &self.jets[j].base));
            }
        }
        best
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# jetfield v1\ndims {} {} degree {}\njets {}\n", self.m, self.n, self.degree, self.jets.len());
        for j in &self.jets {
            let nums: Vec<String> = j.base.iter().chain(j.coeffs.iter().flatten()).map(|v| format!("{v:?}")).collect();
            s.push_str(&nums.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<JetField> {
        let err = |line: usize, msg: &str| LabError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "# jetfield v1" => {}
            Some((ln, _)) => return Err(err(ln, "expected '# jetfield v1'")),
            None => return Err(err(1, "empty input")),
        }
        let (ln, dims) = lines.next().ok_or_else(|| err(2, "missing dims"))?;
        let tok: Vec<&str> = dims.split_whitespace().collect();
        if tok.len() != 5 || tok[0] != "dims" || tok[3] != "degree" {
            return Err(err(ln, "expected 'dims m n degree l'"));
        }
        let parse = |t: &str| t.parse::<usize>().map_err(|_| err(ln, "bad integer"));
        let (m, n, degree) = (parse(tok[1])?, parse(tok[2])?, parse(tok[4])?);
        let (ln, count) = lines.next().ok_or_else(|| err(3, "missing jet count"))?;
        let count: usize = count
            .strip_prefix("jets ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| err(ln, "expected 'jets K'"))?;
        let terms = multiindex::count(m, degree);
        let mut jets = Vec::with_capacity(count);
        for (ln, line) in lines {
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| err(ln, &format!("bad number '{t}'"))))
                .collect::<Result<_>>()?;
            if nums.len() != m + terms * n {
                return Err(err(ln, &format!("expected {} numbers, found {}", m + terms * n, nums.len())));
            }
            let coeffs = nums[m..].chunks(n).map(|c| c.to_vec()).collect();
            jets.push(Jet::new(nums[..m].to_vec(), degree, coeffs).map_err(|e| err(ln, &e.to_string()))?);
        }
        if jets.len() != count {
            return Err(err(0, &format!("header announces {count} jets, found {}", jets.len())));
        }
        JetField::new(jets)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
pub struct CompatReport {
    /// max of |D^a p_i(x_j) - D^a p_j(x_j)| (l+1-|a|)! / ((l+1)! |x_i - x_j|^(l+1-|a|)),
    /// i.e. the mismatch in units of a degree-(l+1) Taylor coefficient
    pub ratio: f64,
    /// the same maximum without the factorial normalisation
    pub raw: f64,
    /// (i, j, alpha) attaining `ratio`; derivatives compared at x_j
    pub worst: (usize, usize, MultiIndex),
}

pub fn compat_check(field: &JetField) -> Result<CompatReport> {
    if field.jets.len() < 2 {
        return Err(LabError::Empty("compatibility needs two jets".into()));
    }
    let l = field.degree;
    let alphas = multiindex::graded_lex(field.m, l);
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    let mut rep = CompatReport { ratio: 0.0, raw: 0.0, worst: (0, 1, vec![0; field.m]) };
    for (i, a) in field.jets.iter().enumerate() {
        for (j, b) in field.jets.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = dist(&a.base, &b.base);
            if d == 0.0 {
                return Err(LabError::Coincident(i.min(j), i.max(j)));
            }
            for alpha in &alphas {
                let k = l + 1 - multiindex::degree(alpha);
                let pa = a.derivative(alpha, &b.base);
                let pb = b.derivative(alpha, &b.base);
                let lhs = pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                let raw = lhs / d.powi(k as i32);
                let ratio = raw * fact(k) / fact(l + 1);
                rep.raw = rep.raw.max(raw);
                if ratio > rep.ratio {
                    rep.ratio = ratio;
                    rep.worst = (i, j, alpha.clone());
                }
            }
        }
    }
    Ok(rep)
}

// smooth step: 1 for t <= 0, 0 for t >= 1
fn step(t: f64) -> f64 {
    let e = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let (a, b) = (e(1.0 - t), e(t));
    a / (a + b)
}

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

struct Cube {
    center: Vec<f64>,
    side: f64,
    children: Vec<usize>,
    /// nearest jet for leaves; None for split or discarded cubes
    jet: Option<usize>,
}

struct Decomposition {
    cubes: Vec<Cube>,
    /// separation radius of each jet; F equals the jet on half of it
    rho: Vec<f64>,
}

fn box_dist(c: &[f64], side: f64, x: &[f64]) -> f64 {
    c.iter().zip(x).map(|(ci, xi)| ((xi - ci).abs() - 0.5 * side).max(0.0).powi(2)).sum::<f64>().sqrt()
}

fn box_far(c: &[f64], side: f64, x: &[f64]) -> f64 {
    c.iter().zip(x).map(|(ci, xi)| ((xi - ci).abs() + 0.5 * side).powi(2)).sum::<f64>().sqrt()
}

// expanded cubes overlap by a quarter of the side
const EXPAND: f64 = 1.25;

impl Decomposition {
    fn new(field: &JetField, lo: &[f64], hi: &[f64]) -> Decomposition {
        let m = field.m;
        let bases: Vec<&Vec<f64>> = field.jets.iter().map(|j| &j.base).collect();
        let rho: Vec<f64> = (0..bases.len())
            .map(|i| {
                (0..bases.len()).filter(|&j| j != i).map(|j| 0.5 * dist(bases[i], bases[j])).fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mut lo = lo.to_vec();
        let mut hi = hi.to_vec();
        for b in &bases {
            for k in 0..m {
                lo[k] = lo[k].min(b[k]);
                hi[k] = hi[k].max(b[k]);
            }
        }
        let side = (0..m).map(|k| hi[k] - lo[k]).fold(0.0, f64::max).max(1e-12) * (1.0 + 1e-9);
        let center: Vec<f64> = (0..m).map(|k| 0.5 * (lo[k] + hi[k])).collect();
        let mut dec = Decomposition { cubes: vec![Cube { center, side, children: Vec::new(), jet: None }], rho };
        let mut stack = vec![0];
        while let Some(q) = stack.pop() {
            let (c, s) = (dec.cubes[q].center.clone(), dec.cubes[q].side);
            let inside = bases.iter().zip(&dec.rho).any(|(b, r)| box_far(&c, s, b) <= 0.5 * r);
            if inside {
                continue;
            }
            let d = bases.iter().map(|b| box_dist(&c, s, b)).fold(f64::INFINITY, f64::min);
            if s * (m as f64).sqrt() > d {
                for corner in 0..(1usize << m) {
                    let cc: Vec<f64> =
                        (0..m).map(|k| c[k] + if corner >> k & 1 == 1 { 0.25 * s } else { -0.25 * s }).collect();
                    dec.cubes.push(Cube { center: cc, side: 0.5 * s, children: Vec::new(), jet: None });
                    let id = dec.cubes.len() - 1;
                    dec.cubes[q].children.push(id);
                    stack.push(id);
                }
            } else {
                let near = (0..bases.len())
                    .min_by(|&a, &b| dist(&c, bases[a]).total_cmp(&dist(&c, bases[b])))
                    .unwrap();
                dec.cubes[q].jet = Some(near);
            }
        }
        dec
    }

    fn eval(&self, field: &JetField, x: &[f64]) -> Vec<f64> {
        let n = field.n;
        let mut out = vec![0.0; n];
        let mut inner = 0.0;
        for (j, r) in field.jets.iter().zip(&self.rho) {
            let chi = if r.is_infinite() { 1.0 } else { step((dist(x, &j.base) - 0.5 * r) / (0.5 * r)) };
            if chi > 0.0 {
                inner += chi;
                for (o, v) in out.iter_mut().zip(j.eval(x)) {
                    *o += chi * v;
                }
            }
        }
        if inner >= 1.0 {
            return out;
        }
        let mut far = vec![0.0; n];
        let mut total = 0.0;
        let mut stack = vec![0];
        while let Some(q) = stack.pop() {
            let cube = &self.cubes[q];
            let half = 0.5 * EXPAND * cube.side;
            let w: f64 = cube.center.iter().zip(x).map(|(c, xi)| bump((xi - c) / half)).product();
            if w == 0.0 {
                continue;
            }
            if let Some(j) = cube.jet {
                total += w;
                for (o, v) in far.iter_mut().zip(field.jets[j].eval(x)) {
                    *o += w * v;
                }
            }
            // children in reverse so they pop in creation order
            stack.extend(cube.children.iter().rev());
        }
        if total > 0.0 {
            for (o, f) in out.iter_mut().zip(far) {
                *o += (1.0 - inner) * f / total;
            }
        }
        out
    }

    fn leaves(&self) -> usize {
        self.cubes.iter().filter(|c| c.jet.is_some()).count()
    }
}

/// Samples of the Whitney extension on every grid node, n values per node.
pub fn whitney_extend(field: &JetField, grid: &Grid) -> Result<Vec<f64>> {
    whitney_extend_report(field, grid).map(|(f, _)| f)
}

/// As `whitney_extend`, also returning the number of Whitney cubes.
pub fn whitney_extend_report(field: &JetField, grid: &Grid) -> Result<(Vec<f64>, usize)> {
    if field.jets.is_empty() {
        return Err(LabError::Empty("jet field".into()));
    }
    if field.m > 2 || field.degree > 4 {
        return Err(LabError::Unsupported(format!("Whitney extension with m = {}, l = {}", field.m, field.degree)));
    }
    if grid.m != field.m {
        return Err(LabError::Dimension("grid and jets live in different dimensions".into()));
    }
    let lo: Vec<f64> = grid.center.iter().map(|c| c - grid.half_width).collect();
    let hi: Vec<f64> = grid.center.iter().map(|c| c + grid.half_width).collect();
    let dec = Decomposition::new(field, &lo, &hi);
    let values: Vec<Vec<f64>> = (0..grid.len()).into_par_iter().map(|k| dec.eval(field, &grid.coords(k))).collect();
    Ok((values.concat(), dec.leaves()))
}

/// sup over nodes with |x - base| <= r of |F(x) - p(x)|.
pub fn taylor_residual(grid: &Grid, values: &[f64], jet: &Jet, r: f64) -> f64 {
    let n = jet.n;
    (0..grid.len())
        .filter_map(|k| {
            let x = grid.coords(k);
            if dist(&x, &jet.base) > r {
                return None;
            }
            let p = jet.eval(&x);
            Some(values[k * n..(k + 1) * n].iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recentering_keeps_the_polynomial() {
        let j = Jet::new(vec![0.2, -0.1], 2, vec![vec![1.0], vec![0.5], vec![-2.0], vec![0.3], vec![0.7], vec![-0.4]]).unwrap();
        let k = j.recentered(&[1.0, 0.5]);
        for x in [[0.0, 0.0], [0.3, -0.7], [2.0, 1.0]] {
            assert!((j.eval(&x)[0] - k.eval(&x)[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_step_limits() {
        assert_eq!(step(-0.5), 1.0);
        assert_eq!(step(1.5), 0.0);
        assert!((step(0.5) - 0.5).abs() < 1e-15);
    }
}
