//! Discrete varifolds: weighted point clouds carrying a tangent plane and an
//! integer density per atom, with the quadratures used by the inequality
//! verifiers.

use crate::chart::{Chart, PolyChart};
use crate::distance::closest_point;
use crate::error::{LabError, Result};
use crate::multiindex::graded_lex;
use crate::surface::{orthonormalize, GraphSurface, Plane, SurfaceSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Volume of the unit m-ball.
pub fn omega(m: usize) -> f64 {
    match m {
        0 => 1.0,
        1 => 2.0,
        _ => omega(m - 2) * 2.0 * std::f64::consts::PI / m as f64,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub point: DVector<f64>,
    pub projector: DMatrix<f64>,
    /// orthonormal basis of the tangent plane, d x m
    pub basis: DMatrix<f64>,
    pub weight: f64,
    pub density: u32,
}

impl Atom {
    pub fn new(point: DVector<f64>, span: &DMatrix<f64>, weight: f64, density: u32) -> Result<Atom> {
        let basis = orthonormalize(span)?;
        let projector = &basis * basis.transpose();
        Atom::checked(Atom { point, projector, basis, weight, density })
    }

    pub fn from_projector(point: DVector<f64>, projector: DMatrix<f64>, m: usize, weight: f64, density: u32) -> Result<Atom> {
        let plane = Plane::from_projector(point.clone(), projector.clone())?;
        if plane.dim() != m {
            return Err(LabError::InvalidPlane(format!("projector of rank {} where {m} expected", plane.dim())));
        }
        let basis = plane.basis();
        Atom::checked(Atom { point, projector, basis, weight, density })
    }

    fn checked(a: Atom) -> Result<Atom> {
        if !(a.weight > 0.0) || a.density == 0 {
            return Err(LabError::Invalid(format!("atom weight {} density {}", a.weight, a.density)));
        }
        Ok(a)
    }

    pub fn mass(&self) -> f64 {
        self.weight * self.density as f64
    }

    pub fn tangent(&self) -> Plane {
        Plane { base: self.point.clone(), projector: self.projector.clone(), dim: self.basis.ncols() }
    }

    /// Linear size of the patch the atom stands for, seen through `proj`.
    fn width_through(&self, proj: &DMatrix<f64>) -> f64 {
        let m = self.basis.ncols();
        let j = (self.basis.transpose() * proj * &self.basis).determinant().max(0.0).sqrt();
        (self.weight * j).powf(1.0 / m as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteVarifold {
    pub m: usize,
    pub n: usize,
    pub atoms: Vec<Atom>,
    pub provenance: String,
}

/// C_r(x, pi) = B_r(x, pi) + pi^perp.
#[derive(Clone, Debug, PartialEq)]
pub struct Cylinder {
    pub center: DVector<f64>,
    pub plane: Plane,
    pub radius: f64,
}

impl Cylinder {
    pub fn new(center: DVector<f64>, plane: Plane, radius: f64) -> Result<Cylinder> {
        if !(radius > 0.0) {
            return Err(LabError::Invalid(format!("cylinder radius {radius}")));
        }
        Ok(Cylinder { center, plane, radius })
    }

    /// Unit-radius cylinder over the horizontal plane, centred at 0.
    pub fn unit(m: usize, n: usize) -> Cylinder {
        Cylinder { center: DVector::zeros(m + n), plane: Plane::horizontal(m, n), radius: 1.0 }
    }

    pub fn with_radius(&self, r: f64) -> Cylinder {
        Cylinder { radius: r, ..self.clone() }
    }

    pub fn base_distance(&self, z: &DVector<f64>) -> f64 {
        // |P u|^2 = u^T P u for an orthogonal projector
        let p = &self.plane.projector;
        let d = z.len();
        let mut s = 0.0;
        for j in 0..d {
            let uj = z[j] - self.center[j];
            if uj == 0.0 {
                continue;
            }
            let mut t = 0.0;
            for i in 0..d {
                t += p[(i, j)] * (z[i] - self.center[i]);
            }
            s += t * uj;
        }
        s.max(0.0).sqrt()
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        self.base_distance(z) <= self.radius
    }

    /// Fraction of the atom's patch inside the cylinder: a linear ramp across
    /// one patch width centred on the lateral boundary.
    pub fn fraction(&self, a: &Atom) -> f64 {
        let rho = self.base_distance(&a.point);
        // the ramp is never wider than weight^{1/m}
        let wmax = 0.5 * a.weight.powf(1.0 / a.basis.ncols() as f64);
        if rho >= self.radius + wmax {
            return 0.0;
        }
        if rho <= self.radius - wmax {
            return 1.0;
        }
        let w = a.width_through(&self.plane.projector);
        if w == 0.0 {
            return if rho <= self.radius { 1.0 } else { 0.0 };
        }
        (0.5 + (self.radius - rho) / w).clamp(0.0, 1.0)
    }

    pub fn transformed(&self, rot: &DMatrix<f64>, shift: &DVector<f64>) -> Cylinder {
        Cylinder {
            center: rot * &self.center + shift,
            plane: Plane {
                base: rot * &self.plane.base + shift,
                projector: rot * &self.plane.projector * rot.transpose(),
                dim: self.plane.dim,
            },
            radius: self.radius,
        }
    }
}

impl DiscreteVarifold {
    pub fn dim(&self) -> usize {
        self.m + self.n
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(Atom::mass).sum()
    }

    pub fn mass_in(&self, cyl: &Cylinder) -> f64 {
        self.atoms.iter().map(|a| cyl.fraction(a) * a.mass()).sum()
    }

    pub fn transformed(&self, rot: &DMatrix<f64>, shift: &DVector<f64>) -> DiscreteVarifold {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                point: rot * &a.point + shift,
                projector: rot * &a.projector * rot.transpose(),
                basis: rot * &a.basis,
                weight: a.weight,
                density: a.density,
            })
            .collect();
        DiscreteVarifold { atoms, ..self.clone() }
    }

    /// Image under z -> (z - center) / r.
    pub fn rescaled(&self, center: &DVector<f64>, r: f64) -> DiscreteVarifold {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { point: (&a.point - center) / r, weight: a.weight / r.powi(self.m as i32), ..a.clone() })
            .collect();
        DiscreteVarifold { atoms, ..self.clone() }
    }

    /// Atoms whose projection to `plane` lies within `tol` of x (base coords
    /// measured from the plane's base point).
    pub fn fiber(&self, plane: &Plane, x: &DVector<f64>, tol: f64) -> Vec<usize> {
        (0..self.atoms.len())
            .filter(|&i| {
                let p = &plane.projector * (&self.atoms[i].point - &plane.base);
                (p - x).norm() <= tol
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# varifold v1\n");
        s.push_str(&format!("dims {} {}\n", self.m, self.n));
        s.push_str(&format!("provenance {}\n", self.provenance.replace('\n', " ")));
        s.push_str(&format!("atoms {}\n", self.atoms.len()));
        for a in &self.atoms {
            let mut parts: Vec<String> = a.point.iter().map(|v| format!("{v}")).collect();
            // row-major projector
            for i in 0..self.dim() {
                for j in 0..self.dim() {
                    parts.push(format!("{}", a.projector[(i, j)]));
                }
            }
            parts.push(format!("{}", a.weight));
            parts.push(format!("{}", a.density));
            s.push_str(&parts.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<DiscreteVarifold> {
        let err = |line: usize, msg: &str| LabError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, "# varifold v1")) => {}
            _ => return Err(err(1, "missing '# varifold v1' header")),
        }
        let (ln, dims) = lines.next().ok_or_else(|| err(2, "missing dims"))?;
        let dims: Vec<usize> = dims
            .strip_prefix("dims ")
            .ok_or_else(|| err(ln, "expected 'dims m n'"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(ln, "bad dimension")))
            .collect::<Result<_>>()?;
        if dims.len() != 2 || dims[0] == 0 {
            return Err(err(ln, "expected 'dims m n'"));
        }
        let (m, n) = (dims[0], dims[1]);
        let d = m + n;
        let (ln, prov) = lines.next().ok_or_else(|| err(3, "missing provenance"))?;
        let provenance = prov.strip_prefix("provenance").ok_or_else(|| err(ln, "expected provenance"))?.trim_start().to_string();
        let (ln, count) = lines.next().ok_or_else(|| err(4, "missing atom count"))?;
        let count: usize = count
            .strip_prefix("atoms ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| err(ln, "expected 'atoms N'"))?;
        let mut atoms = Vec::with_capacity(count);
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != d + d * d + 2 {
                return Err(err(ln, &format!("expected {} fields, found {}", d + d * d + 2, tok.len())));
            }
            let nums: Vec<f64> = tok[..d + d * d + 1]
                .iter()
                .map(|t| t.parse::<f64>().map_err(|_| err(ln, &format!("bad number '{t}'"))))
                .collect::<Result<_>>()?;
            let density: u32 = tok[d + d * d + 1].parse().map_err(|_| err(ln, "bad density"))?;
            let point = DVector::from_column_slice(&nums[..d]);
            let projector = DMatrix::from_row_slice(d, d, &nums[d..d + d * d]);
            let atom = Atom::from_projector(point, projector, m, nums[d + d * d], density).map_err(|e| err(ln, &e.to_string()))?;
            atoms.push(atom);
        }
        if atoms.len() != count {
            return Err(err(0, &format!("header announces {count} atoms, found {}", atoms.len())));
        }
        Ok(DiscreteVarifold { m, n, atoms, provenance })
    }
}

// ---------------------------------------------------------------------------
// generators

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    /// half side of the base cube
    pub half_width: f64,
    /// midpoint cells per axis
    pub cells: usize,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

impl Sampling {
    pub fn new(half_width: f64, cells: usize) -> Sampling {
        Sampling { half_width, cells, center: None }
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSheet {
    /// n x m row-major
    pub slope: Vec<f64>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub multiplicity: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSheet {
    pub surface: SurfaceSpec,
    #[serde(default = "one")]
    pub multiplicity: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VarifoldSpec {
    /// Affine plane y = A x + b with multiplicity Q.
    Plane {
        m: usize,
        n: usize,
        #[serde(default = "one")]
        multiplicity: u32,
        #[serde(default)]
        slope: Option<Vec<f64>>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
        sampling: Sampling,
    },
    PlaneUnion {
        m: usize,
        n: usize,
        planes: Vec<AffineSheet>,
        sampling: Sampling,
    },
    /// Graphs over the horizontal plane, each with a multiplicity.
    Sheets {
        sheets: Vec<GraphSheet>,
        sampling: Sampling,
    },
    MinimalGraph {
        surface: SurfaceSpec,
        sampling: Sampling,
    },
    /// Adds a seeded random polynomial of the given degree and size to every sheet.
    Perturbed {
        base: Box<VarifoldSpec>,
        amplitude: f64,
        #[serde(default = "default_degree")]
        degree: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_degree() -> usize {
    3
}

struct Sheet {
    chart: Chart,
    multiplicity: u32,
    domain: Option<GraphSurface>,
}

impl VarifoldSpec {
    pub fn plane(m: usize, n: usize, multiplicity: u32, sampling: Sampling) -> VarifoldSpec {
        VarifoldSpec::Plane { m, n, multiplicity, slope: None, offset: None, sampling }
    }

    /// Sheets y = b_i over the horizontal plane, one per offset.
    pub fn parallel(m: usize, n: usize, offsets: &[Vec<f64>], sampling: Sampling) -> VarifoldSpec {
        VarifoldSpec::PlaneUnion {
            m,
            n,
            planes: offsets
                .iter()
                .map(|b| AffineSheet { slope: vec![0.0; n * m], offset: Some(b.clone()), multiplicity: 1 })
                .collect(),
            sampling,
        }
    }

    /// Two orthogonal 2-planes through 0 in R^4: y = x and y = -x.
    pub fn orthogonal_planes(sampling: Sampling) -> VarifoldSpec {
        VarifoldSpec::PlaneUnion {
            m: 2,
            n: 2,
            planes: vec![
                AffineSheet { slope: vec![1.0, 0.0, 0.0, 1.0], offset: None, multiplicity: 1 },
                AffineSheet { slope: vec![-1.0, 0.0, 0.0, -1.0], offset: None, multiplicity: 1 },
            ],
            sampling,
        }
    }

    pub fn sampling(&self) -> &Sampling {
        match self {
            VarifoldSpec::Plane { sampling, .. }
            | VarifoldSpec::PlaneUnion { sampling, .. }
            | VarifoldSpec::Sheets { sampling, .. }
            | VarifoldSpec::MinimalGraph { sampling, .. } => sampling,
            VarifoldSpec::Perturbed { base, .. } => base.sampling(),
        }
    }

    pub fn dims(&self) -> Result<(usize, usize)> {
        match self {
            VarifoldSpec::Plane { m, n, .. } | VarifoldSpec::PlaneUnion { m, n, .. } => Ok((*m, *n)),
            VarifoldSpec::Sheets { sheets, .. } => {
                let s = sheets.first().ok_or_else(|| LabError::Empty("sheet list".into()))?.surface.build()?;
                Ok((s.m, s.n))
            }
            VarifoldSpec::MinimalGraph { surface, .. } => {
                let s = surface.build()?;
                Ok((s.m, s.n))
            }
            VarifoldSpec::Perturbed { base, .. } => base.dims(),
        }
    }

    fn sheets(&self) -> Result<Vec<Sheet>> {
        let (m, n) = self.dims()?;
        let affine = |slope: &Option<Vec<f64>>, offset: &Option<Vec<f64>>| -> Result<Chart> {
            let a = slope.clone().unwrap_or_else(|| vec![0.0; n * m]);
            let b = offset.clone().unwrap_or_else(|| vec![0.0; n]);
            if a.len() != n * m || b.len() != n {
                return Err(LabError::Dimension(format!("affine sheet needs {} slopes and {n} offsets", n * m)));
            }
            Ok(Chart::Polynomial(PolyChart::affine(m, n, &a, &b)))
        };
        Ok(match self {
            VarifoldSpec::Plane { multiplicity, slope, offset, .. } => {
                vec![Sheet { chart: affine(slope, offset)?, multiplicity: *multiplicity, domain: None }]
            }
            VarifoldSpec::PlaneUnion { planes, .. } => planes
                .iter()
                .map(|p| Ok(Sheet { chart: affine(&Some(p.slope.clone()), &p.offset)?, multiplicity: p.multiplicity, domain: None }))
                .collect::<Result<_>>()?,
            VarifoldSpec::Sheets { sheets, .. } => sheets
                .iter()
                .map(|s| {
                    let g = s.surface.build()?;
                    if (g.m, g.n) != (m, n) {
                        return Err(LabError::Dimension("sheets of different dimensions".into()));
                    }
                    Ok(Sheet { chart: g.chart.clone(), multiplicity: s.multiplicity, domain: Some(g) })
                })
                .collect::<Result<_>>()?,
            VarifoldSpec::MinimalGraph { surface, .. } => {
                let g = surface.build()?;
                vec![Sheet { chart: g.chart.clone(), multiplicity: 1, domain: Some(g) }]
            }
            VarifoldSpec::Perturbed { base, amplitude, degree, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let sp = base.sampling();
                let scale = sp.half_width;
                let centre = sp.center.clone().unwrap_or_else(|| vec![0.0; m]);
                base.sheets()?
                    .into_iter()
                    .map(|s| {
                        let mut p = PolyChart::new(m, n);
                        p.center = centre.clone();
                        p.scale = scale;
                        for beta in graded_lex(m, *degree) {
                            let c: Vec<f64> = (0..n).map(|_| amplitude * rng.gen_range(-1.0..1.0)).collect();
                            p = p.with_term(&beta, &c);
                        }
                        Sheet { chart: Chart::Sum(vec![s.chart, Chart::Polynomial(p)]), ..s }
                    })
                    .collect()
            }
        })
    }

    fn describe(&self) -> String {
        match self {
            VarifoldSpec::Plane { m, n, multiplicity, .. } => format!("plane m={m} n={n} Q={multiplicity}"),
            VarifoldSpec::PlaneUnion { m, n, planes, .. } => format!("plane-union m={m} n={n} sheets={}", planes.len()),
            VarifoldSpec::Sheets { sheets, .. } => format!("sheets count={}", sheets.len()),
            VarifoldSpec::MinimalGraph { .. } => "minimal-graph".to_string(),
            VarifoldSpec::Perturbed { base, amplitude, degree, seed } => {
                format!("{} perturbed amplitude={amplitude} degree={degree} seed={seed}", base.describe())
            }
        }
    }
}

/// Samples every sheet at the midpoints of a uniform base grid; sheets that
/// pass through the same point with the same tangent plane merge into one
/// atom of summed density.
pub fn gen_varifold(spec: &VarifoldSpec) -> Result<DiscreteVarifold> {
    gen_varifold_in(spec, spec.sampling())
}

/// The sheets of `spec` sampled over another window. Perturbations stay
/// those of the spec's own sampling.
pub fn gen_varifold_in(spec: &VarifoldSpec, sp: &Sampling) -> Result<DiscreteVarifold> {
    let (m, n) = spec.dims()?;
    if sp.cells == 0 || !(sp.half_width > 0.0) {
        return Err(LabError::Invalid("empty sampling grid".into()));
    }
    let centre = sp.center.clone().unwrap_or_else(|| vec![0.0; m]);
    if centre.len() != m {
        return Err(LabError::Dimension("sampling center".into()));
    }
    let sheets = spec.sheets()?;
    let h = sp.h();
    let cells = sp.cells.pow(m as u32);
    let per_cell: Vec<Vec<Atom>> = (0..cells)
        .into_par_iter()
        .map(|c| {
            let mut idx = vec![0usize; m];
            let mut r = c;
            for k in (0..m).rev() {
                idx[k] = r % sp.cells;
                r /= sp.cells;
            }
            let x: Vec<f64> = (0..m).map(|k| centre[k] - sp.half_width + (idx[k] as f64 + 0.5) * h).collect();
            let mut out: Vec<Atom> = Vec::new();
            for s in &sheets {
                if let Some(dom) = &s.domain {
                    if !dom.in_domain(&x) {
                        return Err(LabError::Domain { point: x.clone() });
                    }
                }
                let t = s.chart.derivs(&x, 1)?;
                let mut point = DVector::zeros(m + n);
                let mut span = DMatrix::zeros(m + n, m);
                for k in 0..m {
                    point[k] = x[k];
                    span[(k, k)] = 1.0;
                }
                for a in 0..n {
                    point[m + a] = t[a].c[0];
                    for i in 0..m {
                        span[(m + a, i)] = t[a].c[1 + i];
                    }
                }
                if !point.iter().chain(span.iter()).all(|v| v.is_finite()) {
                    return Err(LabError::Domain { point: x.clone() });
                }
                let area = (span.transpose() * &span).determinant().sqrt();
                let atom = Atom::new(point, &span, h.powi(m as i32) * area, s.multiplicity)?;
                match out
                    .iter_mut()
                    .find(|o| (&o.point - &atom.point).norm() < 1e-12 && (&o.projector - &atom.projector).norm() < 1e-12)
                {
                    Some(o) => o.density += atom.density,
                    None => out.push(atom),
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(DiscreteVarifold {
        m,
        n,
        atoms: per_cell.into_iter().flatten().collect(),
        provenance: format!("{} half_width={} cells={}", spec.describe(), sp.half_width, sp.cells),
    })
}

// ---------------------------------------------------------------------------
// quadratures

pub fn mass_ratio(v: &DiscreteVarifold, cyl: &Cylinder) -> f64 {
    v.mass_in(cyl) / (omega(v.m) * cyl.radius.powi(v.m as i32))
}

/// ||V||(B_r(x)) / (omega_m r^m) with the same boundary ramp as cylinders.
pub fn density_ratio(v: &DiscreteVarifold, x: &DVector<f64>, r: f64) -> f64 {
    let mass: f64 = v
        .atoms
        .iter()
        .map(|a| {
            let w = a.weight.powf(1.0 / v.m as f64);
            let frac = (0.5 + (r - (&a.point - x).norm()) / w).clamp(0.0, 1.0);
            frac * a.mass()
        })
        .sum();
    mass / (omega(v.m) * r.powi(v.m as i32))
}

pub fn tilt_excess(v: &DiscreteVarifold, cyl: &Cylinder, pi: &Plane) -> f64 {
    let s: f64 = v
        .atoms
        .iter()
        .map(|a| {
            let f = cyl.fraction(a);
            if f == 0.0 {
                0.0
            } else {
                f * a.mass() * a.projector.iter().zip(pi.projector.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
            }
        })
        .sum();
    s / (omega(v.m) * cyl.radius.powi(v.m as i32))
}

/// Projections of the atoms that meet the cylinder; an atom the surface
/// cannot project is reported by index.
fn projections(v: &DiscreteVarifold, m: &GraphSurface, cyl: &Cylinder) -> Result<Vec<Option<(f64, Vec<f64>, DMatrix<f64>)>>> {
    v.atoms
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            if cyl.fraction(a) == 0.0 {
                return Ok(None);
            }
            let p = closest_point(m, &a.point)
                .map_err(|_| LabError::OutsideTube { index: i, point: a.point.iter().copied().collect() })?;
            let frame = m.frame(&p.x)?;
            Ok(Some((p.dist, p.x, frame.tangent_projector())))
        })
        .collect()
}

/// (1 / (omega_m r^{m+2})) int_{C_r} d_M^2 d||V||, the square of the L2 height.
pub fn l2_height(v: &DiscreteVarifold, m: &GraphSurface, cyl: &Cylinder) -> Result<f64> {
    let proj = projections(v, m, cyl)?;
    let s: f64 = v
        .atoms
        .iter()
        .zip(&proj)
        .filter_map(|(a, p)| p.as_ref().map(|(d, _, _)| cyl.fraction(a) * a.mass() * d * d))
        .sum();
    Ok(s / (omega(v.m) * cyl.radius.powi(v.m as i32 + 2)))
}

// ---------------------------------------------------------------------------
// first variation

pub trait VectorField: Sync {
    fn value(&self, z: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64>;
}

/// X(z) = psi(|z - c|^2 / rho^2) (A (z - c) + b) with psi(s) = exp(-1/(1 - s)).
#[derive(Clone, Debug)]
pub struct BumpField {
    pub center: DVector<f64>,
    pub radius: f64,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl BumpField {
    fn profile(&self, z: &DVector<f64>) -> (f64, f64, DVector<f64>) {
        let u = z - &self.center;
        let s = u.norm_squared() / (self.radius * self.radius);
        if s >= 1.0 {
            return (0.0, 0.0, u);
        }
        let psi = (-1.0 / (1.0 - s)).exp();
        (psi, -psi / ((1.0 - s) * (1.0 - s)), u)
    }
}

impl VectorField for BumpField {
    fn value(&self, z: &DVector<f64>) -> DVector<f64> {
        let (psi, _, u) = self.profile(z);
        (&self.a * &u + &self.b) * psi
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let (psi, dpsi, u) = self.profile(z);
        let inner = &self.a * &u + &self.b;
        &self.a * psi + inner * u.transpose() * (2.0 * dpsi / (self.radius * self.radius))
    }
}

/// Sum of scaled fields.
pub struct FieldCombination<'a>(pub Vec<(f64, &'a dyn VectorField)>);

impl VectorField for FieldCombination<'_> {
    fn value(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut acc = DVector::zeros(z.len());
        for (c, f) in &self.0 {
            acc += f.value(z) * *c;
        }
        acc
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(z.len(), z.len());
        for (c, f) in &self.0 {
            acc += f.jacobian(z) * *c;
        }
        acc
    }
}

/// delta V(X) = sum weight * density * div_{T_z V} X(z).
pub fn first_variation(v: &DiscreteVarifold, x: &dyn VectorField) -> f64 {
    v.atoms.iter().map(|a| a.mass() * (&a.projector * x.jacobian(&a.point)).trace()).sum()
}

/// max over atoms of |DX|.
pub fn field_gradient_sup(v: &DiscreteVarifold, x: &dyn VectorField) -> f64 {
    v.atoms.iter().map(|a| x.jacobian(&a.point).norm()).fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct StationarityAudit {
    /// max |delta V(X)| / sup|DX| over the audit fields
    pub defect: f64,
    /// c * h
    pub tol: f64,
    pub fields: usize,
}

impl StationarityAudit {
    pub fn passed(&self) -> bool {
        self.defect <= self.tol
    }
}

/// Audits stationarity with seeded bump fields centred on a 3^m lattice of
/// atoms in the middle half of the sampled region.
pub fn stationarity_audit(v: &DiscreteVarifold, sampling: &Sampling, c: f64, seed: u64) -> Result<StationarityAudit> {
    if v.atoms.is_empty() {
        return Err(LabError::Empty("varifold".into()));
    }
    let m = v.m;
    let d = v.dim();
    let centre = sampling.center.clone().unwrap_or_else(|| vec![0.0; m]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = 0.4 * sampling.half_width;
    let mut defect: f64 = 0.0;
    let mut fields = 0;
    for l in 0..3usize.pow(m as u32) {
        let mut target = centre.clone();
        let mut r = l;
        for t in target.iter_mut() {
            *t += ((r % 3) as f64 - 1.0) * 0.5 * sampling.half_width;
            r /= 3;
        }
        // the atom whose base point is nearest to the lattice point
        let anchor = v
            .atoms
            .iter()
            .min_by(|a, b| {
                let da: f64 = (0..m).map(|k| (a.point[k] - target[k]).powi(2)).sum();
                let db: f64 = (0..m).map(|k| (b.point[k] - target[k]).powi(2)).sum();
                da.total_cmp(&db)
            })
            .unwrap();
        for _ in 0..2 {
            let field = BumpField {
                center: anchor.point.clone(),
                radius: rho,
                a: DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0)),
                b: DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
            };
            let g = field_gradient_sup(v, &field);
            if g > 0.0 {
                defect = defect.max(first_variation(v, &field).abs() / g);
                fields += 1;
            }
        }
    }
    Ok(StationarityAudit { defect, tol: c * sampling.h(), fields })
}

// ---------------------------------------------------------------------------
// verifiers

#[derive(Clone, Debug)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    /// lhs / rhs; 0 when both vanish
    pub constant: f64,
    /// min over atoms of |T_z V - T_p M|^2 - |D_V d_M|^2 (caccioppoli only)
    pub pointwise_slack: f64,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs <= 1e-300 {
        0.0
    } else if rhs <= 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// r^{-m} int_{C_{r/2}} |T_z V - T_p M|^2 against
/// r^{-m} int_{C_r} (r^{-2} d_M^2 + r^{-1} d_M |H_M o p|) d||V||.
pub fn caccioppoli_check(v: &DiscreteVarifold, m: &GraphSurface, cyl: &Cylinder, audit: &StationarityAudit) -> Result<InequalityReport> {
    if !audit.passed() {
        return Err(LabError::NotStationary { defect: audit.defect, tol: audit.tol });
    }
    let r = cyl.radius;
    let inner = cyl.with_radius(r / 2.0);
    let proj = projections(v, m, cyl)?;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut slack = f64::INFINITY;
    for (a, p) in v.atoms.iter().zip(&proj) {
        let Some((d, x, tp)) = p else { continue };
        let tilt = (&a.projector - tp).norm_squared();
        let fi = inner.fraction(a);
        if fi > 0.0 {
            lhs += fi * a.mass() * tilt;
        }
        let hm = m.mean_curvature(x)?.norm();
        rhs += cyl.fraction(a) * a.mass() * (d * d / (r * r) + d * hm / r);
        if *d > 0.0 {
            let foot = m.point(x)?;
            let grad = (&a.point - foot) / *d;
            let dv = (&a.projector * grad).norm_squared();
            slack = slack.min(tilt - dv);
        }
    }
    let norm = r.powi(v.m as i32);
    let (lhs, rhs) = (lhs / norm, rhs / norm);
    Ok(InequalityReport { lhs, rhs, constant: ratio(lhs, rhs), pointwise_slack: slack })
}

/// sup_{C_{r/2}} d_M^2 / r^2 against the L2 height plus the mass ratio
/// times r^2 sup |H_M|^2.
pub fn height_bound_check(v: &DiscreteVarifold, m: &GraphSurface, cyl: &Cylinder, audit: &StationarityAudit) -> Result<InequalityReport> {
    if !audit.passed() {
        return Err(LabError::NotStationary { defect: audit.defect, tol: audit.tol });
    }
    let r = cyl.radius;
    let inner = cyl.with_radius(r / 2.0);
    let proj = projections(v, m, cyl)?;
    let mut sup_d: f64 = 0.0;
    let mut sup_h: f64 = 0.0;
    let mut l2 = 0.0;
    for (a, p) in v.atoms.iter().zip(&proj) {
        let Some((d, x, _)) = p else { continue };
        if inner.contains(&a.point) {
            sup_d = sup_d.max(d * d);
        }
        sup_h = sup_h.max(m.mean_curvature(x)?.norm());
        l2 += cyl.fraction(a) * a.mass() * d * d;
    }
    let lhs = sup_d / (r * r);
    let rhs = l2 / (omega(v.m) * r.powi(v.m as i32 + 2)) + mass_ratio(v, cyl) * r * r * sup_h * sup_h;
    Ok(InequalityReport { lhs, rhs, constant: ratio(lhs, rhs), pointwise_slack: f64::INFINITY })
}

#[derive(Clone, Debug)]
pub struct BandReport {
    /// mass-weighted mean heights, ordered by first coordinate
    pub centers: Vec<DVector<f64>>,
    pub radius: f64,
    /// radius / (r E^{1/(2m)}); 0 when radius = 0
    pub constant: f64,
}

/// Single-linkage clusters of the heights P^perp(z - x) of atoms over the
/// cylinder base, split at `gap`.
pub fn height_clusters(v: &DiscreteVarifold, cyl: &Cylinder, gap: f64) -> (Vec<usize>, Vec<Vec<usize>>) {
    let perp = DMatrix::identity(v.dim(), v.dim()) - &cyl.plane.projector;
    let ids: Vec<usize> = (0..v.atoms.len()).filter(|&i| cyl.contains(&v.atoms[i].point)).collect();
    let ys: Vec<DVector<f64>> = ids.iter().map(|&i| &perp * (&v.atoms[i].point - &cyl.center)).collect();
    let clusters = single_linkage(&ys, gap);
    (ids, clusters)
}

pub fn sheet_band_check(v: &DiscreteVarifold, cyl: &Cylinder, excess: f64, q: usize, gap: f64) -> Result<BandReport> {
    let perp = DMatrix::identity(v.dim(), v.dim()) - &cyl.plane.projector;
    let (ids, clusters) = height_clusters(v, cyl, gap);
    if clusters.len() > q {
        return Err(LabError::TooManyBands { found: clusters.len(), allowed: q });
    }
    let mut centers = Vec::new();
    let mut radius: f64 = 0.0;
    for c in &clusters {
        let ys: Vec<(DVector<f64>, f64)> = c
            .iter()
            .map(|&k| {
                let a = &v.atoms[ids[k]];
                (&perp * (&a.point - &cyl.center), a.mass())
            })
            .collect();
        let total: f64 = ys.iter().map(|(_, w)| w).sum();
        let mean = ys.iter().fold(DVector::zeros(v.dim()), |acc, (y, w)| acc + y * (*w / total));
        radius = ys.iter().map(|(y, _)| (y - &mean).norm()).fold(radius, f64::max);
        centers.push(mean);
    }
    centers.sort_by(|a, b| {
        a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let scale = cyl.radius * excess.powf(1.0 / (2.0 * v.m as f64));
    Ok(BandReport { centers, radius, constant: ratio(radius, scale) })
}

/// Single-linkage clustering of points at threshold `gap`; clusters come out
/// ordered by their smallest member index.
pub fn single_linkage(ys: &[DVector<f64>], gap: f64) -> Vec<Vec<usize>> {
    let n = ys.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = ys[0].len();
    // sweep along the coordinate of largest spread
    let axis = (0..dim)
        .max_by(|&a, &b| {
            let spread = |k: usize| {
                let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), y| (l.min(y[k]), h.max(y[k])));
                hi - lo
            };
            spread(a).total_cmp(&spread(b))
        })
        .unwrap();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ys[a][axis].total_cmp(&ys[b][axis]).then(a.cmp(&b)));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (s, &i) in order.iter().enumerate() {
        for &j in &order[s + 1..] {
            if ys[j][axis] - ys[i][axis] > gap {
                break;
            }
            if (&ys[j] - &ys[i]).norm() <= gap {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes() {
        assert!((omega(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((omega(3) - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn bump_jacobian_matches_differences() {
        let f = BumpField {
            center: DVector::from_vec(vec![0.1, -0.2, 0.0]),
            radius: 0.8,
            a: DMatrix::from_fn(3, 3, |i, j| (i as f64 - j as f64) * 0.3 + 0.1),
            b: DVector::from_vec(vec![0.5, 0.0, -1.0]),
        };
        let z = DVector::from_vec(vec![0.3, 0.1, -0.2]);
        let j = f.jacobian(&z);
        let h = 1e-6;
        for k in 0..3 {
            let mut zp = z.clone();
            zp[k] += h;
            let mut zm = z.clone();
            zm[k] -= h;
            let col = (f.value(&zp) - f.value(&zm)) / (2.0 * h);
            for i in 0..3 {
                assert!((col[i] - j[(i, k)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn linkage_splits_at_gap() {
        let ys: Vec<DVector<f64>> = [0.0, 0.1, 0.2, 1.0, 1.05].iter().map(|&v| DVector::from_vec(vec![v])).collect();
        let g = single_linkage(&ys, 0.15);
        assert_eq!(g, vec![vec![0, 1, 2], vec![3, 4]]);
    }
}
