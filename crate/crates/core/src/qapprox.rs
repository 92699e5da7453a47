//! Q-valued approximation of a varifold over a surface M: the metric on
//! A_Q, the tilt maximal function, the good set K and fiberwise clustering.

use crate::distance::closest_point;
use crate::error::{LabError, Result};
use crate::jacobi::{NormalSection, SurfaceGrid};
use crate::surface::Plane;
use crate::varifold::{omega, single_linkage, tilt_excess, Atom, Cylinder, DiscreteVarifold};
use std::collections::HashMap;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

/// sum_h Q_h [[p_h]].
#[derive(Clone, Debug, PartialEq)]
pub struct QPoint {
    pub entries: Vec<(DVector<f64>, u32)>,
}

impl QPoint {
    pub fn new(entries: Vec<(DVector<f64>, u32)>) -> Result<QPoint> {
        if entries.is_empty() || entries.iter().any(|(_, q)| *q == 0) {
            return Err(LabError::Invalid("Q-point multiplicities must be positive".into()));
        }
        Ok(QPoint { entries })
    }

    /// Q [[0]] in R^d.
    pub fn zero(q: u32, d: usize) -> QPoint {
        QPoint { entries: vec![(DVector::zeros(d), q)] }
    }

    pub fn q(&self) -> usize {
        self.entries.iter().map(|(_, q)| *q as usize).sum()
    }

    pub fn expanded(&self) -> Vec<&DVector<f64>> {
        self.entries.iter().flat_map(|(p, q)| std::iter::repeat(p).take(*q as usize)).collect()
    }

    pub fn average(&self) -> DVector<f64> {
        let d = self.entries[0].0.len();
        let s = self.entries.iter().fold(DVector::zeros(d), |acc, (p, q)| acc + p * *q as f64);
        s / self.q() as f64
    }
}

/// Almgren's metric: the l2 cost of the best matching of the expanded points.
pub fn metric_g(a: &QPoint, b: &QPoint) -> Result<f64> {
    if a.q() != b.q() {
        return Err(LabError::QMismatch(a.q(), b.q()));
    }
    if let ([(pa, q)], [(pb, _)]) = (a.entries.as_slice(), b.entries.as_slice()) {
        let c: f64 = pa.iter().zip(pb.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        return Ok((*q as f64 * c).sqrt());
    }
    let (xa, xb) = (a.expanded(), b.expanded());
    let q = xa.len();
    if q > 20 {
        return Err(LabError::Unsupported(format!("matching of {q} points")));
    }
    let cost: Vec<Vec<f64>> = xa.iter().map(|p| xb.iter().map(|r| (*p - *r).norm_squared()).collect()).collect();
    // dp over subsets of b already used by the first popcount(mask) points of a
    let mut dp = vec![f64::INFINITY; 1 << q];
    dp[0] = 0.0;
    for mask in 0usize..(1 << q) {
        let i = mask.count_ones() as usize;
        if i >= q || !dp[mask].is_finite() {
            continue;
        }
        for j in 0..q {
            if mask & (1 << j) == 0 {
                let next = mask | (1 << j);
                dp[next] = dp[next].min(dp[mask] + cost[i][j]);
            }
        }
    }
    Ok(dp[(1 << q) - 1].sqrt())
}

#[derive(Clone, Debug)]
pub struct ApproxOptions {
    pub q: usize,
    pub lambda: f64,
    /// flatness of M
    pub delta: f64,
    /// dyadic radii of the maximal function
    pub scales: Vec<f64>,
    /// K threshold is lambda + coeff * delta^2; defaults to omega_m (Q+1) 1000^m
    pub threshold_coeff: Option<f64>,
    /// cluster gap; defaults to 4 D lambda^{1/(2m)} s
    pub gap: Option<f64>,
    pub gap_d: f64,
    /// fiber ball radius s; defaults to four atom widths
    pub fiber_radius: Option<f64>,
    pub max_failure_frac: f64,
}

impl ApproxOptions {
    pub fn new(q: usize, lambda: f64) -> ApproxOptions {
        ApproxOptions {
            q,
            lambda,
            delta: 0.0,
            scales: vec![0.5, 0.25, 0.125],
            threshold_coeff: None,
            gap: None,
            gap_d: 0.25,
            fiber_radius: None,
            max_failure_frac: 0.01,
        }
    }

    pub fn threshold(&self, m: usize) -> f64 {
        let c = self.threshold_coeff.unwrap_or_else(|| omega(m) * (self.q as f64 + 1.0) * 1000f64.powi(m as i32));
        self.lambda + c * self.delta * self.delta
    }

    fn gap_for(&self, m: usize, s: f64) -> f64 {
        self.gap.unwrap_or_else(|| 4.0 * self.gap_d * self.lambda.powf(1.0 / (2.0 * m as f64)) * s)
    }
}

fn cylinder_at(geo: &SurfaceGrid, node: usize, s: f64) -> Cylinder {
    let loc = &geo.local[node];
    Cylinder { center: loc.point.clone(), plane: loc.frame.tangent_plane(), radius: s }
}

/// Uniform bins over the first m coordinates of a point set.
#[derive(Clone, Debug)]
struct Bins {
    cell: f64,
    map: HashMap<Vec<i64>, Vec<usize>>,
}

impl Bins {
    fn new<'a>(cell: f64, pts: impl Iterator<Item = &'a [f64]>) -> Bins {
        let mut map: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in pts.enumerate() {
            map.entry(p.iter().map(|v| (v / cell).floor() as i64).collect()).or_default().push(i);
        }
        Bins { cell, map }
    }

    /// Indices, ascending, of the points in the cube of half-side r about c.
    fn query(&self, c: &[f64], r: f64) -> Vec<usize> {
        let lo: Vec<i64> = c.iter().map(|v| ((v - r) / self.cell).floor() as i64).collect();
        let hi: Vec<i64> = c.iter().map(|v| ((v + r) / self.cell).floor() as i64).collect();
        let mut out = Vec::new();
        let mut idx = lo.clone();
        'cells: loop {
            if let Some(v) = self.map.get(&idx) {
                out.extend_from_slice(v);
            }
            for a in 0..idx.len() {
                idx[a] += 1;
                if idx[a] <= hi[a] {
                    continue 'cells;
                }
                idx[a] = lo[a];
            }
            break;
        }
        out.sort_unstable();
        out
    }
}

/// Base-plane bins of the atoms, with the bounds needed to find every atom
/// meeting a tilted cylinder.
struct AtomBins {
    bins: Bins,
    /// max |y| over the atoms
    height: f64,
    /// max half patch width
    half_width: f64,
    horizontal: DMatrix<f64>,
    points: Vec<Vec<f64>>,
}

impl AtomBins {
    fn new(v: &DiscreteVarifold, cell: f64) -> AtomBins {
        let m = v.m;
        AtomBins {
            bins: Bins::new(cell, v.atoms.iter().map(|a| &a.point.as_slice()[..m])),
            height: v.atoms.iter().map(|a| a.point.rows(m, v.n).norm()).fold(0.0, f64::max),
            half_width: v.atoms.iter().map(|a| 0.5 * a.weight.powf(1.0 / m as f64)).fold(0.0, f64::max),
            horizontal: Plane::horizontal(m, v.n).projector,
            points: v.atoms.iter().map(|a| a.point.as_slice()[..m].to_vec()).collect(),
        }
    }

    /// Atoms that can meet the cylinder, or None when the plane is too steep
    /// for the bins to help.
    fn candidates(&self, cyl: &Cylinder, m: usize) -> Option<Vec<usize>> {
        // a point of the cylinder has horizontal offset r <= (s + w + theta H) / (1 - theta)
        let theta = (&self.horizontal - &cyl.plane.projector).norm();
        if theta >= 0.9 {
            return None;
        }
        let c = cyl.center.as_slice();
        let h = self.height + cyl.center.rows(m, c.len() - m).norm();
        let r = (cyl.radius + self.half_width + theta * h) / (1.0 - theta);
        let r = r * (1.0 + 1e-9) + 1e-12;
        let mut idx = self.bins.query(&c[..m], r);
        idx.retain(|&i| self.points[i].iter().zip(&c[..m]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r * r);
        Some(idx)
    }
}

fn tilt_term(a: &Atom, cyl: &Cylinder, pi: &Plane) -> f64 {
    let f = cyl.fraction(a);
    if f == 0.0 {
        return 0.0;
    }
    let d2 = a.projector.iter().zip(pi.projector.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    f * a.mass() * d2
}

fn tilt_at(v: &DiscreteVarifold, bins: &AtomBins, cyl: &Cylinder) -> f64 {
    let s = match bins.candidates(cyl, v.m) {
        Some(idx) => idx.iter().map(|&i| tilt_term(&v.atoms[i], cyl, &cyl.plane)).sum::<f64>(),
        None => v.atoms.iter().map(|a| tilt_term(a, cyl, &cyl.plane)).sum::<f64>(),
    };
    s / (omega(v.m) * cyl.radius.powi(v.m as i32))
}

/// E(V, C_s(y, T_y M), T_y M) for every node y and scale s. Balls may reach
/// past the grid by the largest scale, so V must be sampled that far out.
pub fn tilt_table(v: &DiscreteVarifold, geo: &SurfaceGrid, scales: &[f64]) -> Vec<Vec<f64>> {
    let cell = 0.5 * scales.iter().copied().fold(f64::INFINITY, f64::min).max(2e-3);
    let bins = AtomBins::new(v, cell);
    (0..geo.grid.len())
        .into_par_iter()
        .map(|y| scales.iter().map(|&s| tilt_at(v, &bins, &cylinder_at(geo, y, s))).collect())
        .collect()
}

/// Non-centred maximal function of the tilt excess at every node.
pub fn maximal_function(v: &DiscreteVarifold, geo: &SurfaceGrid, scales: &[f64]) -> Vec<f64> {
    let table = tilt_table(v, geo, scales);
    let coords: Vec<Vec<f64>> = (0..geo.grid.len()).map(|k| geo.grid.coords(k)).collect();
    let smax = scales.iter().copied().fold(0.0, f64::max);
    (0..geo.grid.len())
        .into_par_iter()
        .map(|x| {
            let mut best: f64 = 0.0;
            for y in geo.grid.nodes_near(x, smax + 1e-12) {
                let row = &table[y];
                let d = coords[x].iter().zip(&coords[y]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                for (&e, &s) in row.iter().zip(scales) {
                    if d <= s + 1e-12 {
                        best = best.max(e);
                    }
                }
            }
            best
        })
        .collect()
}

/// me(x) at a single node.
pub fn max_tilt(v: &DiscreteVarifold, geo: &SurfaceGrid, node: usize, scales: &[f64]) -> f64 {
    let cx = geo.grid.coords(node);
    let mut best: f64 = 0.0;
    for y in 0..geo.grid.len() {
        let cy = geo.grid.coords(y);
        let d = cx.iter().zip(&cy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        for &s in scales {
            if d <= s + 1e-12 {
                let cyl = cylinder_at(geo, y, s);
                best = best.max(tilt_excess(v, &cyl, &cyl.plane));
            }
        }
    }
    best
}

/// An atom seen from M: chart foot, normal offset, and its area in chart
/// coordinates after projection to M.
#[derive(Clone, Debug)]
pub struct ProjectedAtom {
    pub index: usize,
    pub foot: Vec<f64>,
    pub offset: DVector<f64>,
    pub chart_area: f64,
    pub density: u32,
    pub tilt: f64,
    /// atom tangent basis
    pub basis: DMatrix<f64>,
    pub point: DVector<f64>,
}

/// Atoms projected onto M once, for repeated fiber queries.
pub struct FiberIndex {
    pub geo: Arc<SurfaceGrid>,
    pub atoms: Vec<ProjectedAtom>,
    /// atoms whose projection failed or left the chart domain
    pub unprojected: usize,
    pub radius: f64,
    pub m: usize,
    bins: Bins,
    /// max half patch width in chart coordinates
    reach: f64,
}

impl FiberIndex {
    pub fn new(v: &DiscreteVarifold, geo: &Arc<SurfaceGrid>, radius: Option<f64>) -> Result<FiberIndex> {
        if v.m != geo.grid.m || v.n != geo.n() {
            return Err(LabError::Dimension("varifold and surface dimensions differ".into()));
        }
        let m = v.m;
        let found: Vec<Option<ProjectedAtom>> = v
            .atoms
            .par_iter()
            .enumerate()
            .map(|(i, a)| {
                let p = closest_point(&geo.surface, &a.point).ok()?;
                let loc = geo.surface.local(&p.x).ok()?;
                let pt = loc.frame.tangent_projector();
                let j = (a.basis.transpose() * &pt * &a.basis).determinant().max(0.0).sqrt();
                let area = a.weight * j / loc.metric.determinant().sqrt();
                Some(ProjectedAtom {
                    index: i,
                    foot: p.x.clone(),
                    offset: &a.point - &loc.point,
                    chart_area: area,
                    density: a.density,
                    tilt: (&a.projector - pt).norm_squared(),
                    basis: a.basis.clone(),
                    point: a.point.clone(),
                })
            })
            .collect();
        let unprojected = found.iter().filter(|f| f.is_none()).count();
        let atoms: Vec<ProjectedAtom> = found.into_iter().flatten().collect();
        if atoms.is_empty() {
            return Err(LabError::Empty("no atom projects onto M".into()));
        }
        let radius = match radius {
            Some(r) => r,
            None => {
                let mut w: Vec<f64> = atoms.iter().map(|a| a.chart_area.powf(1.0 / m as f64)).collect();
                w.sort_by(f64::total_cmp);
                4.0 * w[w.len() / 2]
            }
        };
        let bins = Bins::new(radius.max(1e-6), atoms.iter().map(|a| a.foot.as_slice()));
        let reach = atoms.iter().map(|a| 0.5 * a.chart_area.powf(1.0 / m as f64)).fold(0.0, f64::max);
        Ok(FiberIndex { geo: geo.clone(), atoms, unprojected, radius, m, bins, reach })
    }
}

/// Result of clustering one fiber.
#[derive(Clone, Debug)]
pub struct Fiber {
    pub value: QPoint,
    /// the density identity Theta(z) = sum_{h: p_h = y} Q_h at the base point
    pub density_match: bool,
}

struct FiberSample {
    u: Vec<f64>,
    y: DVector<f64>,
    w: f64,
    density: u32,
    /// offset transported back to the base point along the atom's tangent
    vote: DVector<f64>,
}

/// Weighted least-squares line y = c0 + C u; returns (c0, C, weighted rms).
fn fit_line(s: &[&FiberSample], m: usize) -> Option<(DVector<f64>, DMatrix<f64>, f64)> {
    let n = s.first()?.y.len();
    let total: f64 = s.iter().map(|p| p.w).sum();
    if total <= 0.0 {
        return None;
    }
    let mut a = DMatrix::zeros(s.len(), m + 1);
    let mut b = DMatrix::zeros(s.len(), n);
    for (r, p) in s.iter().enumerate() {
        let sw = p.w.sqrt();
        a[(r, 0)] = sw;
        for k in 0..m {
            a[(r, 1 + k)] = sw * p.u[k];
        }
        for c in 0..n {
            b[(r, c)] = sw * p.y[c];
        }
    }
    let sol = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
    let res = &a * &sol - &b;
    let rms = (res.norm_squared() / total).sqrt();
    let c0 = DVector::from_fn(n, |c, _| sol[(0, c)]);
    let c1 = DMatrix::from_fn(n, m, |c, k| sol[(1 + k, c)]);
    Some((c0, c1, rms))
}

fn line_at(c0: &DVector<f64>, c1: &DMatrix<f64>, u: &[f64]) -> DVector<f64> {
    c0 + c1 * DVector::from_column_slice(u)
}

/// Two-line clustering of a fiber cluster; returns the split groups if two
/// lines explain the data markedly better than one.
fn split_two_lines<'a>(s: &[&'a FiberSample], m: usize) -> Option<[Vec<&'a FiberSample>; 2]> {
    let (c0, c1, rms1) = fit_line(s, m)?;
    let scale = s.iter().map(|p| p.y.norm()).fold(0.0, f64::max).max(1e-300);
    if rms1 <= 1e-9 * scale {
        return None;
    }
    // crossing sheets leave residuals that change sign across the crossing,
    // so besides the plain sign split also try it flipped along each axis
    let res: Vec<DVector<f64>> = s.iter().map(|p| &p.y - line_at(&c0, &c1, &p.u)).collect();
    let cov = res.iter().fold(DMatrix::zeros(c0.len(), c0.len()), |acc, r| acc + r * r.transpose());
    let eig = cov.symmetric_eigen();
    let dir = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
    let along: Vec<f64> = res.iter().map(|r| r.dot(&dir)).collect();
    let mut best: Option<(f64, Vec<bool>)> = None;
    for axis in 0..=m {
        let init: Vec<bool> =
            along.iter().zip(s).map(|(a, p)| if axis == 0 { *a >= 0.0 } else { a * p.u[axis - 1] >= 0.0 }).collect();
        if let Some((rms, side)) = k_lines(s, m, init) {
            if best.as_ref().map_or(true, |(b, _)| rms < *b) {
                best = Some((rms, side));
            }
        }
    }
    let (rms2, side) = best?;
    if rms2 > 0.1 * rms1 {
        return None;
    }
    let g0: Vec<&FiberSample> = s.iter().zip(&side).filter(|(_, &b)| !b).map(|(p, _)| *p).collect();
    let g1: Vec<&FiberSample> = s.iter().zip(&side).filter(|(_, &b)| b).map(|(p, _)| *p).collect();
    Some([g0, g1])
}

fn k_lines(s: &[&FiberSample], m: usize, mut side: Vec<bool>) -> Option<(f64, Vec<bool>)> {
    let mut rms = f64::INFINITY;
    for _ in 0..30 {
        let g0: Vec<&FiberSample> = s.iter().zip(&side).filter(|(_, &b)| !b).map(|(p, _)| *p).collect();
        let g1: Vec<&FiberSample> = s.iter().zip(&side).filter(|(_, &b)| b).map(|(p, _)| *p).collect();
        if g0.len() <= m + 1 || g1.len() <= m + 1 {
            return None;
        }
        let l0 = fit_line(&g0, m)?;
        let l1 = fit_line(&g1, m)?;
        rms = l0.2.max(l1.2);
        let next: Vec<bool> = s
            .iter()
            .map(|p| (&p.y - line_at(&l1.0, &l1.1, &p.u)).norm() < (&p.y - line_at(&l0.0, &l0.1, &p.u)).norm())
            .collect();
        if next == side {
            break;
        }
        side = next;
    }
    Some((rms, side))
}

fn rounded(ratio: f64) -> Result<u32> {
    let k = ratio.round();
    if (ratio - k).abs() > 0.25 || k < 1.0 {
        return Err(LabError::Fiber(format!("multiplicity ratio {ratio:.4} is not near a positive integer")));
    }
    Ok(k as u32)
}

/// Clusters the normal offsets of atoms projecting into B_s(x).
pub fn fiber_cluster(index: &FiberIndex, node: usize, gap: f64, q: usize) -> Result<Fiber> {
    let geo = &index.geo;
    let m = index.m;
    let s = index.radius;
    let x = geo.grid.coords(node);
    let loc = &geo.local[node];
    let nu = &loc.frame.normal;
    let tau = &loc.frame.tangent;
    let samples: Vec<FiberSample> = index
        .bins
        .query(&x, s + index.reach)
        .into_iter()
        .filter_map(|i| {
            let a = &index.atoms[i];
            let u: Vec<f64> = a.foot.iter().zip(&x).map(|(f, c)| f - c).collect();
            let r = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let width = a.chart_area.powf(1.0 / m as f64);
            let frac = (0.5 + (s - r) / width).clamp(0.0, 1.0);
            if frac == 0.0 {
                return None;
            }
            let y = nu.transpose() * &a.offset;
            // slope of the atom's plane over T_x M, in orthonormal coordinates
            let t = tau.transpose() * &a.basis;
            let nn = nu.transpose() * &a.basis;
            let slope = &nn * t.try_inverse()?;
            let disp = tau.transpose() * (&a.point - &a.offset - &loc.point);
            let vote = &y - slope * disp;
            Some(FiberSample { u, y, w: frac * a.chart_area * a.density as f64, density: a.density, vote })
        })
        .collect();
    if samples.is_empty() {
        return Err(LabError::Fiber(format!("no atoms over node {node}")));
    }
    let unit = omega(m) * s.powi(m as i32);
    let ys: Vec<DVector<f64>> = samples.iter().map(|p| p.y.clone()).collect();
    let mut entries: Vec<(DVector<f64>, u32)> = Vec::new();
    for cluster in single_linkage(&ys, gap) {
        let members: Vec<&FiberSample> = cluster.iter().map(|&i| &samples[i]).collect();
        let qh = rounded(members.iter().map(|p| p.w).sum::<f64>() / unit)?;
        let groups: Vec<Vec<&FiberSample>> = match if qh == 2 { split_two_lines(&members, m) } else { None } {
            Some([a, b]) => {
                let ra = a.iter().map(|p| p.w).sum::<f64>() / unit;
                let rb = b.iter().map(|p| p.w).sum::<f64>() / unit;
                if rounded(ra).ok() == Some(1) && rounded(rb).ok() == Some(1) {
                    vec![a, b]
                } else {
                    vec![members]
                }
            }
            None => vec![members],
        };
        let split = groups.len() > 1;
        for g in groups {
            let (c0, _, _) = fit_line(&g, m).ok_or_else(|| LabError::Fiber("degenerate fiber fit".into()))?;
            entries.push((nu * c0, if split { 1 } else { qh }));
        }
    }
    let total: usize = entries.iter().map(|(_, k)| *k as usize).sum();
    if total != q {
        return Err(LabError::QMismatch(total, q));
    }
    entries.sort_by(|a, b| a.0.iter().zip(b.0.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));

    // density identity: cluster the votes at the base point and compare
    // their rounded densities with the entries they sit on
    let votes: Vec<DVector<f64>> = samples.iter().map(|p| p.vote.clone()).collect();
    let mut matched = true;
    let mut covered = vec![false; entries.len()];
    for c in single_linkage(&votes, gap) {
        let wsum: f64 = c.iter().map(|&i| samples[i].w).sum();
        let centre = c.iter().fold(DVector::zeros(votes[0].len()), |acc, &i| acc + &votes[i] * samples[i].w) / wsum;
        let theta = match rounded(wsum / unit) {
            Ok(t) => t,
            Err(_) => {
                matched = false;
                continue;
            }
        };
        let max_density = c.iter().map(|&i| samples[i].density).max().unwrap();
        let mut sum = 0;
        for (h, (p, qh)) in entries.iter().enumerate() {
            if (nu.transpose() * p - &centre).norm() <= 0.5 * gap {
                sum += qh;
                covered[h] = true;
            }
        }
        matched &= sum == theta && theta >= max_density;
    }
    matched &= covered.iter().all(|&c| c);
    Ok(Fiber { value: QPoint::new(entries)?, density_match: matched })
}

/// f on a grid over M with its good set.
#[derive(Clone, Debug)]
pub struct QSection {
    pub geo: Arc<SurfaceGrid>,
    pub q: usize,
    pub values: Vec<QPoint>,
    pub good: Vec<bool>,
}

impl QSection {
    /// max over nodes and entries of |P_T p_h|.
    pub fn normality_defect(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(k, v)| {
                let pt = self.geo.local[k].frame.tangent_projector();
                v.entries.iter().map(move |(p, _)| (&pt * p).norm())
            })
            .fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# qsection v1\ndims {} {} {}\nnodes {}\n", self.geo.grid.m, self.geo.n(), self.q, self.values.len());
        for (k, v) in self.values.iter().enumerate() {
            s += &format!("{} {} {}", k, u8::from(self.good[k]), v.entries.len());
            for (p, q) in &v.entries {
                s += &format!(" {q}");
                for c in p.iter() {
                    s += &format!(" {c}");
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(geo: &Arc<SurfaceGrid>, text: &str) -> Result<QSection> {
        let err = |line: usize, msg: &str| LabError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        if lines.next().map(|(_, l)| l) != Some("# qsection v1") {
            return Err(err(1, "missing '# qsection v1' header"));
        }
        let (ln, dims) = lines.next().ok_or_else(|| err(2, "missing dims"))?;
        let dims: Vec<usize> = dims
            .strip_prefix("dims ")
            .ok_or_else(|| err(ln, "expected 'dims m n q'"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(ln, "bad integer")))
            .collect::<Result<_>>()?;
        if dims.len() != 3 || dims[0] != geo.grid.m || dims[1] != geo.n() {
            return Err(err(ln, "dimensions do not match the grid"));
        }
        let q = dims[2];
        let (ln, nodes) = lines.next().ok_or_else(|| err(3, "missing node count"))?;
        let count: usize = nodes.strip_prefix("nodes ").and_then(|c| c.trim().parse().ok()).ok_or_else(|| err(ln, "expected 'nodes N'"))?;
        if count != geo.grid.len() {
            return Err(err(ln, "node count does not match the grid"));
        }
        let d = geo.dim();
        let mut values = Vec::with_capacity(count);
        let mut good = Vec::with_capacity(count);
        for (ln, line) in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() < 3 {
                return Err(err(ln, "truncated node line"));
            }
            let k: usize = tok[2].parse().map_err(|_| err(ln, "bad entry count"))?;
            if tok[0].parse::<usize>().ok() != Some(values.len()) || tok.len() != 3 + k * (d + 1) {
                return Err(err(ln, "malformed node line"));
            }
            good.push(tok[1] == "1");
            let mut entries = Vec::with_capacity(k);
            for e in 0..k {
                let base = 3 + e * (d + 1);
                let mult: u32 = tok[base].parse().map_err(|_| err(ln, "bad multiplicity"))?;
                let p: Vec<f64> = tok[base + 1..base + 1 + d]
                    .iter()
                    .map(|t| t.parse().map_err(|_| err(ln, "bad number")))
                    .collect::<Result<_>>()?;
                entries.push((DVector::from_vec(p), mult));
            }
            let v = QPoint::new(entries).map_err(|e| err(ln, &e.to_string()))?;
            if v.q() != q {
                return Err(err(ln, "multiplicities do not sum to Q"));
            }
            values.push(v);
        }
        if values.len() != count {
            return Err(err(0, "missing node lines"));
        }
        Ok(QSection { geo: geo.clone(), q, values, good })
    }
}

/// f-bar(x) = (1/Q) sum_h Q_h p_h.
pub fn average_section(f: &QSection) -> NormalSection {
    let d = f.geo.dim();
    let mut values = Vec::with_capacity(f.values.len() * d);
    for v in &f.values {
        values.extend(v.average().iter());
    }
    NormalSection { geo: f.geo.clone(), values }
}

#[derive(Clone, Debug)]
pub struct GoodSet {
    pub k: Vec<bool>,
    pub threshold: f64,
    /// |B \ K| on M
    pub complement_area: f64,
    /// ||V|| of the atoms over B \ K
    pub complement_mass: f64,
    /// tilt excess of V against M over the grid domain
    pub excess: f64,
    /// (complement_area + complement_mass) lambda / excess
    pub constant: f64,
    /// fraction of K nodes with a neighbour outside K
    pub boundary_fraction: f64,
}

fn nearest_node(geo: &SurfaceGrid, x: &[f64]) -> Option<usize> {
    let h = geo.grid.h();
    let mut idx = Vec::with_capacity(x.len());
    for (k, v) in x.iter().enumerate() {
        let i = ((v - geo.grid.center[k] + geo.grid.half_width) / h).round();
        if i < 0.0 || i > (geo.grid.n - 1) as f64 {
            return None;
        }
        idx.push(i as usize);
    }
    Some(geo.grid.node(&idx))
}

pub fn good_set(index: &FiberIndex, me: &[f64], opts: &ApproxOptions) -> GoodSet {
    let geo = &index.geo;
    let m = index.m;
    let threshold = opts.threshold(m);
    let k: Vec<bool> = me.iter().map(|&e| e <= threshold).collect();
    let complement_area: f64 = (0..geo.grid.len()).filter(|&i| !k[i]).map(|i| geo.area_weight(i)).sum::<f64>() + 0.0;
    let mut complement_mass = 0.0f64;
    let mut tilt = 0.0;
    for a in &index.atoms {
        if let Some(node) = nearest_node(geo, &a.foot) {
            let mass = a.chart_area * a.density as f64;
            if !k[node] {
                complement_mass += mass;
            }
            tilt += mass * a.tilt;
        }
    }
    let excess = tilt / (omega(m) * geo.grid.half_width.powi(m as i32));
    let measure = complement_area + complement_mass;
    let constant = if measure == 0.0 { 0.0 } else if excess > 0.0 { measure * opts.lambda / excess } else { f64::INFINITY };
    let mut inside = 0;
    let mut edge = 0;
    for i in 0..geo.grid.len() {
        if !k[i] {
            continue;
        }
        inside += 1;
        let touches = (0..m).any(|a| {
            [-1i64, 1].iter().any(|&s| {
                let mut off = vec![0i64; m];
                off[a] = s;
                geo.grid.shift(i, &off).map(|j| !k[j]).unwrap_or(false)
            })
        });
        if touches {
            edge += 1;
        }
    }
    let boundary_fraction = if inside == 0 { 0.0 } else { edge as f64 / inside as f64 };
    GoodSet { k, threshold, complement_area, complement_mass, excess, constant, boundary_fraction }
}

#[derive(Clone, Debug)]
pub struct ApproxReport {
    pub good: GoodSet,
    pub max_tilt: Vec<f64>,
    pub fiber_radius: f64,
    pub gap: f64,
    /// max over K pairs of G(f(x1), f(x2)) / |x1 - x2|
    pub lip: f64,
    /// lip / (lambda + delta^2)^{1/(2m)}
    pub lip_constant: f64,
    /// sup over nodes of G(f(x), Q[[0]])
    pub sup_g: f64,
    /// sup over projected atoms of d_M
    pub sup_dist: f64,
    /// K nodes whose fiber clustering failed (removed from K)
    pub failures: Vec<(usize, String)>,
    /// fraction of non-erroring K fibers where the density identity holds
    pub density_match_rate: f64,
}

/// Builds f on K from fiber clusters and extends it to the other nodes by
/// copying the nearest K value into the local normal space.
pub fn build_approximation(v: &DiscreteVarifold, geo: &Arc<SurfaceGrid>, opts: &ApproxOptions) -> Result<(QSection, ApproxReport)> {
    let index = FiberIndex::new(v, geo, opts.fiber_radius)?;
    let m = index.m;
    let me = maximal_function(v, geo, &opts.scales);
    let good = good_set(&index, &me, opts);
    let gap = opts.gap_for(m, index.radius);
    let fibers: Vec<Option<Result<Fiber>>> = (0..geo.grid.len())
        .into_par_iter()
        .map(|k| if good.k[k] { Some(fiber_cluster(&index, k, gap, opts.q)) } else { None })
        .collect();
    let k_count = good.k.iter().filter(|&&b| b).count();
    let mut failures = Vec::new();
    let mut values: Vec<Option<QPoint>> = vec![None; geo.grid.len()];
    let mut matches = 0usize;
    for (k, f) in fibers.into_iter().enumerate() {
        match f {
            Some(Ok(fiber)) => {
                matches += usize::from(fiber.density_match);
                values[k] = Some(fiber.value);
            }
            Some(Err(e)) => failures.push((k, e.to_string())),
            None => {}
        }
    }
    if k_count == 0 {
        return Err(LabError::Empty("good set".into()));
    }
    if failures.len() as f64 > opts.max_failure_frac * k_count as f64 {
        return Err(LabError::Fiber(format!("{} of {} good fibers failed; first: {}", failures.len(), k_count, failures[0].1)));
    }
    let in_k: Vec<usize> = (0..geo.grid.len()).filter(|&k| values[k].is_some()).collect();
    if in_k.is_empty() {
        return Err(LabError::Empty("no fiber could be clustered".into()));
    }
    let good_flags: Vec<bool> = (0..geo.grid.len()).map(|k| values[k].is_some()).collect();
    let coords: Vec<Vec<f64>> = (0..geo.grid.len()).map(|k| geo.grid.coords(k)).collect();
    let dist = |a: usize, b: usize| coords[a].iter().zip(&coords[b]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let filled: Vec<QPoint> = (0..geo.grid.len())
        .map(|k| {
            if let Some(v) = &values[k] {
                return v.clone();
            }
            let src = *in_k.iter().min_by(|&&a, &&b| dist(k, a).total_cmp(&dist(k, b)).then(a.cmp(&b))).unwrap();
            let pn = geo.local[k].frame.normal_projector();
            let entries = values[src]
                .as_ref()
                .unwrap()
                .entries
                .iter()
                .map(|(p, q)| {
                    let t = &pn * p;
                    let scale = if t.norm() > 0.0 { p.norm() / t.norm() } else { 0.0 };
                    (t * scale, *q)
                })
                .collect();
            QPoint { entries }
        })
        .collect();
    let lip = in_k
        .par_iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut best: f64 = 0.0;
            for &b in &in_k[i + 1..] {
                let g = metric_g(&filled[a], &filled[b]).unwrap_or(f64::INFINITY);
                best = best.max(g / dist(a, b));
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    let d = geo.dim();
    let zero = QPoint::zero(opts.q as u32, d);
    let sup_g = filled.iter().map(|v| metric_g(v, &zero).unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    let sup_dist = index.atoms.iter().map(|a| a.offset.norm()).fold(0.0, f64::max);
    let non_erroring = in_k.len();
    let report = ApproxReport {
        max_tilt: me,
        fiber_radius: index.radius,
        gap,
        lip,
        lip_constant: lip / (opts.lambda + opts.delta * opts.delta).powf(1.0 / (2.0 * m as f64)),
        sup_g,
        sup_dist,
        failures,
        density_match_rate: matches as f64 / non_erroring as f64,
        good,
    };
    Ok((QSection { geo: geo.clone(), q: opts.q, values: filled, good: good_flags }, report))
}
