//! Frames, dual frames and weighted coefficient scales, together with the
//! encoder/decoder pair that turns shapes into coefficient sequences and
//! coefficient sequences into discrete solutions.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::norms::quadrature7;
use crate::fem::solve::{at_barycentric, p1_value};
use crate::fem::{FemSolution, Mesh};
use crate::linalg::{dot, l2_norm, solve_spd, CsrMatrix, DMat, Point2, SymEigen};
use crate::scalar::Real;
use crate::shape_param::{scaling_map, Domain, ParamPoint, ShapeAtlas, WeightSequence};

/// Panels per axis of the tensor Gauss grid.
pub const QUAD_PANELS: usize = 128;
/// Highest sine frequency per axis the grid integrates to ~1e−10.
pub const MAX_RESOLVED_FREQUENCY: usize = 40;
/// Relative eigenvalue cutoff for Gram pseudo-inverses.
pub const GRAM_CUTOFF: f64 = 1e-12;

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Composite four-point Gauss rule on `[a, b]` with `panels` panels.
fn gauss_1d<T: Real>(a: f64, b: f64, panels: usize) -> (Vec<T>, Vec<T>) {
    let w = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(4 * panels);
    let mut ws = Vec::with_capacity(4 * panels);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * w;
        for &(g, gw) in &GAUSS4 {
            xs.push(T::lit(mid + 0.5 * w * g));
            ws.push(T::lit(0.5 * w * gw));
        }
    }
    (xs, ws)
}

/// Quadrature points and weights covering a reference domain.
#[derive(Clone, Debug)]
pub struct DomainQuadrature<T> {
    pub points: Vec<Point2<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> DomainQuadrature<T> {
    /// Tensor Gauss on the square; Gauss in `r` times the periodic
    /// trapezoid rule in `θ` on the disk.
    pub fn new(domain: Domain, panels: usize) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        match domain {
            Domain::UnitSquare => {
                let (xs, ws) = gauss_1d::<T>(0.0, 1.0, panels);
                for (i, &x) in xs.iter().enumerate() {
                    for (j, &y) in xs.iter().enumerate() {
                        points.push([x, y]);
                        weights.push(ws[i] * ws[j]);
                    }
                }
            }
            Domain::UnitDisk => {
                let (rs, ws) = gauss_1d::<T>(0.0, 1.0, panels / 2);
                let m = 4 * panels;
                let dt = 2.0 * std::f64::consts::PI / m as f64;
                for (i, &r) in rs.iter().enumerate() {
                    for k in 0..m {
                        let (s, c) = T::lit(k as f64 * dt).sin_cos();
                        points.push([r * c, r * s]);
                        weights.push(ws[i] * r * T::lit(dt));
                    }
                }
            }
        }
        Self { points, weights }
    }
}

/// Finite coefficient sequence, the stored prefix of an `ℓ²` element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffSeq<T> {
    pub values: Vec<T>,
}

impl<T: Real> CoeffSeq<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![T::zero(); n] }
    }

    pub fn unit(n: usize, j: usize) -> Self {
        let mut c = Self::zeros(n);
        c.values[j] = T::one();
        c
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> T {
        l2_norm(&self.values)
    }

    /// First `n` entries.
    pub fn restrict(&self, n: usize) -> Self {
        Self { values: self.values.iter().take(n).copied().collect() }
    }

    /// Extension by zeros; longer sequences are returned unchanged.
    pub fn pad(&self, len: usize) -> Self {
        let mut values = self.values.clone();
        if values.len() < len {
            values.resize(len, T::zero());
        }
        Self { values }
    }

    /// CSV `index,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut values = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 {
                if line.trim() != "index,value" {
                    return Err(Error::Parse(format!("expected header `index,value`, got `{line}`")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (i, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `index,value`", n + 1)))?;
            let i: usize = i.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad index", n + 1)))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad value", n + 1)))?;
            if i != values.len() {
                return Err(Error::Parse(format!("line {}: index {i} out of order", n + 1)));
            }
            values.push(T::lit(v));
        }
        Ok(Self { values })
    }
}

/// `‖c‖` on the scale with weights `w` and exponent `s`: `(Σ c_j² w_j^{−2s})^{1/2}`.
#[derive(Clone, Debug)]
pub struct SmoothnessScale<T> {
    pub weights: WeightSequence<T>,
    pub exponent: T,
}

impl<T: Real> SmoothnessScale<T> {
    pub fn new(weights: WeightSequence<T>, exponent: T) -> Self {
        Self { weights, exponent }
    }
}

pub fn weighted_norm<T: Real>(scale: &SmoothnessScale<T>, c: &CoeffSeq<T>) -> Result<T> {
    let two_s = T::lit(2.0) * scale.exponent;
    let mut acc = T::zero();
    for (j, &v) in c.values.iter().enumerate() {
        let w = scale.weights.get(j + 1).ok_or_else(|| {
            Error::InvalidInput(format!("weight sequence has no entry {} and no generator", j + 1))
        })?;
        acc += v * v * w.powf(-two_s);
    }
    Ok(acc.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Onb,
    Riesz,
    Redundant,
}

/// Catalog of frame families.
#[derive(Clone, Debug)]
pub enum FrameFamily<T> {
    /// `2 sin(πk₁x₁) sin(πk₂x₂)`, ordered by `k₁² + k₂²` then `k₁`.
    SineOnb,
    /// Every sine member listed twice in a row.
    DuplicatedSine,
    /// Each sine member followed by half of itself.
    SineWithHalf,
    /// P1 hat functions of the interior nodes of a mesh; the Gram matrix is
    /// the mass matrix.
    FemNodal(Arc<Mesh<T>>),
}

/// Frequency pairs of the sine basis in frame order.
pub fn sine_pairs(count: usize) -> Vec<(usize, usize)> {
    let mut side = 1;
    loop {
        let mut pairs: Vec<(usize, usize)> =
            (1..=side).flat_map(|a| (1..=side).map(move |b| (a, b))).collect();
        pairs.sort_by_key(|&(a, b)| (a * a + b * b, a));
        // Every pair with a² + b² ≤ side² is present once side is large enough.
        let complete = pairs.iter().take_while(|&&(a, b)| a * a + b * b <= side * side).count();
        if complete >= count {
            pairs.truncate(count);
            return pairs;
        }
        side *= 2;
    }
}

/// Separable tables of `sin(πk t)` on the 1-D Gauss nodes.
#[derive(Clone, Debug)]
struct SineTables<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
    /// `table[k−1][i] = sin(πk t_i)`
    table: Vec<Vec<T>>,
}

impl<T: Real> SineTables<T> {
    fn new(kmax: usize) -> Self {
        let (nodes, weights) = gauss_1d::<T>(0.0, 1.0, QUAD_PANELS);
        let table = (1..=kmax)
            .map(|k| nodes.iter().map(|&t| (T::PI() * T::from_usize_exact(k) * t).sin()).collect())
            .collect();
        Self { nodes, weights, table }
    }
}

/// A finite section of a frame: the first `n` members, their Gram matrix
/// and its eigen-decomposition (dense families) or the sparse mass matrix
/// (FEM family).
#[derive(Clone, Debug)]
pub struct Frame<T> {
    family: FrameFamily<T>,
    n: usize,
    kind: FrameKind,
    pairs: Vec<(usize, usize)>,
    tables: Option<SineTables<T>>,
    gram: Gram<T>,
}

#[derive(Clone, Debug)]
enum Gram<T> {
    Dense { matrix: DMat<T>, eigen: SymEigen<T> },
    Sparse(CsrMatrix<T>),
}

impl<T: Real> Frame<T> {
    /// Builds the first `n` members. For the FEM family `n` must equal the
    /// number of interior nodes (or be zero to take them all).
    pub fn new(family: FrameFamily<T>, n: usize) -> Result<Self> {
        match family {
            FrameFamily::FemNodal(mesh) => {
                let n = if n == 0 { mesh.num_dofs() } else { n };
                if n != mesh.num_dofs() {
                    return Err(Error::DimensionMismatch { expected: mesh.num_dofs(), got: n });
                }
                let mass = mass_matrix(&mesh);
                Ok(Self {
                    family: FrameFamily::FemNodal(mesh),
                    n,
                    kind: FrameKind::Riesz,
                    pairs: Vec::new(),
                    tables: None,
                    gram: Gram::Sparse(mass),
                })
            }
            family => {
                if n == 0 {
                    return Err(Error::InvalidInput("frame needs at least one member".into()));
                }
                let (kind, base) = match family {
                    FrameFamily::SineOnb => (FrameKind::Onb, n),
                    _ => (FrameKind::Redundant, n.div_ceil(2)),
                };
                let pairs = sine_pairs(base);
                let kmax = pairs.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(1);
                if kmax > MAX_RESOLVED_FREQUENCY {
                    return Err(Error::UnderResolved { frequency: kmax });
                }
                let tables = SineTables::new(kmax);
                let base_gram = sine_gram(&tables, &pairs);
                let mut frame = Self {
                    family,
                    n,
                    kind,
                    pairs,
                    tables: Some(tables),
                    gram: Gram::Sparse(CsrMatrix::from_triplets(0, &[])),
                };
                let mut matrix = DMat::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let (bi, si) = frame.member_of(i);
                        let (bj, sj) = frame.member_of(j);
                        matrix[(i, j)] = si * sj * base_gram[(bi, bj)];
                    }
                }
                let eigen = SymEigen::new(&matrix);
                frame.gram = Gram::Dense { matrix, eigen };
                Ok(frame)
            }
        }
    }

    pub fn family(&self) -> &FrameFamily<T> {
        &self.family
    }

    pub fn kind(&self) -> FrameKind {
        self.kind
    }

    /// Number of members in the stored section.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mesh(&self) -> Option<&Arc<Mesh<T>>> {
        match &self.family {
            FrameFamily::FemNodal(m) => Some(m),
            _ => None,
        }
    }

    /// Base sine index and scale factor of member `j`.
    fn member_of(&self, j: usize) -> (usize, T) {
        match self.family {
            FrameFamily::SineOnb => (j, T::one()),
            FrameFamily::DuplicatedSine => (j / 2, T::one()),
            FrameFamily::SineWithHalf => (j / 2, if j % 2 == 0 { T::one() } else { T::lit(0.5) }),
            FrameFamily::FemNodal(_) => unreachable!("FEM members are hats"),
        }
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n > self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: n });
        }
        Ok(())
    }

    /// Value of member `j` at `p`.
    pub fn member(&self, j: usize, p: Point2<T>) -> T {
        match &self.family {
            FrameFamily::FemNodal(mesh) => {
                let node = mesh.interior_nodes()[j];
                match mesh.locate(p) {
                    Some((t, b)) => {
                        let tri = mesh.triangles[t];
                        (0..3).filter(|&i| tri[i] == node).map(|i| b[i]).sum()
                    }
                    None => T::zero(),
                }
            }
            _ => {
                let (b, s) = self.member_of(j);
                let (k1, k2) = self.pairs[b];
                let pi = T::PI();
                s * T::lit(2.0)
                    * (pi * T::from_usize_exact(k1) * p[0]).sin()
                    * (pi * T::from_usize_exact(k2) * p[1]).sin()
            }
        }
    }

    /// Inner products `(⟨v, ψ_j⟩)_{j<n}`.
    pub fn analyze<F: Fn(Point2<T>) -> T>(&self, v: F, n: usize) -> Result<CoeffSeq<T>> {
        self.check_n(n)?;
        match &self.family {
            FrameFamily::FemNodal(mesh) => Ok(CoeffSeq::new(fem_load(mesh, &v))),
            _ => {
                let base = self.sine_analyze(&v, n);
                Ok(CoeffSeq::new(
                    (0..n)
                        .map(|j| {
                            let (b, s) = self.member_of(j);
                            s * base[b]
                        })
                        .collect(),
                ))
            }
        }
    }

    /// Sine coefficients of `v` for the base members needed by the first `n`
    /// frame members.
    fn sine_analyze<F: Fn(Point2<T>) -> T>(&self, v: &F, n: usize) -> Vec<T> {
        let tables = self.tables.as_ref().expect("sine family");
        let nb = if n == 0 { 0 } else { self.member_of(n - 1).0 + 1 };
        let pairs = &self.pairs[..nb];
        let k2max = pairs.iter().map(|&(_, b)| b).max().unwrap_or(0);
        let q = tables.nodes.len();
        // partial[i][k2 − 1] = Σ_j w_j v(x_i, y_j) sin(πk₂y_j)
        let mut partial = vec![vec![T::zero(); k2max]; q];
        let mut row = vec![T::zero(); q];
        for (i, part) in partial.iter_mut().enumerate() {
            let x = tables.nodes[i];
            for (j, r) in row.iter_mut().enumerate() {
                *r = v([x, tables.nodes[j]]) * tables.weights[j];
            }
            for (k, slot) in part.iter_mut().enumerate() {
                *slot = dot(&row, &tables.table[k]);
            }
        }
        pairs
            .iter()
            .map(|&(k1, k2)| {
                let mut acc = T::zero();
                for i in 0..q {
                    acc += tables.weights[i] * tables.table[k1 - 1][i] * partial[i][k2 - 1];
                }
                T::lit(2.0) * acc
            })
            .collect()
    }

    /// `Σ c_j ψ_j` as a pointwise-evaluable function.
    pub fn synthesize(&self, c: &CoeffSeq<T>) -> Result<FrameFunction<'_, T>> {
        self.check_n(c.len())?;
        Ok(FrameFunction { frame: self, coeffs: c.clone() })
    }

    /// Canonical dual coefficients `⟨v, S^{−1}ψ_j⟩`: the minimal-norm
    /// solution of the Gram system with the analysis coefficients.
    pub fn dual_analyze<F: Fn(Point2<T>) -> T>(&self, v: F, n: usize) -> Result<CoeffSeq<T>> {
        let c = self.analyze(v, n)?;
        self.dual_from_analysis(&c)
    }

    /// Applies the Gram pseudo-inverse to analysis coefficients.
    pub fn dual_from_analysis(&self, c: &CoeffSeq<T>) -> Result<CoeffSeq<T>> {
        let n = c.len();
        self.check_n(n)?;
        match &self.gram {
            Gram::Sparse(mass) => {
                if n != self.n {
                    return Err(Error::DimensionMismatch { expected: self.n, got: n });
                }
                Ok(CoeffSeq::new(solve_spd(mass, &c.values)?.0))
            }
            Gram::Dense { matrix, eigen } => {
                let cutoff = T::lit(GRAM_CUTOFF);
                let local;
                let eigen = if n == self.n {
                    eigen
                } else {
                    local = SymEigen::new(&leading_block(matrix, n));
                    &local
                };
                let rank = eigen.effective_rank(cutoff);
                if self.kind != FrameKind::Redundant && rank < n {
                    return Err(Error::RankDeficient { effective_rank: rank, size: n });
                }
                Ok(CoeffSeq::new(eigen.pinv_solve(&c.values, cutoff)))
            }
        }
    }

    /// Effective rank of the leading `n × n` Gram block.
    pub fn effective_rank(&self, n: usize) -> Result<usize> {
        self.check_n(n)?;
        match &self.gram {
            Gram::Sparse(_) => Ok(self.n),
            Gram::Dense { matrix, eigen } => {
                let cutoff = T::lit(GRAM_CUTOFF);
                if n == self.n {
                    Ok(eigen.effective_rank(cutoff))
                } else {
                    Ok(SymEigen::new(&leading_block(matrix, n)).effective_rank(cutoff))
                }
            }
        }
    }

    /// Leading `n × n` block of the Gram matrix as a dense matrix.
    pub fn gram_block(&self, n: usize) -> Result<DMat<T>> {
        self.check_n(n)?;
        Ok(match &self.gram {
            Gram::Dense { matrix, .. } => leading_block(matrix, n),
            Gram::Sparse(m) => {
                let mut out = DMat::zeros(n, n);
                for i in 0..n {
                    for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                        if m.col_idx[k] < n {
                            out[(i, m.col_idx[k])] = m.values[k];
                        }
                    }
                }
                out
            }
        })
    }

    /// `(λ, Λ)`: square roots of the smallest positive and the largest Gram
    /// eigenvalue of the leading block.
    pub fn frame_bounds_estimate(&self, n: usize) -> Result<(T, T)> {
        self.check_n(n)?;
        match &self.gram {
            Gram::Dense { matrix, eigen } => {
                let local;
                let eigen = if n == self.n {
                    eigen
                } else {
                    local = SymEigen::new(&leading_block(matrix, n));
                    &local
                };
                let top = eigen.values.last().copied().unwrap_or(T::zero()).max(T::zero());
                let cutoff = T::lit(GRAM_CUTOFF) * top;
                let low = eigen.values.iter().copied().find(|&l| l > cutoff).unwrap_or(T::zero());
                Ok((low.sqrt(), top.sqrt()))
            }
            Gram::Sparse(mass) => {
                if n != self.n {
                    return Err(Error::DimensionMismatch { expected: self.n, got: n });
                }
                let (lo, hi) = extreme_eigenvalues(mass);
                Ok((lo.sqrt(), hi.sqrt()))
            }
        }
    }

    /// `L²` norm of a function by the frame's own quadrature.
    pub fn l2_norm_of<F: Fn(Point2<T>) -> T>(&self, v: F) -> T {
        match &self.family {
            FrameFamily::FemNodal(mesh) => {
                let q = quadrature7::<T>();
                (0..mesh.triangles.len())
                    .map(|t| {
                        let vs = mesh.vertices(t);
                        mesh.area(t) * q.iter().map(|&(l, w)| w * v(at_barycentric(&vs, l)).powi(2)).sum::<T>()
                    })
                    .sum::<T>()
                    .sqrt()
            }
            _ => {
                let t = self.tables.as_ref().expect("sine family");
                let mut acc = T::zero();
                for (i, &x) in t.nodes.iter().enumerate() {
                    for (j, &y) in t.nodes.iter().enumerate() {
                        acc += t.weights[i] * t.weights[j] * v([x, y]).powi(2);
                    }
                }
                acc.sqrt()
            }
        }
    }
}

fn leading_block<T: Real>(m: &DMat<T>, n: usize) -> DMat<T> {
    let mut out = DMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

fn sine_gram<T: Real>(tables: &SineTables<T>, pairs: &[(usize, usize)]) -> DMat<T> {
    let kmax = tables.table.len();
    let mut one_d = DMat::zeros(kmax, kmax);
    for a in 0..kmax {
        for b in 0..=a {
            let v: T = (0..tables.nodes.len())
                .map(|i| tables.weights[i] * tables.table[a][i] * tables.table[b][i])
                .sum();
            one_d[(a, b)] = v;
            one_d[(b, a)] = v;
        }
    }
    let n = pairs.len();
    let mut g = DMat::zeros(n, n);
    for (i, &(a1, a2)) in pairs.iter().enumerate() {
        for (j, &(b1, b2)) in pairs.iter().enumerate() {
            g[(i, j)] = T::lit(4.0) * one_d[(a1 - 1, b1 - 1)] * one_d[(a2 - 1, b2 - 1)];
        }
    }
    g
}

/// Exact P1 mass matrix on the interior nodes.
pub fn mass_matrix<T: Real>(mesh: &Mesh<T>) -> CsrMatrix<T> {
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len());
    let twelfth = T::one() / T::lit(12.0);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.area(t) * twelfth;
        for i in 0..3 {
            let Some(di) = mesh.dof(tri[i]) else { continue };
            for j in 0..3 {
                if let Some(dj) = mesh.dof(tri[j]) {
                    let v = if i == j { a * T::lit(2.0) } else { a };
                    triplets.push((di, dj, v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_dofs(), &triplets)
}

/// `∫ v φ_i` for each interior hat by the seven-point rule.
fn fem_load<T: Real, F: Fn(Point2<T>) -> T>(mesh: &Mesh<T>, v: &F) -> Vec<T> {
    let q = quadrature7::<T>();
    let mut out = vec![T::zero(); mesh.num_dofs()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let vs = mesh.vertices(t);
        let area = mesh.area(t);
        for &(l, w) in &q {
            let val = v(at_barycentric(&vs, l)) * w * area;
            for i in 0..3 {
                if let Some(d) = mesh.dof(tri[i]) {
                    out[d] += val * l[i];
                }
            }
        }
    }
    out
}

/// Largest and smallest eigenvalue of an SPD matrix by power iteration on
/// `A` and on the shifted `Λ I − A`.
fn extreme_eigenvalues<T: Real>(a: &CsrMatrix<T>) -> (T, T) {
    let n = a.n;
    if n == 0 {
        return (T::zero(), T::zero());
    }
    let power = |op: &dyn Fn(&[T]) -> Vec<T>| -> T {
        // Deterministic start vector with components along every eigenvector.
        let mut x: Vec<T> = (0..n).map(|i| T::one() + T::lit(((i * 7919) % 101) as f64 / 101.0)).collect();
        let mut lambda = T::zero();
        for _ in 0..2000 {
            let nx = l2_norm(&x);
            x.iter_mut().for_each(|v| *v /= nx);
            let y = op(&x);
            let next = dot(&x, &y);
            let done = (next - lambda).abs() <= T::lit(1e-12) * next.abs();
            lambda = next;
            x = y;
            if done {
                break;
            }
        }
        lambda
    };
    let hi = power(&|x| a.mul_vec(x));
    let shifted = power(&|x| {
        let ax = a.mul_vec(x);
        x.iter().zip(&ax).map(|(&xi, &ai)| hi * xi - ai).collect()
    });
    (hi - shifted, hi)
}

/// `Σ c_j ψ_j` for a frame section.
#[derive(Clone, Debug)]
pub struct FrameFunction<'a, T> {
    frame: &'a Frame<T>,
    pub coeffs: CoeffSeq<T>,
}

impl<T: Real> FrameFunction<'_, T> {
    pub fn eval(&self, p: Point2<T>) -> T {
        match &self.frame.family {
            FrameFamily::FemNodal(mesh) => {
                let mut values = vec![T::zero(); mesh.num_nodes()];
                for (&node, &c) in mesh.interior_nodes().iter().zip(&self.coeffs.values) {
                    values[node] = c;
                }
                match mesh.locate(p) {
                    Some((t, b)) => p1_value(mesh, &values, t, b),
                    None => T::zero(),
                }
            }
            _ => self.coeffs.values.iter().enumerate().map(|(j, &c)| c * self.frame.member(j, p)).sum(),
        }
    }

    /// Nodal interpolant on `mesh` (the exact P1 function for the FEM family
    /// on its own mesh).
    pub fn to_fem(&self, mesh: &Arc<Mesh<T>>) -> FemSolution<T> {
        if let FrameFamily::FemNodal(own) = &self.frame.family {
            if own.same_as(mesh) {
                let mut values = vec![T::zero(); mesh.num_nodes()];
                for (&node, &c) in mesh.interior_nodes().iter().zip(&self.coeffs.values) {
                    values[node] = c;
                }
                return FemSolution { values, ..FemSolution::interpolate(mesh.clone(), |_| T::zero()) };
            }
        }
        FemSolution::interpolate(mesh.clone(), |p| self.eval(p))
    }
}

/// Shape encoder: deformation fields to coefficients against the atlas
/// features (dual to the feature Gram, which equals plain analysis when the
/// features are orthonormal).
#[derive(Clone, Debug)]
pub struct Encoder<'a, T> {
    atlas: &'a ShapeAtlas<T>,
    quad: DomainQuadrature<T>,
    gram: SymEigen<T>,
}

impl<'a, T: Real> Encoder<'a, T> {
    pub fn new(atlas: &'a ShapeAtlas<T>, panels: usize) -> Self {
        let quad = DomainQuadrature::new(atlas.reference_domain, panels);
        let k = atlas.truncation_dim;
        let mut g = DMat::zeros(k, k);
        for (p, &w) in quad.points.iter().zip(&quad.weights) {
            let vals: Vec<Point2<T>> = atlas.features[..k].iter().map(|f| f.value(*p)).collect();
            for i in 0..k {
                for j in 0..=i {
                    g[(i, j)] += w * (vals[i][0] * vals[j][0] + vals[i][1] * vals[j][1]);
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                g[(j, i)] = g[(i, j)];
            }
        }
        Self { atlas, quad, gram: SymEigen::new(&g) }
    }

    pub fn dim(&self) -> usize {
        self.atlas.truncation_dim
    }

    /// Coefficients of a displacement field `x ↦ d(x)`.
    pub fn encode_field<F: Fn(Point2<T>) -> Point2<T>>(&self, d: F) -> CoeffSeq<T> {
        let k = self.dim();
        let mut c = vec![T::zero(); k];
        for (p, &w) in self.quad.points.iter().zip(&self.quad.weights) {
            let dv = d(*p);
            for (ci, f) in c.iter_mut().zip(&self.atlas.features[..k]) {
                let fv = f.value(*p);
                *ci += w * (dv[0] * fv[0] + dv[1] * fv[1]);
            }
        }
        CoeffSeq::new(self.gram.pinv_solve(&c, T::lit(GRAM_CUTOFF)))
    }

    /// Encodes the realized shape `V_y − V_0`.
    pub fn encode_shape(&self, y: &ParamPoint<T>) -> Result<CoeffSeq<T>> {
        if y.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: y.dim() });
        }
        Ok(self.encode_field(|x| {
            let v = self.atlas.field_unchecked(y, x);
            let v0 = self.atlas.nominal.value(x);
            [v[0] - v0[0], v[1] - v0[1]]
        }))
    }

    /// Closed-form encoding `(w_j y_j)`.
    pub fn encode_param(&self, y: &ParamPoint<T>) -> Result<CoeffSeq<T>> {
        Ok(CoeffSeq::new(self.atlas.encode(y)?))
    }

    /// Closed-form scaled encoding `(r w_j^s y_j)`.
    pub fn encode_scaled(&self, y: &ParamPoint<T>, r: T, s: T) -> Result<CoeffSeq<T>> {
        Ok(CoeffSeq::new(scaling_map(self.atlas, r, s, y)?))
    }
}

/// Solution decoder: coefficient sequences of length `m_out` to discrete
/// solutions `Σ c_j η_j`.
#[derive(Clone, Debug)]
pub struct Decoder<T> {
    pub frame: Arc<Frame<T>>,
    pub m_out: usize,
}

impl<T: Real> Decoder<T> {
    pub fn new(frame: Arc<Frame<T>>, m_out: usize) -> Result<Self> {
        if m_out == 0 || m_out > frame.len() {
            return Err(Error::InvalidInput(format!(
                "decoder truncation {m_out} must lie in 1..={}",
                frame.len()
            )));
        }
        Ok(Self { frame, m_out })
    }

    /// Solution coefficients: canonical dual coefficients, restricted to
    /// `m_out`. For the FEM family these are the interior nodal values.
    pub fn encode_solution(&self, u: &FemSolution<T>) -> Result<CoeffSeq<T>> {
        if let FrameFamily::FemNodal(mesh) = self.frame.family() {
            if !mesh.same_as(&u.mesh) {
                return Err(Error::MeshMismatch("solution and decoder frame use different meshes".into()));
            }
            return Ok(CoeffSeq::new(u.dof_values()).restrict(self.m_out));
        }
        let c = self.frame.dual_analyze(|p| u.eval(p).unwrap_or(T::zero()), self.m_out)?;
        Ok(c)
    }

    /// Decodes onto `mesh` (padding or restricting `c` to `m_out`).
    pub fn decode(&self, c: &CoeffSeq<T>, mesh: &Arc<Mesh<T>>) -> Result<FemSolution<T>> {
        let c = c.restrict(self.m_out).pad(self.m_out);
        Ok(self.frame.synthesize(&c)?.to_fem(mesh))
    }
}

/// The encoder of `atlas` against its features and a decoder over
/// `solution_frame` truncated to `m_out`.
pub fn make_encoder_decoder<T: Real>(
    atlas: &ShapeAtlas<T>,
    solution_frame: Arc<Frame<T>>,
    m_out: usize,
) -> Result<(Encoder<'_, T>, Decoder<T>)> {
    if atlas.truncation_dim == 0 {
        return Err(Error::InvalidInput("atlas has no active features to encode against".into()));
    }
    Ok((Encoder::new(atlas, QUAD_PANELS), Decoder::new(solution_frame, m_out)?))
}
