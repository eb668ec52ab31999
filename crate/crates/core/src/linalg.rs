//! Small dense and sparse linear algebra used by the solvers.
//!
//! Everything here is generic over [`Real`]; the 2×2 kernels are closed
//! form, the dense symmetric eigensolver is cyclic Jacobi, and the sparse SPD
//! solve is an envelope (skyline) Cholesky with a Jacobi-preconditioned CG
//! fallback.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A point or vector in the plane.
pub type Point2<T> = [T; 2];

/// Dense 2×2 matrix stored by rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Mat2<T> {
    pub m: [[T; 2]; 2],
}

impl<T: Real> Mat2<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn identity() -> Self {
        Self::diag(T::one(), T::one())
    }

    pub fn diag(a: T, d: T) -> Self {
        Self::new(a, T::zero(), T::zero(), d)
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn det(&self) -> T {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1]
    }

    /// Inverse, or `None` when the determinant is exactly zero.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == T::zero() {
            return None;
        }
        let inv = T::one() / det;
        Some(Self::new(
            self.m[1][1] * inv,
            -self.m[0][1] * inv,
            -self.m[1][0] * inv,
            self.m[0][0] * inv,
        ))
    }

    pub fn apply(&self, v: Point2<T>) -> Point2<T> {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn frobenius_sq(&self) -> T {
        self.m.iter().flatten().fold(T::zero(), |acc, &x| acc + x * x)
    }

    /// Singular values `(σ_min, σ_max)`.
    pub fn singular_values(&self) -> (T, T) {
        let f2 = self.frobenius_sq();
        let two_det = T::lit(2.0) * self.det().abs();
        let s1 = (f2 + two_det).sqrt();
        let s2 = (f2 - two_det).max(T::zero()).sqrt();
        let half = T::lit(0.5);
        ((s1 - s2) * half, (s1 + s2) * half)
    }

    /// Operator (spectral) norm.
    pub fn op_norm(&self) -> T {
        self.singular_values().1
    }

    /// Eigenvalues `(λ_min, λ_max)` of the symmetric part.
    pub fn sym_eigenvalues(&self) -> (T, T) {
        let half = T::lit(0.5);
        let a = self.m[0][0];
        let d = self.m[1][1];
        let b = (self.m[0][1] + self.m[1][0]) * half;
        let mean = (a + d) * half;
        let rad = (((a - d) * half).powi(2) + b * b).sqrt();
        (mean - rad, mean + rad)
    }

    pub fn asymmetry(&self) -> T {
        (self.m[0][1] - self.m[1][0]).abs()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut out = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                out = out.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        out
    }
}

impl<T: Real> Add for Mat2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }
}

impl<T: Real> Sub for Mat2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<T: Real> Neg for Mat2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self * -T::one()
    }
}

impl<T: Real> Mul for Mat2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let a = &self.m;
        let b = &o.m;
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl<T: Real> Mul<T> for Mat2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.m[0][0] * s, self.m[0][1] * s, self.m[1][0] * s, self.m[1][1] * s)
    }
}

pub fn norm2<T: Real>(v: Point2<T>) -> T {
    v[0].hypot(v[1])
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn l2_norm<T: Real>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DMat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> DMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = T::one();
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        self.data.chunks(self.cols).map(|row| dot(row, v)).collect()
    }

    pub fn transpose_mul_vec(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for (i, row) in self.data.chunks(self.cols).enumerate() {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * v[i];
            }
        }
        out
    }

    pub fn max_asymmetry(&self) -> T {
        let mut out = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                out = out.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        out
    }
}

impl<T> std::ops::Index<(usize, usize)> for DMat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DMat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigen-decomposition of a dense symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    /// Eigenvalues in ascending order.
    pub values: Vec<T>,
    /// Eigenvectors stored as columns, matching `values`.
    pub vectors: DMat<T>,
}

impl<T: Real> SymEigen<T> {
    /// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
    pub fn new(a: &DMat<T>) -> Self {
        assert_eq!(a.rows, a.cols, "square matrix required");
        let n = a.rows;
        let mut m = a.clone();
        let mut v = DMat::identity(n);
        let eps = T::epsilon();
        for _sweep in 0..100 {
            let mut off = T::zero();
            let mut diag = T::zero();
            for i in 0..n {
                diag += m[(i, i)] * m[(i, i)];
                for j in 0..n {
                    if i != j {
                        off += m[(i, j)] * m[(i, j)];
                    }
                }
            }
            if off <= eps * eps * diag || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let app = m[(p, p)];
                    let aqq = m[(q, q)];
                    let theta = (aqq - app) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkq = m[(k, q)];
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mqk = m[(q, k)];
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| m[(i, i)]).collect();
        let mut vectors = DMat::zeros(n, n);
        for (new, &old) in order.iter().enumerate() {
            for k in 0..n {
                vectors[(k, new)] = v[(k, old)];
            }
        }
        Self { values, vectors }
    }

    /// Number of eigenvalues above `rel_cutoff · λ_max`.
    pub fn effective_rank(&self, rel_cutoff: T) -> usize {
        let top = self.values.last().copied().unwrap_or(T::zero()).max(T::zero());
        self.values.iter().filter(|&&l| l > rel_cutoff * top).count()
    }

    /// Minimal-norm solution of `A x = b` restricted to the numerical range.
    pub fn pinv_solve(&self, b: &[T], rel_cutoff: T) -> Vec<T> {
        let n = self.values.len();
        let top = self.values.last().copied().unwrap_or(T::zero()).max(T::zero());
        let mut x = vec![T::zero(); n];
        for (k, &lambda) in self.values.iter().enumerate() {
            if lambda <= rel_cutoff * top {
                continue;
            }
            let mut proj = T::zero();
            for i in 0..n {
                proj += self.vectors[(i, k)] * b[i];
            }
            let scale = proj / lambda;
            for i in 0..n {
                x[i] += scale * self.vectors[(i, k)];
            }
        }
        x
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct CsrMatrix<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds a square matrix from triplets; duplicates are summed in input
    /// order so the result does not depend on how the triplets were produced.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut per_row: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            per_row[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in per_row.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .fold(T::zero(), |acc, k| acc + self.values[k] * x[self.col_idx[k]])
            })
            .collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.col_idx[k] == i)
                    .map(|k| self.values[k])
                    .unwrap_or(T::zero())
            })
            .collect()
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[T]) -> T {
        dot(x, &self.mul_vec(x))
    }
}

/// Which solver produced a solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Cholesky,
    ConjugateGradient,
}

/// Envelope Cholesky factor `L` of an SPD matrix.
struct SkylineCholesky<T> {
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> SkylineCholesky<T> {
    fn factor(a: &CsrMatrix<T>) -> Option<Self> {
        let n = a.n;
        let mut first = vec![0usize; n];
        for i in 0..n {
            let lo = (a.row_ptr[i]..a.row_ptr[i + 1]).map(|k| a.col_idx[k]).min().unwrap_or(i);
            first[i] = lo.min(i);
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut data = vec![T::zero(); offset[n]];
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[k];
                if j <= i {
                    data[offset[i] + j - first[i]] += a.values[k];
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[offset[i] + j - fi];
                let ri = offset[i] + lo - fi;
                let rj = offset[j] + lo - fj;
                for t in 0..(j - lo) {
                    s -= data[ri + t] * data[rj + t];
                }
                if j == i {
                    if !(s > T::zero()) || !s.is_finite() {
                        return None;
                    }
                    data[offset[i] + i - fi] = s.sqrt();
                } else {
                    data[offset[i] + j - fi] = s / data[offset[j] + j - fj];
                }
            }
        }
        Some(Self { first, offset, data })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for j in fi..i {
                s -= self.data[self.offset[i] + j - fi] * y[j];
            }
            y[i] = s / self.data[self.offset[i] + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.data[self.offset[i] + i - fi];
            let yi = y[i];
            for j in fi..i {
                y[j] -= self.data[self.offset[i] + j - fi] * yi;
            }
        }
        y
    }
}

fn pcg<T: Real>(a: &CsrMatrix<T>, b: &[T], tol: T, max_iter: usize) -> Option<Vec<T>> {
    let n = b.len();
    let diag = a.diagonal();
    if diag.iter().any(|&d| !(d > T::zero())) {
        return None;
    }
    let bnorm = l2_norm(b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Some(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&diag).map(|(&ri, &di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return None;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if l2_norm(&r) <= tol * bnorm {
            return Some(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    None
}

/// Relative residual `‖b − A x‖ / ‖b‖` (absolute when `b = 0`).
pub fn relative_residual<T: Real>(a: &CsrMatrix<T>, x: &[T], b: &[T]) -> T {
    let ax = a.mul_vec(x);
    let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let bn = l2_norm(b);
    let rn = l2_norm(&r);
    if bn > T::zero() {
        rn / bn
    } else {
        rn
    }
}

/// Solves an SPD system to relative residual `T::SOLVE_TOL`.
pub fn solve_spd<T: Real>(a: &CsrMatrix<T>, b: &[T]) -> Result<(Vec<T>, SolveMethod)> {
    let tol = T::lit(T::SOLVE_TOL);
    if let Some(chol) = SkylineCholesky::factor(a) {
        let mut x = chol.solve(b);
        // one step of iterative refinement
        let ax = a.mul_vec(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let dx = chol.solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
        if relative_residual(a, &x, b) <= tol {
            return Ok((x, SolveMethod::Cholesky));
        }
    }
    let x = pcg(a, b, tol * T::lit(0.1), 20 * a.n + 100)
        .ok_or_else(|| Error::SolverFailed("system is singular or indefinite".into()))?;
    let res = relative_residual(a, &x, b);
    if res > tol {
        return Err(Error::SolverFailed(format!("residual {} above tolerance", res.to_f64_lossless())));
    }
    Ok((x, SolveMethod::ConjugateGradient))
}
