//! Sparse polynomial interpolation over downward-closed index sets on nested
//! Leja points, one polynomial per output coefficient.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FemSolution, Mesh};
use crate::frames::{CoeffSeq, Decoder};
use crate::scalar::Real;
use crate::shape_param::ParamPoint;

/// Grid resolution of the Leja maximization before local refinement.
pub const LEJA_GRID_POINTS: usize = 20_001;

/// Finitely supported multi-index, stored densely over the active dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn unit(dim: usize, j: usize, order: u32) -> Self {
        let mut v = vec![0; dim];
        v[j] = order;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn le(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `γ^ν = Π γ_j^{ν_j}`.
    pub fn weight(&self, gamma: &[f64]) -> f64 {
        self.0.iter().zip(gamma).filter(|(&n, _)| n > 0).map(|(&n, &g)| g.powi(n as i32)).product()
    }

    fn bumped(&self, j: usize) -> Self {
        let mut v = self.0.clone();
        v[j] += 1;
        Self(v)
    }

    fn lowered(&self, j: usize) -> Option<Self> {
        if self.0[j] == 0 {
            return None;
        }
        let mut v = self.0.clone();
        v[j] -= 1;
        Some(Self(v))
    }
}

/// Downward-closed set of multi-indices kept in an order where every index
/// follows all indices below it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexSet {
    pub dim: usize,
    pub indices: Vec<MultiIndex>,
}

impl IndexSet {
    /// Checks downward closedness and reorders by total degree.
    pub fn new(dim: usize, mut indices: Vec<MultiIndex>) -> Result<Self> {
        if indices.iter().any(|m| m.dim() != dim) {
            return Err(Error::InvalidInput(format!("all multi-indices must have dimension {dim}")));
        }
        indices.sort_by(|a, b| a.total_degree().cmp(&b.total_degree()).then_with(|| b.cmp(a)));
        indices.dedup();
        let set = Self { dim, indices };
        if !set.is_downward_closed() {
            return Err(Error::InvalidInput("index set is not downward closed".into()));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, m: &MultiIndex) -> bool {
        self.indices.contains(m)
    }

    pub fn is_downward_closed(&self) -> bool {
        let all: HashSet<&MultiIndex> = self.indices.iter().collect();
        self.indices
            .iter()
            .all(|m| (0..self.dim).all(|j| m.lowered(j).is_none_or(|l| all.contains(&l))))
    }

    pub fn max_degree(&self) -> u32 {
        self.indices.iter().flat_map(|m| m.0.iter().copied()).max().unwrap_or(0)
    }
}

#[derive(Debug)]
struct Candidate {
    weight: f64,
    index: MultiIndex,
}

impl Candidate {
    /// Larger weight first, then smaller degree, then lexicographically
    /// larger (earlier coordinates first).
    fn priority(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then_with(|| other.index.total_degree().cmp(&self.index.total_degree()))
            .then_with(|| self.index.cmp(&other.index))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.priority(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority(other)
    }
}

/// The `budget` multi-indices of largest `γ^ν` (ties: smaller `|ν|`, then
/// earlier coordinates). Entries of `γ` above one are clamped to one so that
/// the weight stays monotone along the partial order, which makes the
/// greedy set downward closed.
pub fn build_index_set(gamma: &[f64], budget: usize) -> Result<IndexSet> {
    if budget < 1 {
        return Err(Error::InvalidInput("index-set budget must be >= 1".into()));
    }
    if gamma.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidInput("gamma entries must be finite and nonnegative".into()));
    }
    let dim = gamma.len();
    let gamma: Vec<f64> = gamma.iter().map(|g| g.min(1.0)).collect();
    let mut chosen: Vec<MultiIndex> = Vec::with_capacity(budget);
    let mut in_set: HashSet<MultiIndex> = HashSet::new();
    let mut queued: HashSet<MultiIndex> = HashSet::new();
    let mut heap = BinaryHeap::new();
    let zero = MultiIndex::zero(dim);
    queued.insert(zero.clone());
    heap.push(Candidate { weight: 1.0, index: zero });
    while chosen.len() < budget {
        let Some(Candidate { index, .. }) = heap.pop() else { break };
        in_set.insert(index.clone());
        for j in 0..dim {
            let next = index.bumped(j);
            if queued.contains(&next) {
                continue;
            }
            let admissible = (0..dim).all(|i| next.lowered(i).is_none_or(|l| in_set.contains(&l)));
            if admissible {
                queued.insert(next.clone());
                heap.push(Candidate { weight: next.weight(&gamma), index: next });
            }
        }
        chosen.push(index);
    }
    Ok(IndexSet { dim, indices: chosen })
}

/// First `n` points of the symmetric Leja sequence on `[−1, 1]`
/// (`0, 1, −1`, then maximizers of `Π |z − z_i|`).
pub fn leja_points(n: usize) -> Vec<f64> {
    let mut z: Vec<f64> = [0.0, 1.0, -1.0].into_iter().take(n).collect();
    let log_prod = |z: &[f64], t: f64| z.iter().map(|&zi| (t - zi).abs().ln()).sum::<f64>();
    let step = 2.0 / (LEJA_GRID_POINTS - 1) as f64;
    while z.len() < n {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for g in 0..LEJA_GRID_POINTS {
            let t = -1.0 + g as f64 * step;
            let v = log_prod(&z, t);
            if v > best.0 {
                best = (v, t);
            }
        }
        // golden-section refinement around the best grid point
        let (mut a, mut b) = ((best.1 - step).max(-1.0), (best.1 + step).min(1.0));
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..60 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if log_prod(&z, c) > log_prod(&z, d) {
                b = d;
            } else {
                a = c;
            }
        }
        let mut t = 0.5 * (a + b);
        // the log-product is concave between nodes, so its derivative
        // Σ 1/(t − z_i) has a single sign change there
        let slope = |z: &[f64], t: f64| z.iter().map(|&zi| 1.0 / (t - zi)).sum::<f64>();
        let (mut lo, mut hi) = ((best.1 - step).max(-1.0), (best.1 + step).min(1.0));
        let between_nodes = !z.iter().any(|&zi| zi > lo && zi < hi);
        if between_nodes && slope(&z, lo) > 0.0 && slope(&z, hi) < 0.0 {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if slope(&z, mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            t = 0.5 * (lo + hi);
        }
        z.push(if log_prod(&z, t) >= best.0 { t } else { best.1 });
    }
    z
}

/// Hierarchical one-dimensional basis `h_n(t) = Π_{i<n} (t − z_i)/(z_n − z_i)`
/// for `n ≤ max`, evaluated at `t`.
fn hierarchical_basis(z: &[f64], t: f64, max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    for n in 0..=max {
        let mut v = 1.0;
        for i in 0..n {
            v *= (t - z[i]) / (z[n] - z[i]);
        }
        out.push(v);
    }
    out
}

/// Polynomial surrogate `y ↦ Σ_ν c_ν H_ν(y)` with vector surpluses `c_ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSurrogate<T> {
    pub gamma: Vec<f64>,
    pub index_set: IndexSet,
    /// Nested node sequence shared by every dimension.
    pub nodes: Vec<f64>,
    /// `surpluses[i]` belongs to `index_set.indices[i]`, one entry per output.
    pub surpluses: Vec<Vec<T>>,
    pub m_out: usize,
    /// Description of the output frame the coefficients refer to.
    pub output_frame: String,
    pub oracle_evals: usize,
}

impl<T: Real> SpectralSurrogate<T> {
    pub fn dim(&self) -> usize {
        self.index_set.dim
    }

    /// `|Λ| · m_out`.
    pub fn dof_count(&self) -> usize {
        self.index_set.len() * self.m_out
    }

    /// Interpolation node of `ν`.
    pub fn node_of(&self, m: &MultiIndex) -> Vec<f64> {
        m.0.iter().map(|&n| self.nodes[n as usize]).collect()
    }

    pub fn evaluate(&self, y: &ParamPoint<T>) -> Result<Vec<T>> {
        if y.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: y.dim() });
        }
        let yf = y.to_f64();
        let max = self.index_set.max_degree() as usize;
        let tables: Vec<Vec<f64>> = yf.iter().map(|&t| hierarchical_basis(&self.nodes, t, max)).collect();
        let mut out = vec![T::zero(); self.m_out];
        for (m, c) in self.index_set.indices.iter().zip(&self.surpluses) {
            let h: f64 = m.0.iter().enumerate().map(|(k, &n)| tables[k][n as usize]).product();
            if h == 0.0 {
                continue;
            }
            let h = T::lit(h);
            for (o, &ci) in out.iter_mut().zip(c) {
                *o += h * ci;
            }
        }
        Ok(out)
    }

    /// Decoded surrogate on `mesh`.
    pub fn evaluate_decoded(
        &self,
        y: &ParamPoint<T>,
        decoder: &Decoder<T>,
        mesh: &Arc<Mesh<T>>,
    ) -> Result<FemSolution<T>> {
        if decoder.m_out != self.m_out {
            return Err(Error::DimensionMismatch { expected: self.m_out, got: decoder.m_out });
        }
        decoder.decode(&CoeffSeq::new(self.evaluate(y)?), mesh)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let s: Self = serde_json::from_reader(r).map_err(|e| Error::Parse(e.to_string()))?;
        if s.surpluses.len() != s.index_set.len() || s.surpluses.iter().any(|c| c.len() != s.m_out) {
            return Err(Error::Parse("surplus table does not match index set and m_out".into()));
        }
        if !s.index_set.is_downward_closed() {
            return Err(Error::Parse("stored index set is not downward closed".into()));
        }
        if (s.index_set.max_degree() as usize) >= s.nodes.len() {
            return Err(Error::Parse("node sequence shorter than the index set degree".into()));
        }
        Ok(s)
    }
}

/// Interpolates `oracle` on the nodes of `index_set`: one oracle call per
/// multi-index (run concurrently, aggregated in index order), then surpluses
/// by the hierarchical difference recursion.
pub fn fit_on_index_set<T, F>(
    index_set: IndexSet,
    gamma: Vec<f64>,
    oracle: F,
    m_out: usize,
    output_frame: impl Into<String>,
) -> Result<SpectralSurrogate<T>>
where
    T: Real,
    F: Fn(&ParamPoint<T>) -> Result<Vec<T>> + Sync,
{
    if index_set.is_empty() {
        return Err(Error::InvalidInput("empty index set".into()));
    }
    let nodes = leja_points(index_set.max_degree() as usize + 1);
    let points: Vec<ParamPoint<T>> = index_set
        .indices
        .iter()
        .map(|m| ParamPoint::new(m.0.iter().map(|&n| T::lit(nodes[n as usize])).collect()))
        .collect::<Result<_>>()?;
    let values: Vec<Vec<T>> = points
        .par_iter()
        .map(|y| {
            let v = oracle(y).map_err(|e| Error::Oracle { y: y.to_f64(), source: Box::new(e) })?;
            if v.len() != m_out {
                return Err(Error::Oracle {
                    y: y.to_f64(),
                    source: Box::new(Error::DimensionMismatch { expected: m_out, got: v.len() }),
                });
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let oracle_evals = values.len();
    let position: HashMap<&MultiIndex, usize> = index_set.indices.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let max = index_set.max_degree() as usize;
    let mut surpluses: Vec<Vec<T>> = Vec::with_capacity(index_set.len());
    for (i, m) in index_set.indices.iter().enumerate() {
        let node: Vec<f64> = m.0.iter().map(|&n| nodes[n as usize]).collect();
        let tables: Vec<Vec<f64>> = node.iter().map(|&t| hierarchical_basis(&nodes, t, max)).collect();
        let mut c = values[i].clone();
        // Only μ ≤ ν contribute at z_ν, and all of them precede ν.
        for (j, mu) in index_set.indices[..i].iter().enumerate() {
            if !mu.le(m) {
                continue;
            }
            let h: f64 = mu.0.iter().enumerate().map(|(k, &n)| tables[k][n as usize]).product();
            if h == 0.0 {
                continue;
            }
            let h = T::lit(h);
            for (ci, &sj) in c.iter_mut().zip(&surpluses[j]) {
                *ci -= h * sj;
            }
        }
        debug_assert_eq!(position[m], i);
        surpluses.push(c);
    }
    Ok(SpectralSurrogate {
        gamma,
        index_set,
        nodes,
        surpluses,
        m_out,
        output_frame: output_frame.into(),
        oracle_evals,
    })
}

/// Fits with the γ-greedy index set of size `⌈budget / m_out⌉`.
pub fn fit<T, F>(
    gamma: &[f64],
    oracle: F,
    budget: usize,
    m_out: usize,
    output_frame: impl Into<String>,
) -> Result<SpectralSurrogate<T>>
where
    T: Real,
    F: Fn(&ParamPoint<T>) -> Result<Vec<T>> + Sync,
{
    if m_out == 0 {
        return Err(Error::InvalidInput("m_out must be >= 1".into()));
    }
    let set = build_index_set(gamma, budget.div_ceil(m_out))?;
    fit_on_index_set(set, gamma.to_vec(), oracle, m_out, output_frame)
}

/// Default output truncation `max(16, N/4)`.
pub fn default_m_out(budget: usize) -> usize {
    (budget / 4).max(16)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leja_start_and_spread() {
        let z = leja_points(6);
        assert_eq!(&z[..3], &[0.0, 1.0, -1.0]);
        assert!(z.iter().all(|t| t.abs() <= 1.0));
        // fourth point maximizes |t (t−1)(t+1)|: t = ±1/√3
        assert!((z[3].abs() - 1.0 / 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn hierarchical_basis_is_triangular() {
        let z = leja_points(5);
        for n in 0..5 {
            let h = hierarchical_basis(&z, z[n], 4);
            assert!((h[n] - 1.0).abs() < 1e-14);
            assert!(h[n + 1..].iter().all(|&v| v.abs() < 1e-14));
        }
    }
}
