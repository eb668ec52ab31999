use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::{norm2, Point2};
use crate::scalar::Real;
use crate::shape_param::Domain;

/// Mesh sizes accepted by [`build_mesh`]: `h = 1/n` for these `n`.
pub const SUPPORTED_DIVISIONS: [usize; 7] = [2, 4, 8, 16, 32, 64, 128];

/// Conforming P1 triangulation.
#[derive(Clone, Debug)]
pub struct Mesh<T> {
    pub nodes: Vec<Point2<T>>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_nodes: Vec<usize>,
    pub h: T,
    /// Reference domain this mesh discretizes, `None` for mapped meshes.
    pub domain: Option<Domain>,
    is_boundary: Vec<bool>,
    dof_of_node: Vec<Option<usize>>,
    interior: Vec<usize>,
    locator: Locator<T>,
}

impl<T: Real> Mesh<T> {
    /// Assembles a mesh and checks orientation and boundary indices.
    pub fn from_parts(
        nodes: Vec<Point2<T>>,
        triangles: Vec<[usize; 3]>,
        mut boundary_nodes: Vec<usize>,
        h: T,
        domain: Option<Domain>,
    ) -> Result<Self> {
        let n = nodes.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Parse(format!("triangle {t} references a missing node")));
            }
            let area = signed_area(&nodes, tri);
            if !(area > T::zero()) {
                return Err(Error::InvertedTriangle { triangle: t, area: area.to_f64_lossless() });
            }
        }
        boundary_nodes.sort_unstable();
        boundary_nodes.dedup();
        if boundary_nodes.iter().any(|&i| i >= n) {
            return Err(Error::Parse("boundary index out of range".into()));
        }
        let mut is_boundary = vec![false; n];
        for &b in &boundary_nodes {
            is_boundary[b] = true;
        }
        let mut dof_of_node = vec![None; n];
        let mut interior = Vec::new();
        for i in 0..n {
            if !is_boundary[i] {
                dof_of_node[i] = Some(interior.len());
                interior.push(i);
            }
        }
        let locator = Locator::new(&nodes, &triangles);
        Ok(Self { nodes, triangles, boundary_nodes, h, domain, is_boundary, dof_of_node, interior, locator })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.interior.len()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.is_boundary[node]
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    /// Node index of every interior dof.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn area(&self, t: usize) -> T {
        signed_area(&self.nodes, &self.triangles[t])
    }

    pub fn vertices(&self, t: usize) -> [Point2<T>; 3] {
        let tri = self.triangles[t];
        [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]]
    }

    pub fn total_area(&self) -> T {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    pub fn max_edge(&self) -> T {
        let mut out = T::zero();
        for t in 0..self.triangles.len() {
            let v = self.vertices(t);
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                out = out.max(norm2([v[a][0] - v[b][0], v[a][1] - v[b][1]]));
            }
        }
        out
    }

    /// Same connectivity with every node moved by `map`.
    pub fn mapped<F>(&self, map: F) -> Result<Self>
    where
        F: Fn(Point2<T>) -> Point2<T>,
    {
        let nodes: Vec<Point2<T>> = self.nodes.iter().map(|&p| map(p)).collect();
        Self::from_parts(nodes, self.triangles.clone(), self.boundary_nodes.clone(), self.h, None)
    }

    /// Same topology and coordinates.
    pub fn same_as(&self, other: &Self) -> bool {
        std::ptr::eq(self, other) || (self.triangles == other.triangles && self.nodes == other.nodes)
    }

    /// Containing triangle and barycentric coordinates of `p`.
    pub fn locate(&self, p: Point2<T>) -> Option<(usize, [T; 3])> {
        self.locator.locate(&self.nodes, &self.triangles, p)
    }

    /// Text format: `nodes N triangles T`, node lines, triangle lines,
    /// `boundary`, boundary indices.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "nodes {} triangles {}", self.nodes.len(), self.triangles.len())?;
        for p in &self.nodes {
            writeln!(w, "{} {}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "boundary")?;
        let idx: Vec<String> = self.boundary_nodes.iter().map(|b| b.to_string()).collect();
        writeln!(w, "{}", idx.join(" "))?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R, h: T) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::Parse("unexpected end of mesh file".into()))?.map_err(Error::from)
        };
        let header = next()?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "nodes" || parts[2] != "triangles" {
            return Err(Error::Parse(format!("bad mesh header: {header}")));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s}: {e}")));
        let parse_real = |s: &str| -> Result<T> {
            s.parse::<f64>().map(T::lit).map_err(|e| Error::Parse(format!("{s}: {e}")))
        };
        let n = parse_usize(parts[1])?;
        let t = parse_usize(parts[3])?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let line = next()?;
            let xs: Vec<&str> = line.split_whitespace().collect();
            if xs.len() != 2 {
                return Err(Error::Parse(format!("bad node line: {line}")));
            }
            nodes.push([parse_real(xs[0])?, parse_real(xs[1])?]);
        }
        let mut triangles = Vec::with_capacity(t);
        for _ in 0..t {
            let line = next()?;
            let xs: Vec<&str> = line.split_whitespace().collect();
            if xs.len() != 3 {
                return Err(Error::Parse(format!("bad triangle line: {line}")));
            }
            triangles.push([parse_usize(xs[0])?, parse_usize(xs[1])?, parse_usize(xs[2])?]);
        }
        if next()?.trim() != "boundary" {
            return Err(Error::Parse("missing boundary section".into()));
        }
        let boundary = match next() {
            Ok(line) => line.split_whitespace().map(parse_usize).collect::<Result<Vec<_>>>()?,
            Err(_) => Vec::new(),
        };
        Self::from_parts(nodes, triangles, boundary, h, None)
    }
}

pub(crate) fn signed_area<T: Real>(nodes: &[Point2<T>], tri: &[usize; 3]) -> T {
    let (a, b, c) = (nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
    ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])) * T::lit(0.5)
}

/// Validates `h = 1/n` for a supported `n`.
pub fn divisions_for<T: Real>(h: T) -> Result<usize> {
    let inv = (T::one() / h).to_f64_lossless();
    SUPPORTED_DIVISIONS
        .iter()
        .copied()
        .find(|&n| (inv - n as f64).abs() < 1e-9 * n as f64)
        .ok_or_else(|| Error::InvalidInput(format!("unsupported mesh size h = {}", h.to_f64_lossless())))
}

/// Structured square mesh (two triangles per cell) or ring-based disk mesh
/// with maximum edge length at most `h`.
pub fn build_mesh<T: Real>(domain: Domain, h: T) -> Result<Mesh<T>> {
    let n = divisions_for(h)?;
    match domain {
        Domain::UnitSquare => square_mesh(n, h),
        Domain::UnitDisk => disk_mesh(h),
    }
}

fn square_mesh<T: Real>(n: usize, h: T) -> Result<Mesh<T>> {
    let nn = T::from_usize_exact(n);
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([T::from_usize_exact(i) / nn, T::from_usize_exact(j) / nn]);
            if i == 0 || j == 0 || i == n || j == n {
                boundary.push(id(i, j));
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Mesh::from_parts(nodes, triangles, boundary, h, Some(Domain::UnitSquare))
}

fn disk_mesh<T: Real>(h: T) -> Result<Mesh<T>> {
    let hf = h.to_f64_lossless();
    let mut rings = (1.45 / hf).ceil() as usize;
    loop {
        let mesh = disk_mesh_with_rings(rings, h)?;
        if mesh.max_edge() <= h {
            return Ok(mesh);
        }
        rings += 1;
    }
}

fn disk_mesh_with_rings<T: Real>(m: usize, h: T) -> Result<Mesh<T>> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut nodes: Vec<Point2<T>> = vec![[T::zero(), T::zero()]];
    let mut ring_start = vec![0usize];
    for r in 1..=m {
        ring_start.push(nodes.len());
        let radius = r as f64 / m as f64;
        let count = 6 * r;
        for k in 0..count {
            let theta = two_pi * k as f64 / count as f64;
            nodes.push([T::lit(radius * theta.cos()), T::lit(radius * theta.sin())]);
        }
    }
    let mut triangles = Vec::new();
    for k in 0..6 {
        triangles.push([0, ring_start[1] + k, ring_start[1] + (k + 1) % 6]);
    }
    for r in 1..m {
        let (ni, no) = (6 * r, 6 * (r + 1));
        let inner = |i: usize| ring_start[r] + i % ni;
        let outer = |j: usize| ring_start[r + 1] + j % no;
        let (mut i, mut j) = (0usize, 0usize);
        while i < ni || j < no {
            let next_inner = (i + 1) as f64 / ni as f64;
            let next_outer = (j + 1) as f64 / no as f64;
            if j >= no || (i < ni && next_inner <= next_outer) {
                triangles.push([inner(i), outer(j), inner(i + 1)]);
                i += 1;
            } else {
                triangles.push([inner(i), outer(j), outer(j + 1)]);
                j += 1;
            }
        }
    }
    let boundary = (ring_start[m]..nodes.len()).collect();
    Mesh::from_parts(nodes, triangles, boundary, h, Some(Domain::UnitDisk))
}

/// Uniform bucket grid for point location.
#[derive(Clone, Debug)]
struct Locator<T> {
    lo: Point2<T>,
    cell: Point2<T>,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<T: Real> Locator<T> {
    fn new(nodes: &[Point2<T>], triangles: &[[usize; 3]]) -> Self {
        let mut lo = [T::infinity(); 2];
        let mut hi = [T::neg_infinity(); 2];
        for p in nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        if nodes.is_empty() {
            lo = [T::zero(); 2];
            hi = [T::one(); 2];
        }
        let per_axis = ((triangles.len() as f64).sqrt().ceil() as usize).max(1);
        let dims = [per_axis, per_axis];
        let cell = [
            ((hi[0] - lo[0]) / T::from_usize_exact(per_axis)).max(T::epsilon()),
            ((hi[1] - lo[1]) / T::from_usize_exact(per_axis)).max(T::epsilon()),
        ];
        let mut loc = Self { lo, cell, dims, buckets: vec![Vec::new(); per_axis * per_axis] };
        for (t, tri) in triangles.iter().enumerate() {
            let mut blo = [T::infinity(); 2];
            let mut bhi = [T::neg_infinity(); 2];
            for &i in tri {
                for d in 0..2 {
                    blo[d] = blo[d].min(nodes[i][d]);
                    bhi[d] = bhi[d].max(nodes[i][d]);
                }
            }
            let (i0, j0) = loc.cell_of(blo);
            let (i1, j1) = loc.cell_of(bhi);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * dims[0] + i].push(t);
                }
            }
        }
        loc
    }

    fn cell_of(&self, p: Point2<T>) -> (usize, usize) {
        let idx = |d: usize| {
            let f = ((p[d] - self.lo[d]) / self.cell[d]).floor().to_f64_lossless();
            (f.max(0.0) as usize).min(self.dims[d] - 1)
        };
        (idx(0), idx(1))
    }

    fn locate(&self, nodes: &[Point2<T>], triangles: &[[usize; 3]], p: Point2<T>) -> Option<(usize, [T; 3])> {
        let (i, j) = self.cell_of(p);
        let tol = T::lit(1e-10);
        let mut best: Option<(usize, [T; 3], T)> = None;
        for &t in &self.buckets[j * self.dims[0] + i] {
            let b = barycentric(nodes, &triangles[t], p);
            let worst = b.iter().copied().fold(T::infinity(), T::min);
            if worst >= -tol {
                return Some((t, b));
            }
            if best.as_ref().map_or(true, |(_, _, w)| worst > *w) {
                best = Some((t, b, worst));
            }
        }
        best.filter(|(_, _, w)| *w >= -T::lit(1e-8)).map(|(t, b, _)| (t, b))
    }
}

pub(crate) fn barycentric<T: Real>(nodes: &[Point2<T>], tri: &[usize; 3], p: Point2<T>) -> [T; 3] {
    let (a, b, c) = (nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    [T::one() - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_counts() {
        let m = build_mesh::<f64>(Domain::UnitSquare, 0.5).unwrap();
        assert_eq!((m.num_nodes(), m.triangles.len()), (9, 8));
        assert_eq!(m.num_dofs(), 1);
        let m = build_mesh::<f64>(Domain::UnitSquare, 0.25).unwrap();
        assert_eq!((m.num_nodes(), m.triangles.len()), (25, 32));
        assert_eq!(m.boundary_nodes.len(), 16);
    }

    #[test]
    fn square_area_partition() {
        for h in [0.125, 1.0 / 64.0] {
            let m = build_mesh::<f64>(Domain::UnitSquare, h).unwrap();
            assert!((m.total_area() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_nodes_lie_on_the_boundary() {
        let m = build_mesh::<f64>(Domain::UnitSquare, 0.125).unwrap();
        for i in 0..m.num_nodes() {
            let p = m.nodes[i];
            let on = p[0] == 0.0 || p[1] == 0.0 || p[0] == 1.0 || p[1] == 1.0;
            assert_eq!(on, m.is_boundary(i));
        }
    }

    #[test]
    fn disk_mesh_quality() {
        let h = 0.125;
        let m = build_mesh::<f64>(Domain::UnitDisk, h).unwrap();
        assert!(m.max_edge() <= h);
        // inscribed polygon area approaches pi from below
        let area = m.total_area();
        assert!(area < std::f64::consts::PI && area > 0.99 * std::f64::consts::PI);
        for &b in &m.boundary_nodes {
            assert!((norm2(m.nodes[b]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unsupported_size_rejected() {
        assert!(build_mesh::<f64>(Domain::UnitSquare, 0.3).is_err());
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let m = build_mesh::<f64>(Domain::UnitSquare, 0.125).unwrap();
        for p in [[0.01, 0.02], [0.5, 0.5], [0.999, 0.3], [1.0, 1.0], [0.0, 0.0]] {
            let (t, b) = m.locate(p).unwrap();
            let v = m.vertices(t);
            let q = [
                b[0] * v[0][0] + b[1] * v[1][0] + b[2] * v[2][0],
                b[0] * v[0][1] + b[1] * v[1][1] + b[2] * v[2][1],
            ];
            assert!((q[0] - p[0]).abs() < 1e-14 && (q[1] - p[1]).abs() < 1e-14);
        }
        assert!(m.locate([1.5, 0.5]).is_none());
    }

    #[test]
    fn text_round_trip() {
        let m = build_mesh::<f64>(Domain::UnitSquare, 0.25).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("nodes 25 triangles 32\n"));
        let back = Mesh::<f64>::read_text(std::io::Cursor::new(buf), 0.25).unwrap();
        assert!(back.same_as(&m));
        assert_eq!(back.boundary_nodes, m.boundary_nodes);
    }
}
