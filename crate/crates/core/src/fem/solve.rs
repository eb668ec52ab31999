use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, CsrMatrix, Mat2, Point2, SolveMethod};
use crate::pullback::PulledBackProblem;
use crate::scalar::Real;
use crate::shape_param::ParamPoint;

use super::mesh::Mesh;

/// P1 function on a mesh, stored by node (zero on boundary nodes for
/// Dirichlet solutions).
#[derive(Clone, Debug)]
pub struct FemSolution<T> {
    pub mesh: Arc<Mesh<T>>,
    pub values: Vec<T>,
    pub provenance: String,
    /// Relative algebraic residual of the solve, zero for interpolants.
    pub residual: T,
    pub method: Option<SolveMethod>,
}

impl<T: Real> FemSolution<T> {
    pub fn from_nodal(mesh: Arc<Mesh<T>>, values: Vec<T>, provenance: impl Into<String>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch { expected: mesh.num_nodes(), got: values.len() });
        }
        Ok(Self { mesh, values, provenance: provenance.into(), residual: T::zero(), method: None })
    }

    /// Builds from interior dof values, zero on the boundary.
    pub fn from_dofs(mesh: Arc<Mesh<T>>, dofs: &[T], provenance: impl Into<String>) -> Result<Self> {
        if dofs.len() != mesh.num_dofs() {
            return Err(Error::DimensionMismatch { expected: mesh.num_dofs(), got: dofs.len() });
        }
        let mut values = vec![T::zero(); mesh.num_nodes()];
        for (&node, &v) in mesh.interior_nodes().iter().zip(dofs) {
            values[node] = v;
        }
        Self::from_nodal(mesh, values, provenance)
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate<F: Fn(Point2<T>) -> T>(mesh: Arc<Mesh<T>>, f: F) -> Self {
        let values = mesh.nodes.iter().map(|&p| f(p)).collect();
        Self { mesh, values, provenance: "interpolant".into(), residual: T::zero(), method: None }
    }

    pub fn dof_values(&self) -> Vec<T> {
        self.mesh.interior_nodes().iter().map(|&n| self.values[n]).collect()
    }

    /// Point evaluation; `None` outside the mesh.
    pub fn eval(&self, p: Point2<T>) -> Option<T> {
        let (t, b) = self.mesh.locate(p)?;
        let tri = self.mesh.triangles[t];
        Some(b[0] * self.values[tri[0]] + b[1] * self.values[tri[1]] + b[2] * self.values[tri[2]])
    }

    /// CSV `node_index,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "node_index,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        Ok(())
    }

    pub fn scaled_difference(&self, other: &Self, scale: T) -> Result<Self> {
        if !self.mesh.same_as(&other.mesh) {
            return Err(Error::MeshMismatch("solutions live on different meshes".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| (a - b) * scale).collect();
        Self::from_nodal(self.mesh.clone(), values, "difference")
    }
}

/// Gradients of the barycentric coordinates of a triangle and its area.
pub(crate) fn shape_gradients<T: Real>(v: &[Point2<T>; 3]) -> ([Point2<T>; 3], T) {
    let [a, b, c] = *v;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let g = [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ];
    (g, det * T::lit(0.5))
}

pub(crate) fn at_barycentric<T: Real>(v: &[Point2<T>; 3], l: [T; 3]) -> Point2<T> {
    [
        l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
        l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
    ]
}

type Element<T> = ([[T; 3]; 3], [T; 3]);

/// Galerkin assembly over `mesh` with a per-triangle constant coefficient
/// and edge-midpoint load quadrature; element integrals run in parallel and
/// are scattered in triangle order.
fn assemble<T, C, L>(mesh: &Mesh<T>, coef: C, load: L) -> Result<(CsrMatrix<T>, Vec<T>)>
where
    T: Real,
    C: Fn(usize) -> Result<Mat2<T>> + Sync,
    L: Fn(usize, [T; 3]) -> Result<T> + Sync,
{
    let half = T::lit(0.5);
    let third = T::one() / T::lit(3.0);
    let mids = [[half, half, T::zero()], [T::zero(), half, half], [half, T::zero(), half]];
    let elements: Vec<Result<Element<T>>> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let (g, area) = shape_gradients(&mesh.vertices(t));
            let c = coef(t)?;
            let mut k = [[T::zero(); 3]; 3];
            for i in 0..3 {
                let cg = c.apply(g[i]);
                for j in 0..3 {
                    k[j][i] = area * (cg[0] * g[j][0] + cg[1] * g[j][1]);
                }
            }
            let mut f = [T::zero(); 3];
            for m in mids {
                let fm = load(t, m)? * area * third;
                for i in 0..3 {
                    f[i] += fm * m[i];
                }
            }
            Ok((k, f))
        })
        .collect();
    let n = mesh.num_dofs();
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len());
    let mut rhs = vec![T::zero(); n];
    for (t, el) in elements.into_iter().enumerate() {
        let (k, f) = el?;
        let tri = mesh.triangles[t];
        for i in 0..3 {
            let Some(di) = mesh.dof(tri[i]) else { continue };
            rhs[di] += f[i];
            for j in 0..3 {
                if let Some(dj) = mesh.dof(tri[j]) {
                    triplets.push((di, dj, k[i][j]));
                }
            }
        }
    }
    Ok((CsrMatrix::from_triplets(n, &triplets), rhs))
}

fn solve_assembled<T: Real>(
    mesh: Arc<Mesh<T>>,
    matrix: CsrMatrix<T>,
    rhs: Vec<T>,
    provenance: String,
) -> Result<FemSolution<T>> {
    if mesh.num_dofs() == 0 {
        let values = vec![T::zero(); mesh.num_nodes()];
        return Ok(FemSolution { mesh, values, provenance, residual: T::zero(), method: None });
    }
    let (x, method) = solve_spd(&matrix, &rhs)?;
    let residual = crate::linalg::relative_residual(&matrix, &x, &rhs);
    let mut sol = FemSolution::from_dofs(mesh, &x, provenance)?;
    sol.residual = residual;
    sol.method = Some(method);
    Ok(sol)
}

/// P1 Galerkin solve of the pulled-back problem on the reference mesh with
/// homogeneous Dirichlet data.
pub fn assemble_and_solve<T: Real>(mesh: &Arc<Mesh<T>>, problem: &PulledBackProblem<'_, T>) -> Result<FemSolution<T>> {
    if mesh.domain != Some(problem.atlas.reference_domain) {
        return Err(Error::MeshMismatch("mesh does not discretize the atlas reference domain".into()));
    }
    let third = T::one() / T::lit(3.0);
    let (matrix, rhs) = assemble(
        mesh,
        |t| problem.coefficient(at_barycentric(&mesh.vertices(t), [third; 3])),
        |t, l| problem.rhs(at_barycentric(&mesh.vertices(t), l)),
    )?;
    solve_assembled(mesh.clone(), matrix, rhs, format!("reference solve at y = {:?}", problem.y.to_f64()))
}

/// Physical-domain oracle: maps the reference mesh through `V_y`, then
/// solves `−div(A ∇u) = f` with P1 elements on the mapped triangulation.
/// The returned solution lives on the mapped mesh.
pub fn solve_physical<T: Real>(reference: &Arc<Mesh<T>>, problem: &PulledBackProblem<'_, T>) -> Result<FemSolution<T>> {
    let atlas = problem.atlas;
    atlas.ensure_valid()?;
    if reference.domain != Some(atlas.reference_domain) {
        return Err(Error::MeshMismatch("mesh does not discretize the atlas reference domain".into()));
    }
    let y = &problem.y;
    let mapped = Arc::new(reference.mapped(|x| atlas.field_unchecked(y, x))?);
    let third = T::one() / T::lit(3.0);
    let (matrix, rhs) = assemble(
        &mapped,
        |t| {
            let p = at_barycentric(&mapped.vertices(t), [third; 3]);
            let x = at_barycentric(&reference.vertices(t), [third; 3]);
            Ok(problem.physical_coefficient(p, x))
        },
        |t, l| Ok(problem.source.value(at_barycentric(&mapped.vertices(t), l))),
    )?;
    solve_assembled(mapped, matrix, rhs, format!("physical solve at y = {:?}", y.to_f64()))
}

/// Central difference `(û_{y+εe_k} − û_{y−εe_k}) / 2ε` on the fixed
/// reference mesh.
pub fn fd_param_derivative_field<T: Real>(
    mesh: &Arc<Mesh<T>>,
    problem: &PulledBackProblem<'_, T>,
    k: usize,
    eps: T,
) -> Result<FemSolution<T>> {
    let dim = problem.y.dim();
    if k >= dim {
        return Err(Error::InvalidInput(format!("parameter index {k} out of range for dimension {dim}")));
    }
    let shifted = |sign: T| -> Result<FemSolution<T>> {
        let mut coords = problem.y.coords().to_vec();
        coords[k] += sign * eps;
        let y = ParamPoint::new(coords)?;
        assemble_and_solve(mesh, &problem.with_parameter(y)?)
    };
    let plus = shifted(T::one())?;
    let minus = shifted(-T::one())?;
    plus.scaled_difference(&minus, T::one() / (T::lit(2.0) * eps))
}

/// H¹-seminorm of the finite-difference parametric derivative.
pub fn fd_param_derivative<T: Real>(
    mesh: &Arc<Mesh<T>>,
    problem: &PulledBackProblem<'_, T>,
    k: usize,
    eps: T,
) -> Result<T> {
    Ok(super::norms::h1_seminorm(&fd_param_derivative_field(mesh, problem, k, eps)?))
}

/// Value of a P1 nodal vector at barycentric coordinates of triangle `t`.
pub(crate) fn p1_value<T: Real>(mesh: &Mesh<T>, values: &[T], t: usize, l: [T; 3]) -> T {
    let tri = mesh.triangles[t];
    l[0] * values[tri[0]] + l[1] * values[tri[1]] + l[2] * values[tri[2]]
}
