use crate::error::{Error, Result};
use crate::linalg::Point2;
use crate::scalar::Real;

use super::mesh::Mesh;
use super::solve::{at_barycentric, p1_value, shape_gradients, FemSolution};

/// Degree-5 seven-point triangle rule: barycentric points and weights
/// (weights sum to one).
pub(crate) fn quadrature7<T: Real>() -> Vec<([T; 3], T)> {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let a2 = (6.0 + s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    let w2 = (155.0 + s15) / 1200.0;
    let mut out = vec![([T::lit(1.0 / 3.0); 3], T::lit(9.0 / 40.0))];
    for (a, w) in [(a1, w1), (a2, w2)] {
        let b = 1.0 - 2.0 * a;
        for l in [[a, a, b], [a, b, a], [b, a, a]] {
            out.push(([T::lit(l[0]), T::lit(l[1]), T::lit(l[2])], T::lit(w)));
        }
    }
    out
}

fn gradient_on<T: Real>(mesh: &Mesh<T>, values: &[T], t: usize) -> (Point2<T>, T) {
    let (g, area) = shape_gradients(&mesh.vertices(t));
    let tri = mesh.triangles[t];
    let mut grad = [T::zero(); 2];
    for i in 0..3 {
        grad[0] += values[tri[i]] * g[i][0];
        grad[1] += values[tri[i]] * g[i][1];
    }
    (grad, area)
}

fn h1_of<T: Real>(mesh: &Mesh<T>, values: &[T]) -> T {
    (0..mesh.triangles.len())
        .map(|t| {
            let (g, area) = gradient_on(mesh, values, t);
            area * (g[0] * g[0] + g[1] * g[1])
        })
        .sum::<T>()
        .sqrt()
}

/// `‖∇u_h‖_{L²}`, exact for piecewise-constant gradients.
pub fn h1_seminorm<T: Real>(sol: &FemSolution<T>) -> T {
    h1_of(&sol.mesh, &sol.values)
}

/// `‖∇(a − b)‖_{L²}` on a shared mesh.
pub fn h1_diff<T: Real>(a: &FemSolution<T>, b: &FemSolution<T>) -> Result<T> {
    check_same(a, b)?;
    let d: Vec<T> = a.values.iter().zip(&b.values).map(|(&x, &y)| x - y).collect();
    Ok(h1_of(&a.mesh, &d))
}

fn check_same<T: Real>(a: &FemSolution<T>, b: &FemSolution<T>) -> Result<()> {
    if !a.mesh.same_as(&b.mesh) {
        return Err(Error::MeshMismatch("norm of a difference needs a shared mesh".into()));
    }
    Ok(())
}

fn l2_of<T: Real>(mesh: &Mesh<T>, values: &[T]) -> T {
    let half = T::lit(0.5);
    let third = T::one() / T::lit(3.0);
    let mids = [[half, half, T::zero()], [T::zero(), half, half], [half, T::zero(), half]];
    (0..mesh.triangles.len())
        .map(|t| {
            let s: T = mids.iter().map(|&m| p1_value(mesh, values, t, m).powi(2)).sum();
            mesh.area(t) * third * s
        })
        .sum::<T>()
        .sqrt()
}

/// `‖u_h‖_{L²}` by the edge-midpoint rule (exact for P1 squares).
pub fn l2_norm<T: Real>(sol: &FemSolution<T>) -> T {
    l2_of(&sol.mesh, &sol.values)
}

pub fn l2_diff<T: Real>(a: &FemSolution<T>, b: &FemSolution<T>) -> Result<T> {
    check_same(a, b)?;
    let d: Vec<T> = a.values.iter().zip(&b.values).map(|(&x, &y)| x - y).collect();
    Ok(l2_of(&a.mesh, &d))
}

/// `‖u_h − u‖_{L²}` against a closed-form `u`, seven-point quadrature.
pub fn l2_error<T: Real, F: Fn(Point2<T>) -> T>(sol: &FemSolution<T>, exact: F) -> T {
    let q = quadrature7::<T>();
    let mesh = &sol.mesh;
    (0..mesh.triangles.len())
        .map(|t| {
            let v = mesh.vertices(t);
            let s: T = q
                .iter()
                .map(|&(l, w)| w * (p1_value(mesh, &sol.values, t, l) - exact(at_barycentric(&v, l))).powi(2))
                .sum();
            mesh.area(t) * s
        })
        .sum::<T>()
        .sqrt()
}

/// `‖∇u_h − ∇u‖_{L²}` against a closed-form gradient.
pub fn h1_error<T: Real, G: Fn(Point2<T>) -> Point2<T>>(sol: &FemSolution<T>, exact_grad: G) -> T {
    let q = quadrature7::<T>();
    let mesh = &sol.mesh;
    (0..mesh.triangles.len())
        .map(|t| {
            let v = mesh.vertices(t);
            let (g, area) = gradient_on(mesh, &sol.values, t);
            let s: T = q
                .iter()
                .map(|&(l, w)| {
                    let e = exact_grad(at_barycentric(&v, l));
                    w * ((g[0] - e[0]).powi(2) + (g[1] - e[1]).powi(2))
                })
                .sum();
            area * s
        })
        .sum::<T>()
        .sqrt()
}

/// H¹ seminorm of a nodal vector on `mesh`.
pub fn h1_seminorm_nodal<T: Real>(mesh: &Mesh<T>, values: &[T]) -> T {
    h1_of(mesh, values)
}
