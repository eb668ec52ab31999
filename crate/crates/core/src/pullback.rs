//! Pullback of physical-domain diffusion problems to the reference domain.
//!
//! For `V_y : D_ref → D_y` with Jacobian `J`, the Poisson problem on `D_y`
//! becomes a diffusion problem on `D_ref` with coefficient
//! `(JᵀJ)^{-1} det J` and load `(f ∘ V_y) det J`. Heterogeneous media use
//! `J^{-1} A J^{-ᵀ} det J`, with `A` composed with `V_y` (Eulerian) or taken
//! as is (Lagrangian).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, Mat2, Point2};
use crate::scalar::Real;
use crate::shape_param::{ParamPoint, ShapeAtlas, UniformityReport, UNIFORMITY_GRID_POINTS};

/// Max Newton iterations for pointwise inversion of `V_y`.
pub const NEWTON_MAX_ITER: usize = 50;

/// Load catalog, defined on the hold-all domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Constant { value: f64 },
    /// `amplitude · sin(π k₁ x₁) sin(π k₂ x₂)`
    SineProduct { amplitude: f64, k1: u32, k2: u32 },
    /// `c0 + c1 x₁ + c2 x₂`
    Linear { c0: f64, c1: f64, c2: f64 },
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::Constant { value: 1.0 }
    }
}

impl SourceSpec {
    /// Load `2π² sin(πx₁) sin(πx₂)`, whose solution on the unit square is
    /// `sin(πx₁) sin(πx₂)`.
    pub fn manufactured() -> Self {
        SourceSpec::SineProduct { amplitude: 2.0 * std::f64::consts::PI.powi(2), k1: 1, k2: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothness {
    Analytic,
    Piecewise,
}

/// A scalar source `f` on the hold-all domain.
#[derive(Clone, Debug)]
pub struct SourceField<T> {
    spec: SourceSpec,
    params: [T; 3],
}

impl<T: Real> SourceField<T> {
    pub fn new(spec: SourceSpec) -> Self {
        let params = match &spec {
            SourceSpec::Constant { value } => [T::lit(*value), T::zero(), T::zero()],
            SourceSpec::SineProduct { amplitude, k1, k2 } => {
                [T::lit(*amplitude), T::lit(*k1 as f64), T::lit(*k2 as f64)]
            }
            SourceSpec::Linear { c0, c1, c2 } => [T::lit(*c0), T::lit(*c1), T::lit(*c2)],
        };
        Self { spec, params }
    }

    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    pub fn smoothness(&self) -> Smoothness {
        Smoothness::Analytic
    }

    pub fn value(&self, p: Point2<T>) -> T {
        let [a, b, c] = self.params;
        match self.spec {
            SourceSpec::Constant { .. } => a,
            SourceSpec::SineProduct { .. } => {
                let pi = T::PI();
                a * (pi * b * p[0]).sin() * (pi * c * p[1]).sin()
            }
            SourceSpec::Linear { .. } => a + b * p[0] + c * p[1],
        }
    }
}

/// Axis-aligned box `[x0, x1) × [y0, y1)` or half-plane `n·x < offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Box { x0: f64, x1: f64, y0: f64, y1: f64 },
    HalfPlane { normal: [f64; 2], offset: f64 },
}

impl Region {
    fn contains<T: Real>(&self, p: Point2<T>) -> bool {
        let (x, y) = (p[0].to_f64_lossless(), p[1].to_f64_lossless());
        match *self {
            Region::Box { x0, x1, y0, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Region::HalfPlane { normal, offset } => normal[0] * x + normal[1] * y < offset,
        }
    }
}

/// One piece `α_i · 1_{S_i}` of a piecewise-constant coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub region: Region,
    pub value: f64,
}

/// Diffusion coefficient catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSpec {
    /// Constant symmetric matrix.
    Constant { matrix: [[f64; 2]; 2] },
    /// `(a0 + a1 sin(π ω x₁) sin(π ω x₂)) I`
    SmoothTrig { a0: f64, a1: f64, freq: f64 },
    /// `Σ α_i 1_{S_i} I`; the first matching piece wins, `default` elsewhere.
    Piecewise { pieces: Vec<Piece>, default: f64 },
}

impl DiffusionSpec {
    pub fn isotropic(a: f64) -> Self {
        DiffusionSpec::Constant { matrix: [[a, 0.0], [0.0, a]] }
    }

    /// `α₁` on `x₁ < 0.5`, `α₂` elsewhere.
    pub fn left_right(alpha1: f64, alpha2: f64) -> Self {
        DiffusionSpec::Piecewise {
            pieces: vec![Piece {
                region: Region::HalfPlane { normal: [1.0, 0.0], offset: 0.5 },
                value: alpha1,
            }],
            default: alpha2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameOfReference {
    /// Defined on the hold-all domain, composed with `V_y`.
    Eulerian,
    /// Defined on the reference domain.
    Lagrangian,
}

/// A uniformly elliptic SPD matrix field.
#[derive(Clone, Debug)]
pub struct DiffusionField<T> {
    spec: DiffusionSpec,
    pub frame_of_reference: FrameOfReference,
    pub ellipticity: (T, T),
}

impl<T: Real> DiffusionField<T> {
    pub fn new(spec: DiffusionSpec, frame_of_reference: FrameOfReference) -> Result<Self> {
        let (lo, hi) = match &spec {
            DiffusionSpec::Constant { matrix } => {
                if matrix[0][1] != matrix[1][0] {
                    return Err(Error::InvalidInput("constant diffusion matrix must be symmetric".into()));
                }
                let m = Mat2::new(matrix[0][0], matrix[0][1], matrix[1][0], matrix[1][1]);
                m.sym_eigenvalues()
            }
            DiffusionSpec::SmoothTrig { a0, a1, .. } => (a0 - a1.abs(), a0 + a1.abs()),
            DiffusionSpec::Piecewise { pieces, default } => pieces
                .iter()
                .map(|p| p.value)
                .fold((*default, *default), |(lo, hi), v| (lo.min(v), hi.max(v))),
        };
        if !(lo > 0.0) {
            return Err(Error::NotSpd { x: f64::NAN, y: f64::NAN });
        }
        Ok(Self { spec, frame_of_reference, ellipticity: (T::lit(lo), T::lit(hi)) })
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    pub fn smoothness(&self) -> Smoothness {
        match self.spec {
            DiffusionSpec::Piecewise { .. } => Smoothness::Piecewise,
            _ => Smoothness::Analytic,
        }
    }

    pub fn value(&self, p: Point2<T>) -> Mat2<T> {
        match &self.spec {
            DiffusionSpec::Constant { matrix } => Mat2::new(
                T::lit(matrix[0][0]),
                T::lit(matrix[0][1]),
                T::lit(matrix[1][0]),
                T::lit(matrix[1][1]),
            ),
            DiffusionSpec::SmoothTrig { a0, a1, freq } => {
                let w = T::PI() * T::lit(*freq);
                let a = T::lit(*a0) + T::lit(*a1) * (w * p[0]).sin() * (w * p[1]).sin();
                Mat2::diag(a, a)
            }
            DiffusionSpec::Piecewise { pieces, default } => {
                let a = pieces.iter().find(|piece| piece.region.contains(p)).map_or(*default, |piece| piece.value);
                Mat2::diag(T::lit(a), T::lit(a))
            }
        }
    }
}

/// Which physical model is pulled back.
#[derive(Clone, Debug)]
pub enum Model<T> {
    Poisson,
    DiffusionEulerian(DiffusionField<T>),
    DiffusionLagrangian(DiffusionField<T>),
}

/// Coefficient `A_ref_y` and load `f_ref_y` on the reference domain.
#[derive(Clone, Debug)]
pub struct PulledBackProblem<'a, T> {
    pub atlas: &'a ShapeAtlas<T>,
    pub y: ParamPoint<T>,
    pub model: Model<T>,
    pub source: SourceField<T>,
}

fn map_point<T: Real>(x: Point2<T>) -> (f64, f64) {
    (x[0].to_f64_lossless(), x[1].to_f64_lossless())
}

fn symmetrize<T: Real>(m: Mat2<T>) -> Mat2<T> {
    let off = (m.m[0][1] + m.m[1][0]) * T::lit(0.5);
    Mat2::new(m.m[0][0], off, off, m.m[1][1])
}

impl<'a, T: Real> PulledBackProblem<'a, T> {
    fn checked(atlas: &'a ShapeAtlas<T>, y: ParamPoint<T>, model: Model<T>, source: SourceField<T>) -> Result<Self> {
        atlas.ensure_valid()?;
        if y.dim() != atlas.truncation_dim {
            return Err(Error::DimensionMismatch { expected: atlas.truncation_dim, got: y.dim() });
        }
        let problem = Self { atlas, y, model, source };
        problem.check_coefficient_spd()?;
        Ok(problem)
    }

    /// Sampled SPD check of the physical coefficient at mapped grid points.
    fn check_coefficient_spd(&self) -> Result<()> {
        let field = match &self.model {
            Model::Poisson => return Ok(()),
            Model::DiffusionEulerian(a) | Model::DiffusionLagrangian(a) => a,
        };
        for x in self.atlas.reference_domain.sample_grid::<T>(UNIFORMITY_GRID_POINTS) {
            let at = match self.model {
                Model::DiffusionEulerian(_) => self.atlas.field_unchecked(&self.y, x),
                _ => x,
            };
            let a = field.value(at);
            let (lo, _) = a.sym_eigenvalues();
            if !(lo > T::zero()) || a.asymmetry() > T::epsilon() * a.frobenius_sq().sqrt() {
                let (px, py) = map_point(at);
                return Err(Error::NotSpd { x: px, y: py });
            }
        }
        Ok(())
    }

    /// Poisson: `A_ref = (JᵀJ)^{-1} det J`, `f_ref = (f ∘ V_y) det J`.
    pub fn poisson(atlas: &'a ShapeAtlas<T>, y: ParamPoint<T>, source: SourceField<T>) -> Result<Self> {
        Self::checked(atlas, y, Model::Poisson, source)
    }

    pub fn diffusion_eulerian(
        atlas: &'a ShapeAtlas<T>,
        y: ParamPoint<T>,
        a: DiffusionField<T>,
        source: SourceField<T>,
    ) -> Result<Self> {
        if a.frame_of_reference != FrameOfReference::Eulerian {
            return Err(Error::InvalidInput("Eulerian pullback needs an Eulerian coefficient".into()));
        }
        Self::checked(atlas, y, Model::DiffusionEulerian(a), source)
    }

    pub fn diffusion_lagrangian(
        atlas: &'a ShapeAtlas<T>,
        y: ParamPoint<T>,
        a: DiffusionField<T>,
        source: SourceField<T>,
    ) -> Result<Self> {
        if a.frame_of_reference != FrameOfReference::Lagrangian {
            return Err(Error::InvalidInput("Lagrangian pullback needs a Lagrangian coefficient".into()));
        }
        Self::checked(atlas, y, Model::DiffusionLagrangian(a), source)
    }

    /// Same model and source at another parameter.
    pub fn with_parameter(&self, y: ParamPoint<T>) -> Result<Self> {
        Self::checked(self.atlas, y, self.model.clone(), self.source.clone())
    }

    fn jacobian_checked(&self, x: Point2<T>) -> Result<Mat2<T>> {
        let j = self.atlas.jacobian_unchecked(&self.y, x);
        let det = j.det();
        if !(det > T::zero()) {
            let (px, py) = map_point(x);
            return Err(Error::NonPositiveJacobian { det: det.to_f64_lossless(), x: px, y: py });
        }
        Ok(j)
    }

    /// `A_ref_y(x)`.
    pub fn coefficient(&self, x: Point2<T>) -> Result<Mat2<T>> {
        let j = self.jacobian_checked(x)?;
        let det = j.det();
        let jinv = j.inverse().expect("positive determinant");
        Ok(match &self.model {
            Model::Poisson => {
                let jtj = j.transpose() * j;
                jtj.inverse().expect("positive determinant") * det
            }
            Model::DiffusionEulerian(a) => {
                let v = self.atlas.field_unchecked(&self.y, x);
                symmetrize(jinv * a.value(v) * jinv.transpose() * det)
            }
            Model::DiffusionLagrangian(a) => symmetrize(jinv * a.value(x) * jinv.transpose() * det),
        })
    }

    /// `f_ref_y(x) = f(V_y(x)) det J_y(x)`.
    pub fn rhs(&self, x: Point2<T>) -> Result<T> {
        let j = self.jacobian_checked(x)?;
        Ok(self.source.value(self.atlas.field_unchecked(&self.y, x)) * j.det())
    }

    /// The physical coefficient at the image of `x_ref`: identity for
    /// Poisson, `A(p)` for Eulerian, `A(x_ref)` for Lagrangian.
    pub fn physical_coefficient(&self, p: Point2<T>, x_ref: Point2<T>) -> Mat2<T> {
        match &self.model {
            Model::Poisson => Mat2::identity(),
            Model::DiffusionEulerian(a) => a.value(p),
            Model::DiffusionLagrangian(a) => a.value(x_ref),
        }
    }

    /// `(a_−, a_+)` of the physical coefficient.
    pub fn physical_ellipticity(&self) -> (T, T) {
        match &self.model {
            Model::Poisson => (T::one(), T::one()),
            Model::DiffusionEulerian(a) | Model::DiffusionLagrangian(a) => a.ellipticity,
        }
    }

    /// Eigenvalue bounds `[a_− σ_min² / σ_max², a_+ σ_max² / σ_min²]` implied
    /// by the sampled singular values (d = 2).
    pub fn ellipticity_bounds(&self, uniformity: &UniformityReport<T>) -> (T, T) {
        let (am, ap) = self.physical_ellipticity();
        let (lo, hi) = (uniformity.sigma_min, uniformity.sigma_max);
        (am * lo * lo / (hi * hi), ap * hi * hi / (lo * lo))
    }
}

/// Solves `V_y(x) = p` by damped Newton from `x = p`.
pub fn invert_map<T: Real>(atlas: &ShapeAtlas<T>, y: &ParamPoint<T>, p: Point2<T>) -> Result<Point2<T>> {
    if y.dim() != atlas.truncation_dim {
        return Err(Error::DimensionMismatch { expected: atlas.truncation_dim, got: y.dim() });
    }
    let tol = T::lit(T::NEWTON_TOL) * T::one().max(norm2(p));
    let residual = |x: Point2<T>| {
        let v = atlas.field_unchecked(y, x);
        [v[0] - p[0], v[1] - p[1]]
    };
    let mut x = p;
    let mut r = residual(x);
    let mut rn = norm2(r);
    for _ in 0..NEWTON_MAX_ITER {
        if rn <= tol {
            break;
        }
        let jinv = match atlas.jacobian_unchecked(y, x).inverse() {
            Some(m) => m,
            None => break,
        };
        let dx = jinv.apply(r);
        let mut t = T::one();
        loop {
            let cand = [x[0] - t * dx[0], x[1] - t * dx[1]];
            let rc = residual(cand);
            let rcn = norm2(rc);
            if rcn < (T::one() - t * T::lit(0.5)) * rn || t < T::lit(1.0 / 1024.0) {
                x = cand;
                r = rc;
                rn = rcn;
                break;
            }
            t *= T::lit(0.5);
        }
    }
    if !(rn <= tol) {
        let (px, py) = map_point(p);
        return Err(Error::NewtonFailed { x: px, y: py, residual: rn.to_f64_lossless() });
    }
    if !atlas.reference_domain.contains(x) {
        let (px, py) = map_point(x);
        return Err(Error::OutsideDomain { x: px, y: py });
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `û ↦ û ∘ V_y^{-1}` (reference to physical).
    Forward,
    /// `u ↦ u ∘ V_y` (physical to reference).
    Backward,
}

/// Moves a scalar function between `D_ref` and `D_y`.
pub fn transport_solution<'a, T, F>(
    atlas: &'a ShapeAtlas<T>,
    y: &'a ParamPoint<T>,
    u: F,
    direction: Direction,
) -> impl Fn(Point2<T>) -> Result<T> + 'a
where
    T: Real,
    F: Fn(Point2<T>) -> T + 'a,
{
    move |p| match direction {
        Direction::Forward => invert_map(atlas, y, p).map(&u),
        Direction::Backward => atlas.evaluate_field(y, p).map(&u),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape_param::{Domain, FieldSpec, WeightSequence};

    fn affine_atlas(m: [[f64; 2]; 2], b: [f64; 2]) -> ShapeAtlas<f64> {
        ShapeAtlas::new(Domain::UnitSquare, FieldSpec::affine(m, b), vec![], WeightSequence::from_values(vec![]).unwrap(), 0)
            .unwrap()
    }

    fn sine_atlas(c: f64) -> ShapeAtlas<f64> {
        ShapeAtlas::new(
            Domain::UnitSquare,
            FieldSpec::identity(),
            FieldSpec::sine_catalog(4),
            WeightSequence::from_values(vec![c, c / 2.0, c / 4.0, c / 8.0]).unwrap(),
            4,
        )
        .unwrap()
    }

    fn src() -> SourceField<f64> {
        SourceField::new(SourceSpec::Linear { c0: 1.0, c1: 0.5, c2: -0.25 })
    }

    #[test]
    fn identity_pullback_is_trivial() {
        let atlas = ShapeAtlas::identity(Domain::UnitSquare);
        let p = PulledBackProblem::poisson(&atlas, ParamPoint::zeros(0), src()).unwrap();
        let x = [0.3, 0.6];
        assert!(p.coefficient(x).unwrap().max_abs_diff(&Mat2::identity()) < 1e-15);
        assert!((p.rhs(x).unwrap() - src().value(x)).abs() < 1e-15);
    }

    #[test]
    fn diagonal_pullback_closed_form() {
        let atlas = affine_atlas([[2.0, 0.0], [0.0, 3.0]], [0.0, 0.0]);
        let p = PulledBackProblem::poisson(&atlas, ParamPoint::zeros(0), src()).unwrap();
        let x = [0.25, 0.5];
        let c = p.coefficient(x).unwrap();
        assert!(c.max_abs_diff(&Mat2::diag(1.5, 2.0 / 3.0)) < 1e-15);
        let expected = src().value([0.5, 1.5]) * 6.0;
        assert!((p.rhs(x).unwrap() - expected).abs() < 1e-14);

        let a = DiffusionField::new(DiffusionSpec::isotropic(2.0), FrameOfReference::Eulerian).unwrap();
        let e = PulledBackProblem::diffusion_eulerian(&atlas, ParamPoint::zeros(0), a, src()).unwrap();
        assert!(e.coefficient(x).unwrap().max_abs_diff(&Mat2::diag(3.0, 4.0 / 3.0)) < 1e-14);
    }

    #[test]
    fn eulerian_with_identity_matrix_matches_poisson() {
        let atlas = sine_atlas(0.03);
        let y = ParamPoint::new(vec![0.7, -0.4, 1.0, -1.0]).unwrap();
        let p = PulledBackProblem::poisson(&atlas, y.clone(), src()).unwrap();
        let a = DiffusionField::new(DiffusionSpec::isotropic(1.0), FrameOfReference::Eulerian).unwrap();
        let e = PulledBackProblem::diffusion_eulerian(&atlas, y, a, src()).unwrap();
        for x in [[0.1, 0.9], [0.5, 0.5], [0.77, 0.2]] {
            assert!(e.coefficient(x).unwrap().max_abs_diff(&p.coefficient(x).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn identity_map_keeps_diffusion() {
        let atlas = ShapeAtlas::identity(Domain::UnitSquare);
        let spec = DiffusionSpec::SmoothTrig { a0: 2.0, a1: 0.5, freq: 1.0 };
        let a = DiffusionField::new(spec.clone(), FrameOfReference::Lagrangian).unwrap();
        let l = PulledBackProblem::diffusion_lagrangian(&atlas, ParamPoint::zeros(0), a.clone(), src()).unwrap();
        let x = [0.3, 0.45];
        assert!(l.coefficient(x).unwrap().max_abs_diff(&a.value(x)) < 1e-15);
        let a = DiffusionField::new(spec, FrameOfReference::Eulerian).unwrap();
        let e = PulledBackProblem::diffusion_eulerian(&atlas, ParamPoint::zeros(0), a.clone(), src()).unwrap();
        assert!(e.coefficient(x).unwrap().max_abs_diff(&a.value(x)) < 1e-15);
    }

    #[test]
    fn piecewise_lagrangian_blockwise() {
        let atlas = affine_atlas([[2.0, 0.0], [0.0, 1.0]], [0.0, 0.0]);
        let a = DiffusionField::new(DiffusionSpec::left_right(1.0, 10.0), FrameOfReference::Lagrangian).unwrap();
        let l = PulledBackProblem::diffusion_lagrangian(&atlas, ParamPoint::zeros(0), a, src()).unwrap();
        assert!(l.coefficient([0.2, 0.5]).unwrap().max_abs_diff(&Mat2::diag(0.5, 2.0)) < 1e-15);
        assert!(l.coefficient([0.8, 0.5]).unwrap().max_abs_diff(&Mat2::diag(5.0, 20.0)) < 1e-14);
    }

    #[test]
    fn frames_agree_for_constant_coefficient() {
        let atlas = sine_atlas(0.03);
        let y = ParamPoint::new(vec![-0.2, 0.9, 0.1, 0.5]).unwrap();
        let spec = DiffusionSpec::Constant { matrix: [[2.0, 0.3], [0.3, 1.0]] };
        let e = PulledBackProblem::diffusion_eulerian(
            &atlas,
            y.clone(),
            DiffusionField::new(spec.clone(), FrameOfReference::Eulerian).unwrap(),
            src(),
        )
        .unwrap();
        let l = PulledBackProblem::diffusion_lagrangian(
            &atlas,
            y,
            DiffusionField::new(spec, FrameOfReference::Lagrangian).unwrap(),
            src(),
        )
        .unwrap();
        for x in atlas.reference_domain.sample_grid::<f64>(9) {
            assert!(e.coefficient(x).unwrap().max_abs_diff(&l.coefficient(x).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn wrong_frame_or_indefinite_is_rejected() {
        let atlas = ShapeAtlas::identity(Domain::UnitSquare);
        let a = DiffusionField::new(DiffusionSpec::isotropic(1.0), FrameOfReference::Lagrangian).unwrap();
        assert!(PulledBackProblem::diffusion_eulerian(&atlas, ParamPoint::zeros(0), a, src()).is_err());
        assert!(DiffusionField::<f64>::new(DiffusionSpec::isotropic(-1.0), FrameOfReference::Eulerian).is_err());
        assert!(DiffusionField::<f64>::new(DiffusionSpec::SmoothTrig { a0: 1.0, a1: 2.0, freq: 1.0 }, FrameOfReference::Eulerian).is_err());
    }

    #[test]
    fn coefficient_symmetric_and_elliptic_on_samples() {
        let atlas = sine_atlas(0.04);
        let u = atlas.check_uniformity(16, 17, 3).unwrap();
        for y in crate::shape_param::sample_cube_many::<f64>(11, 4, 10) {
            let p = PulledBackProblem::poisson(&atlas, y, src()).unwrap();
            let (lo, hi) = p.ellipticity_bounds(&u);
            for x in atlas.reference_domain.sample_grid::<f64>(11) {
                let c = p.coefficient(x).unwrap();
                assert!(c.asymmetry() <= 1e-14);
                let (el, eh) = c.sym_eigenvalues();
                assert!(el >= lo * (1.0 - 1e-12) && eh <= hi * (1.0 + 1e-12));
                // det(A_ref) = det(A ∘ V) = 1 in d = 2
                assert!((c.det() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transport_identity_and_translation() {
        let atlas = ShapeAtlas::identity(Domain::UnitSquare);
        let y = ParamPoint::zeros(0);
        let f = transport_solution(&atlas, &y, |x: Point2<f64>| x[0] * x[1], Direction::Forward);
        assert!((f([0.3, 0.4]).unwrap() - 0.12).abs() < 1e-15);

        let shifted = affine_atlas([[1.0, 0.0], [0.0, 1.0]], [0.1, 0.0]);
        let fwd = transport_solution(&shifted, &y, |x: Point2<f64>| x[0], Direction::Forward);
        assert!((fwd([0.6, 0.5]).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn transport_round_trip() {
        let atlas = sine_atlas(0.04);
        let y = ParamPoint::new(vec![1.0, -0.5, 0.3, 0.8]).unwrap();
        for x in atlas.reference_domain.sample_grid::<f64>(7) {
            let p = atlas.evaluate_field(&y, x).unwrap();
            let back = invert_map(&atlas, &y, p).unwrap();
            assert!(norm2([back[0] - x[0], back[1] - x[1]]) < 1e-10);
        }
    }

    #[test]
    fn newton_rejects_points_outside() {
        let atlas = ShapeAtlas::identity(Domain::UnitSquare);
        assert!(invert_map(&atlas, &ParamPoint::zeros(0), [1.5, 0.5]).is_err());
    }
}
