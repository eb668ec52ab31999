//! Affine-parametric shape atlases.
//!
//! A deformation field is `V_y(x) = V_0(x) + Σ_k w_k φ_k(x) y_k` for
//! parameters `y ∈ [-1, 1]^K`. This module owns the feature catalog, the
//! `γ`-sequence `γ_k = w_k ‖φ_k‖_{C¹}` with its sum `c_γ`, Jacobian samples,
//! the uniformity diagnostics and cube sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, Mat2, Point2};
use crate::scalar::Real;

/// Points per axis of the tensor grid used for `C¹` norm estimates.
pub const C1_GRID_POINTS: usize = 64;
/// Multiplicative safety factor applied to sampled `C¹` norms.
pub const C1_SAFETY_FACTOR: f64 = 1.05;
/// Points per axis for the uniformity check.
pub const UNIFORMITY_GRID_POINTS: usize = 17;
/// Tolerance for membership in the closed reference domain.
pub const DOMAIN_TOL: f64 = 1e-12;

/// Reference domain `D_ref`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// `(0, 1)²`
    UnitSquare,
    /// `{|x| < 1}`
    UnitDisk,
}

impl Domain {
    pub fn contains<T: Real>(&self, x: Point2<T>) -> bool {
        let tol = T::lit(DOMAIN_TOL);
        match self {
            Domain::UnitSquare => {
                x.iter().all(|&c| c >= -tol && c <= T::one() + tol)
            }
            Domain::UnitDisk => norm2(x) <= T::one() + tol,
        }
    }

    /// Tensor grid of `n × n` points covering the closed domain.
    pub fn sample_grid<T: Real>(&self, n: usize) -> Vec<Point2<T>> {
        let (lo, hi) = match self {
            Domain::UnitSquare => (0.0, 1.0),
            Domain::UnitDisk => (-1.0, 1.0),
        };
        let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let p = [T::lit(lo + step * i as f64), T::lit(lo + step * j as f64)];
                if self.contains(p) {
                    out.push(p);
                }
            }
        }
        out
    }
}

/// One monomial `coef · x₁^p₁ x₂^p₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub coef: f64,
    pub p1: u32,
    pub p2: u32,
}

impl PolyTerm {
    pub fn new(coef: f64, p1: u32, p2: u32) -> Self {
        Self { coef, p1, p2 }
    }
}

/// Serializable description of a vector field on the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `amplitude · sin(π k₁ x₁) sin(π k₂ x₂) · e_component`
    Sine {
        k1: u32,
        k2: u32,
        component: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Polynomial components.
    Poly { x: Vec<PolyTerm>, y: Vec<PolyTerm> },
}

fn one() -> f64 {
    1.0
}

impl FieldSpec {
    pub fn identity() -> Self {
        Self::affine([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    }

    /// `x ↦ M x + b`.
    pub fn affine(m: [[f64; 2]; 2], b: [f64; 2]) -> Self {
        let comp = |row: [f64; 2], off: f64| {
            let mut t = Vec::new();
            if off != 0.0 {
                t.push(PolyTerm::new(off, 0, 0));
            }
            if row[0] != 0.0 {
                t.push(PolyTerm::new(row[0], 1, 0));
            }
            if row[1] != 0.0 {
                t.push(PolyTerm::new(row[1], 0, 1));
            }
            t
        };
        FieldSpec::Poly { x: comp(m[0], b[0]), y: comp(m[1], b[1]) }
    }

    /// Fixed diagonal enumeration of tensor sine bumps: frequency pairs by
    /// `k₁ + k₂`, then `k₁`, each with components `e₁`, `e₂`.
    pub fn sine_catalog(count: usize) -> Vec<FieldSpec> {
        diagonal_pairs(1)
            .flat_map(|(k1, k2)| {
                (0..2).map(move |component| FieldSpec::Sine { k1, k2, component, amplitude: 1.0 })
            })
            .take(count)
            .collect()
    }

    /// Polynomial bubbles `16 x₁(1−x₁)x₂(1−x₂) x₁^m₁ x₂^m₂ · e_i`.
    pub fn bubble_catalog(count: usize) -> Vec<FieldSpec> {
        diagonal_pairs(0)
            .flat_map(|(m1, m2)| {
                (0..2).map(move |component| {
                    // x1(1-x1) x2(1-x2) = (x1 - x1^2)(x2 - x2^2)
                    let terms = vec![
                        PolyTerm::new(16.0, m1 + 1, m2 + 1),
                        PolyTerm::new(-16.0, m1 + 2, m2 + 1),
                        PolyTerm::new(-16.0, m1 + 1, m2 + 2),
                        PolyTerm::new(16.0, m1 + 2, m2 + 2),
                    ];
                    if component == 0 {
                        FieldSpec::Poly { x: terms, y: Vec::new() }
                    } else {
                        FieldSpec::Poly { x: Vec::new(), y: terms }
                    }
                })
            })
            .take(count)
            .collect()
    }
}

fn diagonal_pairs(start: u32) -> impl Iterator<Item = (u32, u32)> {
    (2 * start..).flat_map(move |sum| (start..=sum - start).map(move |a| (a, sum - a)))
}

#[derive(Clone, Debug)]
enum Field<T> {
    Sine { k1: T, k2: T, component: usize, amplitude: T },
    Poly { terms: [Vec<(T, i32, i32)>; 2] },
}

impl<T: Real> Field<T> {
    fn from_spec(spec: &FieldSpec) -> Result<Self> {
        Ok(match spec {
            FieldSpec::Sine { k1, k2, component, amplitude } => {
                if *component > 1 {
                    return Err(Error::InvalidInput(format!("component {component} out of range")));
                }
                if *k1 == 0 || *k2 == 0 {
                    return Err(Error::InvalidInput("sine frequencies must be >= 1".into()));
                }
                Field::Sine {
                    k1: T::lit(*k1 as f64),
                    k2: T::lit(*k2 as f64),
                    component: *component,
                    amplitude: T::lit(*amplitude),
                }
            }
            FieldSpec::Poly { x, y } => {
                let conv = |ts: &[PolyTerm]| {
                    ts.iter().map(|t| (T::lit(t.coef), t.p1 as i32, t.p2 as i32)).collect()
                };
                Field::Poly { terms: [conv(x), conv(y)] }
            }
        })
    }

    fn value(&self, x: Point2<T>) -> Point2<T> {
        match self {
            Field::Sine { k1, k2, component, amplitude } => {
                let pi = T::PI();
                let s = *amplitude * (pi * *k1 * x[0]).sin() * (pi * *k2 * x[1]).sin();
                let mut out = [T::zero(); 2];
                out[*component] = s;
                out
            }
            Field::Poly { terms } => {
                let eval = |ts: &[(T, i32, i32)]| {
                    ts.iter().fold(T::zero(), |acc, &(c, p1, p2)| acc + c * x[0].powi(p1) * x[1].powi(p2))
                };
                [eval(&terms[0]), eval(&terms[1])]
            }
        }
    }

    fn gradient(&self, x: Point2<T>) -> Mat2<T> {
        match self {
            Field::Sine { k1, k2, component, amplitude } => {
                let pi = T::PI();
                let (s1, c1) = (pi * *k1 * x[0]).sin_cos();
                let (s2, c2) = (pi * *k2 * x[1]).sin_cos();
                let row = [*amplitude * pi * *k1 * c1 * s2, *amplitude * pi * *k2 * s1 * c2];
                let mut m = Mat2::zero();
                m.m[*component] = row;
                m
            }
            Field::Poly { terms } => {
                let grad = |ts: &[(T, i32, i32)]| {
                    let mut g = [T::zero(); 2];
                    for &(c, p1, p2) in ts {
                        if p1 > 0 {
                            g[0] += c * T::lit(p1 as f64) * x[0].powi(p1 - 1) * x[1].powi(p2);
                        }
                        if p2 > 0 {
                            g[1] += c * T::lit(p2 as f64) * x[0].powi(p1) * x[1].powi(p2 - 1);
                        }
                    }
                    g
                };
                Mat2 { m: [grad(&terms[0]), grad(&terms[1])] }
            }
        }
    }
}

/// A shape feature `φ` with its analytic gradient and sampled `C¹` norm.
#[derive(Clone, Debug)]
pub struct ShapeFeature<T> {
    spec: FieldSpec,
    field: Field<T>,
    pub c1_norm_estimate: T,
}

impl<T: Real> ShapeFeature<T> {
    /// Builds the feature and estimates `sup|φ| + sup‖∇φ‖` on the sample grid
    /// of `domain`, inflated by [`C1_SAFETY_FACTOR`].
    pub fn new(spec: FieldSpec, domain: Domain) -> Result<Self> {
        let field = Field::from_spec(&spec)?;
        let mut sup_val = T::zero();
        let mut sup_grad = T::zero();
        for x in domain.sample_grid::<T>(C1_GRID_POINTS) {
            sup_val = sup_val.max(norm2(field.value(x)));
            sup_grad = sup_grad.max(field.gradient(x).op_norm());
        }
        let c1_norm_estimate = (sup_val + sup_grad) * T::lit(C1_SAFETY_FACTOR);
        Ok(Self { spec, field, c1_norm_estimate })
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn value(&self, x: Point2<T>) -> Point2<T> {
        self.field.value(x)
    }

    pub fn gradient(&self, x: Point2<T>) -> Mat2<T> {
        self.field.gradient(x)
    }
}

/// Closed-form weight rule `w_k = c · k^{−β}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRule {
    pub c: f64,
    pub beta: f64,
}

/// Positive, non-increasing weights `w_1 ≥ w_2 ≥ … > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSequence<T> {
    values: Vec<T>,
    generator: Option<WeightRule>,
}

impl<T: Real> WeightSequence<T> {
    pub fn from_values(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be positive and finite".into()));
        }
        if values.windows(2).any(|p| p[1] > p[0]) {
            return Err(Error::InvalidInput("weights must be non-increasing".into()));
        }
        Ok(Self { values, generator: None })
    }

    /// Stores the first `len` terms of `c · k^{−β}`. The rule must decay
    /// faster than `k^{−1}` so that `w^{1+ε}` is summable for every `ε > 0`.
    pub fn from_rule(rule: WeightRule, len: usize) -> Result<Self> {
        if !(rule.c > 0.0) || !(rule.beta > 1.0) {
            return Err(Error::InvalidInput(format!(
                "weight rule needs c > 0 and beta > 1, got c = {}, beta = {}",
                rule.c, rule.beta
            )));
        }
        let values = (1..=len).map(|k| T::lit(rule.c * (k as f64).powf(-rule.beta))).collect();
        let mut seq = Self::from_values(values)?;
        seq.generator = Some(rule);
        Ok(seq)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn generator(&self) -> Option<WeightRule> {
        self.generator
    }

    /// Weight `k` (1-based), extending via the rule past the stored prefix.
    pub fn get(&self, k: usize) -> Option<T> {
        if k >= 1 && k <= self.values.len() {
            return Some(self.values[k - 1]);
        }
        self.generator.filter(|_| k >= 1).map(|r| T::lit(r.c * (k as f64).powf(-r.beta)))
    }

    /// `Σ w_k^{1+ε}` over the stored prefix.
    pub fn summability(&self, eps: T) -> T {
        self.values.iter().map(|w| w.powf(T::one() + eps)).sum()
    }

    /// Returns the sequence `r · w_k^s`.
    pub fn scaled(&self, r: T, s: T) -> Result<Self> {
        Self::from_values(self.values.iter().map(|&w| r * w.powf(s)).collect())
    }
}

/// Truncated parameter vector `y ∈ [−1, 1]^K`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamPoint<T> {
    coords: Vec<T>,
}

impl<T: Real> ParamPoint<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        for (index, &value) in coords.iter().enumerate() {
            if !(value >= -T::one() && value <= T::one()) {
                return Err(Error::ParameterOutOfCube { index, value: value.to_f64_lossless() });
            }
        }
        Ok(Self { coords })
    }

    pub fn zeros(k: usize) -> Self {
        Self { coords: vec![T::zero(); k] }
    }

    /// `±e_k` style corner: all zero except coordinate `k`.
    pub fn one_hot(dim: usize, k: usize, value: T) -> Result<Self> {
        let mut coords = vec![T::zero(); dim];
        coords[k] = value;
        Self::new(coords)
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.to_f64_lossless()).collect()
    }
}

/// `J_y(x)` with its determinant and extreme singular values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobianSample<T> {
    pub matrix: Mat2<T>,
    pub det: T,
    pub singular_values: (T, T),
}

impl<T: Real> JacobianSample<T> {
    pub fn from_matrix(matrix: Mat2<T>) -> Self {
        Self { matrix, det: matrix.det(), singular_values: matrix.singular_values() }
    }
}

/// `γ_k` and `c_γ`, with the validity flag `c_γ < 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaReport<T> {
    pub gamma: Vec<T>,
    pub c_gamma: T,
    pub valid: bool,
}

/// Sampled singular-value bounds over a finite set of `(y, x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformityReport<T> {
    pub sigma_min: T,
    pub sigma_max: T,
    pub min_det: T,
    /// `sup |V_y| + sup ‖J_y‖` over the samples.
    pub max_c1_forward: T,
    /// `sup |x| + sup ‖J_y^{-1}‖` over the samples.
    pub inverse_c1_estimate: T,
    pub samples: usize,
}

/// The affine-parametric shape family.
#[derive(Clone, Debug)]
pub struct ShapeAtlas<T> {
    pub reference_domain: Domain,
    pub nominal: ShapeFeature<T>,
    pub features: Vec<ShapeFeature<T>>,
    pub weights: WeightSequence<T>,
    pub truncation_dim: usize,
}

impl<T: Real> ShapeAtlas<T> {
    /// Structural checks only; validity of `c_γ` is reported by
    /// [`ShapeAtlas::gamma_sequence`] and enforced by [`ShapeAtlas::ensure_valid`].
    pub fn new(
        reference_domain: Domain,
        nominal: FieldSpec,
        features: Vec<FieldSpec>,
        weights: WeightSequence<T>,
        truncation_dim: usize,
    ) -> Result<Self> {
        if features.len() < truncation_dim {
            return Err(Error::InvalidInput(format!(
                "atlas has {} features but truncation dimension {truncation_dim}",
                features.len()
            )));
        }
        if weights.len() < truncation_dim {
            return Err(Error::InvalidInput(format!(
                "atlas has {} weights but truncation dimension {truncation_dim}",
                weights.len()
            )));
        }
        let nominal = ShapeFeature::new(nominal, reference_domain)?;
        let features = features
            .into_iter()
            .map(|f| ShapeFeature::new(f, reference_domain))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { reference_domain, nominal, features, weights, truncation_dim })
    }

    /// Identity nominal map without active features.
    pub fn identity(domain: Domain) -> Self {
        Self::new(domain, FieldSpec::identity(), Vec::new(), WeightSequence::from_values(Vec::new()).unwrap(), 0)
            .expect("identity atlas")
    }

    /// Active weights `w_1..w_K`.
    pub fn active_weights(&self) -> &[T] {
        &self.weights.values()[..self.truncation_dim]
    }

    fn check_inputs(&self, y: &ParamPoint<T>, x: Point2<T>) -> Result<()> {
        if y.dim() != self.truncation_dim {
            return Err(Error::DimensionMismatch { expected: self.truncation_dim, got: y.dim() });
        }
        if !self.reference_domain.contains(x) {
            return Err(Error::OutsideDomain { x: x[0].to_f64_lossless(), y: x[1].to_f64_lossless() });
        }
        Ok(())
    }

    /// `V_y(x) = V_0(x) + Σ_{k≤K} w_k φ_k(x) y_k`.
    pub fn evaluate_field(&self, y: &ParamPoint<T>, x: Point2<T>) -> Result<Point2<T>> {
        self.check_inputs(y, x)?;
        Ok(self.field_unchecked(y, x))
    }

    pub(crate) fn field_unchecked(&self, y: &ParamPoint<T>, x: Point2<T>) -> Point2<T> {
        let mut v = self.nominal.value(x);
        for ((f, &w), &yk) in self.features.iter().zip(self.active_weights()).zip(y.coords()) {
            if yk == T::zero() {
                continue;
            }
            let p = f.value(x);
            v[0] += w * yk * p[0];
            v[1] += w * yk * p[1];
        }
        v
    }

    pub(crate) fn jacobian_unchecked(&self, y: &ParamPoint<T>, x: Point2<T>) -> Mat2<T> {
        let mut j = self.nominal.gradient(x);
        for ((f, &w), &yk) in self.features.iter().zip(self.active_weights()).zip(y.coords()) {
            if yk == T::zero() {
                continue;
            }
            j = j + f.gradient(x) * (w * yk);
        }
        j
    }

    /// `J_y(x) = ∇V_0(x) + Σ w_k ∇φ_k(x) y_k`.
    pub fn jacobian(&self, y: &ParamPoint<T>, x: Point2<T>) -> Result<JacobianSample<T>> {
        self.check_inputs(y, x)?;
        Ok(JacobianSample::from_matrix(self.jacobian_unchecked(y, x)))
    }

    /// `γ_k = w_k · ‖φ_k‖_{C¹}` for `k ≤ K` and `c_γ = Σ γ_k`.
    pub fn gamma_sequence(&self) -> Result<GammaReport<T>> {
        if self.truncation_dim == 0 || self.features.is_empty() {
            return Err(Error::InvalidInput("atlas has no active features".into()));
        }
        let gamma: Vec<T> = self
            .features
            .iter()
            .zip(self.active_weights())
            .map(|(f, &w)| w * f.c1_norm_estimate)
            .collect();
        let c_gamma: T = gamma.iter().copied().sum();
        Ok(GammaReport { valid: c_gamma < T::one(), gamma, c_gamma })
    }

    /// `c_γ`, zero for an atlas without active features.
    pub fn c_gamma(&self) -> T {
        self.gamma_sequence().map(|g| g.c_gamma).unwrap_or(T::zero())
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let c_gamma = self.c_gamma();
        if c_gamma >= T::one() {
            return Err(Error::InvalidAtlas { c_gamma: c_gamma.to_f64_lossless() });
        }
        Ok(())
    }

    /// The `2K + 1` parameter corners: zero and every `±e_k`.
    pub fn parameter_corners(&self) -> Vec<ParamPoint<T>> {
        let k = self.truncation_dim;
        let mut out = vec![ParamPoint::zeros(k)];
        for i in 0..k {
            for s in [T::one(), -T::one()] {
                out.push(ParamPoint::one_hot(k, i, s).expect("corner in cube"));
            }
        }
        out
    }

    /// Min/max singular values of `J_y(x)` over the parameter corners plus
    /// `extra_params` uniform samples, and a tensor grid with
    /// `space_points_per_axis` points per axis.
    pub fn check_uniformity(
        &self,
        extra_params: usize,
        space_points_per_axis: usize,
        seed: u64,
    ) -> Result<UniformityReport<T>> {
        self.ensure_valid()?;
        let mut params = self.parameter_corners();
        if self.truncation_dim > 0 {
            params.extend(sample_cube_many(seed, self.truncation_dim, extra_params));
        }
        let grid = self.reference_domain.sample_grid::<T>(space_points_per_axis);
        let mut rep = UniformityReport {
            sigma_min: T::infinity(),
            sigma_max: T::zero(),
            min_det: T::infinity(),
            max_c1_forward: T::zero(),
            inverse_c1_estimate: T::zero(),
            samples: 0,
        };
        let mut max_x = T::zero();
        for y in &params {
            let mut sup_v = T::zero();
            let mut sup_j = T::zero();
            for &x in &grid {
                let j = JacobianSample::from_matrix(self.jacobian_unchecked(y, x));
                if !(j.det > T::zero()) {
                    return Err(Error::NonPositiveJacobian {
                        det: j.det.to_f64_lossless(),
                        x: x[0].to_f64_lossless(),
                        y: x[1].to_f64_lossless(),
                    });
                }
                rep.sigma_min = rep.sigma_min.min(j.singular_values.0);
                rep.sigma_max = rep.sigma_max.max(j.singular_values.1);
                rep.min_det = rep.min_det.min(j.det);
                sup_v = sup_v.max(norm2(self.field_unchecked(y, x)));
                sup_j = sup_j.max(j.singular_values.1);
                max_x = max_x.max(norm2(x));
                rep.samples += 1;
            }
            rep.max_c1_forward = rep.max_c1_forward.max(sup_v + sup_j);
        }
        rep.inverse_c1_estimate = max_x + T::one() / rep.sigma_min;
        Ok(rep)
    }

    /// Parameter-free encoding of `V_y − V_0` against the features: `(w_j y_j)`.
    pub fn encode(&self, y: &ParamPoint<T>) -> Result<Vec<T>> {
        if y.dim() != self.truncation_dim {
            return Err(Error::DimensionMismatch { expected: self.truncation_dim, got: y.dim() });
        }
        Ok(self.active_weights().iter().zip(y.coords()).map(|(&w, &c)| w * c).collect())
    }
}

/// Coefficients `(r · w_j^s · y_j)_{j≤K}` of `σ_r^s(y)`.
pub fn scaling_map<T: Real>(atlas: &ShapeAtlas<T>, r: T, s: T, y: &ParamPoint<T>) -> Result<Vec<T>> {
    if !(s > T::lit(0.5)) {
        return Err(Error::InvalidInput(format!(
            "scaling exponent s = {} must exceed 1/2",
            s.to_f64_lossless()
        )));
    }
    if !(r > T::zero()) {
        return Err(Error::InvalidInput("scaling factor r must be positive".into()));
    }
    if y.dim() != atlas.truncation_dim {
        return Err(Error::DimensionMismatch { expected: atlas.truncation_dim, got: y.dim() });
    }
    Ok(atlas.active_weights().iter().zip(y.coords()).map(|(&w, &c)| r * w.powf(s) * c).collect())
}

/// One uniform draw from `[−1, 1]^K`; deterministic per seed.
pub fn sample_cube<T: Real>(seed: u64, k: usize) -> Result<ParamPoint<T>> {
    if k == 0 {
        return Err(Error::InvalidInput("cube dimension must be >= 1".into()));
    }
    Ok(sample_cube_many(seed, k, 1).remove(0))
}

/// `n` i.i.d. uniform draws from one seeded stream.
pub fn sample_cube_many<T: Real>(seed: u64, k: usize, n: usize) -> Vec<ParamPoint<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| ParamPoint {
            coords: (0..k).map(|_| T::lit(rng.gen_range(-1.0..=1.0))).collect(),
        })
        .collect()
}
