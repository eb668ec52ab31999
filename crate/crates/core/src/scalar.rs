//! Scalar abstraction shared by all numerical kernels.
//!
//! Every kernel in the crate is written against [`Real`], so the same code
//! runs in `f32` and `f64`. Tolerances that depend on the precision live on
//! the trait as associated constants.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Relative residual the linear solvers must reach.
    const SOLVE_TOL: f64;
    /// Newton tolerance for pointwise map inversion.
    const NEWTON_TOL: f64;

    /// Converts an `f64` literal. Exact for `f64`, rounded for `f32`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    #[inline]
    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }
}

impl Real for f32 {
    const SOLVE_TOL: f64 = 1e-5;
    const NEWTON_TOL: f64 = 1e-6;
}

impl Real for f64 {
    const SOLVE_TOL: f64 = 1e-10;
    const NEWTON_TOL: f64 = 1e-12;
}
