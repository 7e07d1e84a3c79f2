//! Numerical laboratory for the boundary value problem `-Δu + Vu = 0` with
//! Radon-measure boundary data on the unit disk (N = 2) and unit ball (N = 3).
//!
//! The crate provides exact Poisson/Green kernels on the model domains,
//! admissibility and stability criteria for singular nonnegative potentials,
//! the boundary capacity `C_V` with its dual and compact-set formulas, a
//! finite-volume solver for truncated potentials, the reduced-measure
//! truncation ladder with the perturbed kernel `K_V`, boundary-trace
//! extraction on level sets `Σ_ε`, and the explicit radial blow-up solution.
//!
//! All numerics are generic over the scalar type through [`Real`]; the
//! concrete alias used by the CLI and the acceptance suite is [`Scalar`]
//! (`f64`).

pub mod capacity;
pub mod criteria;
pub mod geometry;
pub mod kernels;
pub mod measures;
pub mod quad;
pub mod radial;
pub mod reduced;
pub mod report;
pub mod solver;
pub mod trace;

use std::fmt;

/// Scalar type over which all numerics are generic: `f32` or `f64`.
///
/// `of` converts an `f64` literal into the scalar type; hard-coded
/// double-precision constants (Bessel zeros, quadrature weights) enter the
/// generic code through it.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::iter::Sum
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable in scalar type")
    }

    fn from_usize_(n: usize) -> Self {
        Self::from_usize(n).expect("usize not representable in scalar type")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Default double-precision scalar used by the CLI and the acceptance suite.
pub type Scalar = f64;

/// Points in the ambient space. Disk points keep `z = 0`.
pub type Point<R> = [R; 3];

/// Errors shared by every module.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point outside domain: {0}")]
    OutOfDomain(String),
    #[error("kernel singularity: {0}")]
    Singularity(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("hypothesis not verified: {0}")]
    HypothesisNotVerified(String),
    #[error("diagnostic: {0}")]
    Diagnostic(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Pointwise scalar field on the domain; implemented by closures and by
/// grid-sampled fields through interpolation adapters.
pub trait ScalarField<R: Real>: Sync {
    fn eval(&self, x: Point<R>) -> R;
}

impl<R: Real, F: Fn(Point<R>) -> R + Sync> ScalarField<R> for F {
    fn eval(&self, x: Point<R>) -> R {
        self(x)
    }
}

pub use geometry::{BoundaryGrid, Domain, DomainKind, InteriorGrid};
pub use measures::{BoundaryMeasure, BoundarySet, TestFamily};
pub use criteria::Potential;
pub use solver::{GridField, SolverGrid};

pub(crate) mod point {
    use crate::{Point, Real};

    pub fn norm<R: Real>(p: Point<R>) -> R {
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }

    pub fn dot<R: Real>(a: Point<R>, b: Point<R>) -> R {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    pub fn sub<R: Real>(a: Point<R>, b: Point<R>) -> Point<R> {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    pub fn add<R: Real>(a: Point<R>, b: Point<R>) -> Point<R> {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    pub fn scale<R: Real>(a: Point<R>, s: R) -> Point<R> {
        [a[0] * s, a[1] * s, a[2] * s]
    }

    pub fn dist<R: Real>(a: Point<R>, b: Point<R>) -> R {
        norm(sub(a, b))
    }
}
