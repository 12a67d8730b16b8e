//! C1 cubic Powell-Sabin B-splines over arbitrary triangulations.
//!
//! The crate builds the full B-spline basis of the C1 cubic spline space
//! over a Powell-Sabin refined triangulation, extracts two nested
//! super-smooth subspaces through sparse extraction matrices, and applies
//! all three spaces to least-squares fitting and Galerkin solution of
//! second- and fourth-order boundary value problems.
//!
//! Everything is generic over the floating-point scalar through the
//! [`scalar::Real`] trait; concrete `f64` aliases live at the crate root.
//! Extraction matrices keep exact rational entries and convert to the
//! floating scalar only when applied.

pub mod assembly;
pub mod basis;
pub mod bb;
pub mod extraction;
pub mod geometry;
pub mod mesh;
pub mod problems;
pub mod psrefine;
pub mod quadrature;
pub mod scalar;
pub mod sparse;

pub use scalar::Real;

/// Concrete `f64` aliases for the main pipeline types.
pub type Point = geometry::Pt<f64>;
pub type Triangulation = mesh::Triangulation<f64>;
pub type PsRefinement = psrefine::PsRefinement<f64>;
pub type BBPatch = bb::BBPatch<f64>;
pub type QuadratureRule = quadrature::QuadratureRule<f64>;
pub type SplineBasis = basis::SplineBasis<f64>;
pub type SplineFunction = basis::SplineFunction<f64>;
pub type Pipeline = problems::Pipeline<f64>;

/// `f32` aliases; the geometric and algebraic kernels are exercised with
/// both scalar types in the test suite.
pub mod f32_aliases {
    pub type Point = crate::geometry::Pt<f32>;
    pub type Triangulation = crate::mesh::Triangulation<f32>;
    pub type BBPatch = crate::bb::BBPatch<f32>;
    pub type QuadratureRule = crate::quadrature::QuadratureRule<f32>;
}
pub mod verify;
