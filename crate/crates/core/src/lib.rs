//! Exact Max-Cut by branch and bound with certified semidefinite bounds.
//!
//! Numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the precisions the solver uses.

pub mod bnb;
pub mod graph;
pub mod linalg;
pub mod rng;
pub mod rounding;
pub mod scalar;
pub mod sdp;
pub mod surrogate;

pub use bnb::{solve, BnbError, OracleKind, SolveResult, Solver, SolverConfig, Surrogate};
pub use graph::{parse_instance, Assignment, FixingStep, WeightFamily, WeightedGraph};
pub use rounding::{Factors, RoundingConfig};
pub use surrogate::{ModelError, ModelSpec, NormKind, Variant};

/// Symmetric matrix in double precision.
pub type Matrix = linalg::SymMatrix<f64>;
/// Certified bound in double precision.
pub type Bound = sdp::CertifiedBound<f64>;
pub type Pdhg = sdp::PdhgParams<f64>;
/// Surrogate evaluated in single precision, matching the container payload.
pub type Model = surrogate::SurrogateModel<f32>;
/// Surrogate evaluated in double precision.
pub type Model64 = surrogate::SurrogateModel<f64>;
