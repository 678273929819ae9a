//! Synthetic structural-equation laboratories.
//!
//! [`design`] holds the scalar nonlinear generators used in the benchmarks,
//! [`sem`] the finite-dimensional (identity-feature) structural model with
//! its closed-form population anchor-regression operator, and [`cases`]
//! constructors for the identifiability scenarios.

pub mod cases;
pub mod design;
pub mod sem;

pub use cases::{bias_norms, random_spec, IdentifiabilityCase, SemDims, GAMMA_LARGE};
pub use design::{generate, generate_conditional, normal_cdf, structural_response, true_do, DesignTag, GeneratorDesign};
pub use sem::{bias_operator, covariance_split, generate_sem, population_h_gamma, SemSample, SemSpec};
