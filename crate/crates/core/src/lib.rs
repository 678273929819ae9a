//! Kernel anchor regression.
//!
//! Estimators of the causal response `x ↦ E[Y | do(X = x)]` that trade off
//! instrumental-variable invariance and least-squares fit through an anchor
//! strength `γ`: three-stage [`fit_kar`], two-stage [`fit_kar2`], kernel IV,
//! the kernel partialling-out / ridge special cases and the linear family.
//! [`sem_lab`] holds the synthetic generators and the population
//! identifiability checker, [`evaluation`] the seeded trial campaigns.
//!
//! Kernel and estimator code is generic over [`Scalar`] (`f32` / `f64`);
//! the generators and evaluation harness work in `f64`, and the aliases
//! below name the concrete double-precision types.

pub mod data_io;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod kernel;
pub mod scalar;
pub mod sem_lab;
pub mod split;

pub use data_io::{load_csv, ColumnSchema, Dataset};
pub use error::{KarError, Result};
pub use estimators::{
    fit_kar, fit_kar2, fit_kiv, fit_kpa, fit_kreg, fit_linear, CausalModel, KernelPolicies, KernelPolicy,
    LinearMethod, SplitPlan,
};
pub use kernel::{KernelFamily, KernelSpec, RidgeFactor};
pub use scalar::Scalar;
pub use split::random_split;

pub type DatasetF64 = Dataset<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type KernelSpecF64 = KernelSpec<f64>;
pub type KarConfigF64 = estimators::KarConfig<f64>;
pub type Kar2ConfigF64 = estimators::Kar2Config<f64>;
pub type KivConfigF64 = estimators::KivConfig<f64>;
pub type KarModelF64 = estimators::KarModel<f64>;
pub type KarModelF32 = estimators::KarModel<f32>;
pub type KivModelF64 = estimators::KivModel<f64>;
pub type LinearModelF64 = estimators::LinearModel<f64>;
