//! Fitted causal-function estimators.
//!
//! Kernel family: three-stage KAR, two-stage KAR.2, kernel IV, and the KPA /
//! KReg special cases. Linear family: OLS, 2SLS, partialling out and anchor
//! regression.

mod kar;
mod kiv;
mod linear;
mod projection;

use nalgebra::{DMatrix, DVector};

use crate::error::{KarError, Result};
use crate::kernel::{median_heuristic, KernelSpec};
use crate::scalar::Scalar;

pub use kar::{
    fit_kar, fit_kar2, fit_kpa, fit_kreg, transformed_gram, Kar2Config, KarConfig, KarModel, GAMMA_CAP,
};
pub use kiv::{fit_kiv, KivConfig, KivModel};
pub use linear::{fit_linear, LinearMethod, LinearModel};
pub use projection::{
    fit_projection_x, fit_projection_y, fit_projections_joint, ProjectionOperatorX, ProjectionOperatorY,
};

/// Anything that maps a treatment value to a predicted causal response.
pub trait CausalModel<T: Scalar>: Send + Sync {
    fn x_dim(&self) -> usize;

    /// Point prediction. Panics if `x.len() != self.x_dim()`.
    fn predict(&self, x: &[T]) -> T;

    /// Predictions for every row of `xs`.
    fn predict_many(&self, xs: &DMatrix<T>) -> Result<DVector<T>> {
        if xs.ncols() != self.x_dim() {
            return Err(KarError::invalid(format!(
                "query points have dimension {}, model expects {}",
                xs.ncols(),
                self.x_dim()
            )));
        }
        let mut row = vec![T::zero(); xs.ncols()];
        Ok(DVector::from_fn(xs.nrows(), |i, _| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = xs[(i, j)];
            }
            self.predict(&row)
        }))
    }
}

/// How a stage obtains its kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelPolicy<T: Scalar> {
    /// Gaussian kernel, bandwidth from the median heuristic on the samples the
    /// kernel is evaluated on.
    GaussianMedian,
    Fixed(KernelSpec<T>),
}

impl<T: Scalar> KernelPolicy<T> {
    pub fn resolve(&self, points: &DMatrix<T>) -> Result<KernelSpec<T>> {
        match self {
            KernelPolicy::GaussianMedian => KernelSpec::gaussian(median_heuristic(points)?),
            KernelPolicy::Fixed(spec) => Ok(*spec),
        }
    }
}

/// Kernel policies for the treatment (`x`) and anchor (`z`) spaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPolicies<T: Scalar> {
    pub x: KernelPolicy<T>,
    pub z: KernelPolicy<T>,
}

impl<T: Scalar> KernelPolicies<T> {
    pub fn gaussian_median() -> Self {
        Self {
            x: KernelPolicy::GaussianMedian,
            z: KernelPolicy::GaussianMedian,
        }
    }

    pub fn linear() -> Self {
        Self {
            x: KernelPolicy::Fixed(KernelSpec::linear()),
            z: KernelPolicy::Fixed(KernelSpec::linear()),
        }
    }
}

impl<T: Scalar> Default for KernelPolicies<T> {
    fn default() -> Self {
        Self::gaussian_median()
    }
}

/// How the `N` samples are distributed over the estimation stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPlan {
    /// Disjoint random sets for the `x`-projection, the `y`-projection and the
    /// regression stage.
    ThreeWay { n1: usize, n2: usize, m: usize },
    /// Disjoint random sets for a joint projection stage and the regression stage.
    TwoWay { n: usize, m: usize },
    /// Every stage reuses all samples. Only meant for equivalence checks
    /// against closed-form linear estimators; benchmarks always split.
    #[doc(hidden)]
    Shared,
}

pub(crate) fn vstack<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (na, nb) = (a.nrows(), b.nrows());
    DMatrix::from_fn(na + nb, a.ncols(), |i, j| if i < na { a[(i, j)] } else { b[(i - na, j)] })
}

pub(crate) fn mean<T: Scalar>(v: &DVector<T>) -> T {
    if v.is_empty() {
        return T::zero();
    }
    v.sum() / T::from_usize_lossy(v.len())
}

pub(crate) fn check_positive<T: Scalar>(name: &str, value: T) -> Result<()> {
    if value.is_finite_value() && value > T::zero() {
        Ok(())
    } else {
        Err(KarError::invalid(format!("{name} must be positive and finite, got {value}")))
    }
}
