//! Kernel instrumental variable regression (two-stage, `γ → ∞` baseline).

use nalgebra::{DMatrix, DVector};

use super::kar::two_way;
use super::projection::fit_projection_x;
use super::{check_positive, mean, vstack, CausalModel, KernelPolicies, ProjectionOperatorX, SplitPlan};
use crate::data_io::Dataset;
use crate::error::{KarError, Result};
use crate::kernel::{kernel_column, KernelSpec, RidgeFactor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KivConfig<T: Scalar> {
    /// `TwoWay { n, m }`: stage-1 set of size `n`, stage-2 set of size `m`.
    pub split: SplitPlan,
    pub alpha: T,
    pub xi: T,
    pub kernels: KernelPolicies<T>,
}

/// `h(x) = ȳ + Σ_l β_l·w_lᵀ k_X(X₁, x)`: outputs regressed on the estimated
/// conditional mean embeddings `μ(z_l) = Ê_X φ(z_l)`.
#[derive(Debug, Clone)]
pub struct KivModel<T: Scalar> {
    weights: DMatrix<T>,
    beta: DVector<T>,
    folded: DVector<T>,
    offset: T,
    kernel_x: KernelSpec<T>,
    proj_x: ProjectionOperatorX<T>,
}

impl<T: Scalar> KivModel<T> {
    pub fn beta(&self) -> &DVector<T> {
        &self.beta
    }

    pub fn projection_weights(&self) -> &DMatrix<T> {
        &self.weights
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    pub fn projection_x(&self) -> &ProjectionOperatorX<T> {
        &self.proj_x
    }
}

impl<T: Scalar> CausalModel<T> for KivModel<T> {
    fn x_dim(&self) -> usize {
        self.proj_x.inputs().ncols()
    }

    fn predict(&self, x: &[T]) -> T {
        assert_eq!(x.len(), self.x_dim(), "query dimension mismatch");
        self.offset + self.folded.dot(&kernel_column(&self.kernel_x, self.proj_x.inputs(), x))
    }
}

pub fn fit_kiv<T: Scalar>(data: &Dataset<T>, config: &KivConfig<T>, seed: u64) -> Result<KivModel<T>> {
    check_positive("alpha", config.alpha)?;
    check_positive("xi", config.xi)?;
    let (s1, s2) = two_way(data.len(), config.split, seed)?;
    let stage1 = data.select(&s1);
    let stage2 = data.select(&s2);
    if stage2.is_empty() {
        return Err(KarError::invalid("kernel IV second stage is empty"));
    }
    let kernel_z = config.kernels.z.resolve(stage1.z())?;
    let kernel_x = config.kernels.x.resolve(&vstack(stage1.x(), stage2.x()))?;
    let proj_x = fit_projection_x(stage1.x(), stage1.z(), config.alpha, kernel_z, kernel_x)?;

    let weights = proj_x.project_many(stage2.z())?;
    let mut k_mu = weights.transpose() * proj_x.input_gram() * &weights;
    let m = stage2.len();
    for j in 0..m {
        for i in 0..j {
            let v = (k_mu[(i, j)] + k_mu[(j, i)]) * T::c(0.5);
            k_mu[(i, j)] = v;
            k_mu[(j, i)] = v;
        }
    }
    let offset = mean(stage2.y());
    let centered = stage2.y().add_scalar(-offset);
    let beta = RidgeFactor::new(&k_mu, T::from_usize_lossy(m) * config.xi)?.solve_vec(&centered);
    if beta.iter().any(|v| !v.is_finite_value()) {
        return Err(KarError::IllConditioned("non-finite dual coefficients".into()));
    }
    let folded = &weights * &beta;
    Ok(KivModel {
        weights,
        beta,
        folded,
        offset,
        kernel_x,
        proj_x,
    })
}
