//! Regression stage on transformed samples and the KAR / KAR.2 procedures.

use nalgebra::{DMatrix, DVector};

use super::projection::{fit_projection_x, fit_projection_y, fit_projections_joint};
use super::{
    check_positive, mean, vstack, CausalModel, KernelPolicies, ProjectionOperatorX, ProjectionOperatorY,
    SplitPlan,
};
use crate::data_io::Dataset;
use crate::error::{KarError, Result};
use crate::kernel::{gram, gram_self, kernel_column, KernelSpec, RidgeFactor};
use crate::scalar::Scalar;
use crate::split::random_split;

/// Largest accepted anchor strength. Larger values belong to kernel IV.
pub const GAMMA_CAP: f64 = 1e6;

/// Three-stage KAR with disjoint projection sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KarConfig<T: Scalar> {
    pub split: SplitPlan,
    pub gamma: T,
    pub alpha_x: T,
    pub alpha_y: T,
    pub xi: T,
    pub kernels: KernelPolicies<T>,
}

/// Two-stage KAR.2: one joint projection set with a shared regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kar2Config<T: Scalar> {
    pub split: SplitPlan,
    pub gamma: T,
    pub alpha: T,
    pub xi: T,
    pub kernels: KernelPolicies<T>,
}

/// Fitted final-stage operator `Ĥ`, evaluated as `f(x) = Ĥψ(x)`.
///
/// `f(x) = ȳ + Σ_l β_l [k_X(x_l, x) + (√γ − 1)·w_lᵀ k_X(X₁, x)]`, where `ȳ` is
/// the regression-stage mean of `y` removed before fitting.
#[derive(Debug, Clone)]
pub struct KarModel<T: Scalar> {
    gamma: T,
    xi: T,
    regression_x: DMatrix<T>,
    regression_z: DMatrix<T>,
    transformed_y: DVector<T>,
    weights: DMatrix<T>,
    beta: DVector<T>,
    // weights · beta, so prediction costs one kernel column per stage
    folded: DVector<T>,
    offset: T,
    kernel_x: KernelSpec<T>,
    proj_x: ProjectionOperatorX<T>,
    proj_y: ProjectionOperatorY<T>,
}

impl<T: Scalar> KarModel<T> {
    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn xi(&self) -> T {
        self.xi
    }

    /// Dual coefficients `β = (K̂ + mξI)⁻¹ ŷ_γ`.
    pub fn beta(&self) -> &DVector<T> {
        &self.beta
    }

    /// Centered transformed outputs `ŷ_γ`.
    pub fn transformed_outputs(&self) -> &DVector<T> {
        &self.transformed_y
    }

    /// Columns are the projection coefficients `w_l` of the regression-stage anchors.
    pub fn projection_weights(&self) -> &DMatrix<T> {
        &self.weights
    }

    pub fn regression_inputs(&self) -> &DMatrix<T> {
        &self.regression_x
    }

    pub fn regression_anchors(&self) -> &DMatrix<T> {
        &self.regression_z
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    pub fn kernel_x(&self) -> &KernelSpec<T> {
        &self.kernel_x
    }

    pub fn projection_x(&self) -> &ProjectionOperatorX<T> {
        &self.proj_x
    }

    pub fn projection_y(&self) -> &ProjectionOperatorY<T> {
        &self.proj_y
    }

    /// `K̂` of the fitted model, recomputed from its stored pieces.
    pub fn transformed_gram(&self) -> Result<DMatrix<T>> {
        transformed_gram(&self.regression_x, &self.weights, self.gamma, &self.proj_x)
    }
}

impl<T: Scalar> CausalModel<T> for KarModel<T> {
    fn x_dim(&self) -> usize {
        self.regression_x.ncols()
    }

    fn predict(&self, x: &[T]) -> T {
        assert_eq!(x.len(), self.x_dim(), "query dimension mismatch");
        let direct = self.beta.dot(&kernel_column(&self.kernel_x, &self.regression_x, x));
        let shift = self.gamma.sqrt() - T::one();
        if shift == T::zero() {
            return self.offset + direct;
        }
        let projected = self
            .folded
            .dot(&kernel_column(&self.kernel_x, self.proj_x.inputs(), x));
        self.offset + direct + shift * projected
    }
}

/// Gram matrix of the transformed features `ψ̂_l = ψ(x_l) + (√γ − 1)·Ê_X φ(z_l)`.
///
/// Entry `(l, l′)` is `k(x_l, x_l′) + c·[w_lᵀ k(X₁, x_l′) + w_l′ᵀ k(X₁, x_l)] + c²·w_lᵀ K₁ w_l′`
/// with `c = √γ − 1` and `w_l` the `l`-th column of `weights`.
pub fn transformed_gram<T: Scalar>(
    regression_x: &DMatrix<T>,
    weights: &DMatrix<T>,
    gamma: T,
    proj_x: &ProjectionOperatorX<T>,
) -> Result<DMatrix<T>> {
    let m = regression_x.nrows();
    if weights.nrows() != proj_x.len() || weights.ncols() != m {
        return Err(KarError::invalid(format!(
            "weights are {}×{}, expected {}×{m}",
            weights.nrows(),
            weights.ncols(),
            proj_x.len()
        )));
    }
    if !(gamma >= T::zero()) {
        return Err(KarError::invalid(format!("gamma must be ≥ 0, got {gamma}")));
    }
    let kx = proj_x.kernel_x();
    let base = gram_self(kx, regression_x)?;
    let c = gamma.sqrt() - T::one();
    if c == T::zero() {
        return Ok(base);
    }
    let cross = weights.transpose() * gram(kx, proj_x.inputs(), regression_x)?;
    let quad = weights.transpose() * proj_x.input_gram() * weights;
    let mut out = base + (&cross + cross.transpose()) * c + quad * (c * c);
    // exact symmetry for the Cholesky path
    let half = T::c(0.5);
    for j in 0..m {
        for i in 0..j {
            let v = (out[(i, j)] + out[(j, i)]) * half;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

fn check_gamma<T: Scalar>(gamma: T) -> Result<()> {
    if !(gamma >= T::zero()) || !gamma.is_finite_value() {
        return Err(KarError::invalid(format!("gamma must be ≥ 0, got {gamma}")));
    }
    if gamma > T::c(GAMMA_CAP) {
        return Err(KarError::invalid(format!(
            "gamma {gamma} exceeds the cap {GAMMA_CAP}; use kernel IV for the γ → ∞ limit"
        )));
    }
    Ok(())
}

struct Stages {
    x_set: Vec<usize>,
    y_set: Vec<usize>,
    reg_set: Vec<usize>,
}

fn three_way(n_total: usize, split: SplitPlan, seed: u64) -> Result<Stages> {
    match split {
        SplitPlan::ThreeWay { n1, n2, m } => {
            let mut blocks = random_split(n_total, &[n1, n2, m], seed)?.into_iter();
            Ok(Stages {
                x_set: blocks.next().unwrap_or_default(),
                y_set: blocks.next().unwrap_or_default(),
                reg_set: blocks.next().unwrap_or_default(),
            })
        }
        SplitPlan::Shared => {
            let all: Vec<usize> = (0..n_total).collect();
            Ok(Stages {
                x_set: all.clone(),
                y_set: all.clone(),
                reg_set: all,
            })
        }
        SplitPlan::TwoWay { .. } => Err(KarError::invalid("three-stage KAR needs a three-way split")),
    }
}

pub(crate) fn two_way(n_total: usize, split: SplitPlan, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    match split {
        SplitPlan::TwoWay { n, m } => {
            let mut blocks = random_split(n_total, &[n, m], seed)?.into_iter();
            Ok((blocks.next().unwrap_or_default(), blocks.next().unwrap_or_default()))
        }
        SplitPlan::Shared => {
            let all: Vec<usize> = (0..n_total).collect();
            Ok((all.clone(), all))
        }
        SplitPlan::ThreeWay { .. } => Err(KarError::invalid("two-stage estimators need a two-way split")),
    }
}

fn regression_stage<T: Scalar>(
    gamma: T,
    xi: T,
    reg: &Dataset<T>,
    proj_x: ProjectionOperatorX<T>,
    proj_y: ProjectionOperatorY<T>,
) -> Result<KarModel<T>> {
    let m = reg.len();
    if m < 1 {
        return Err(KarError::invalid("regression stage is empty"));
    }
    let c = gamma.sqrt() - T::one();
    let offset = mean(reg.y());
    let weights = proj_x.project_many(reg.z())?;
    let mut transformed_y = reg.y().add_scalar(-offset);
    if c != T::zero() {
        transformed_y += proj_y.predict_many(reg.z())? * c;
    }
    let k_hat = transformed_gram(reg.x(), &weights, gamma, &proj_x)?;
    let beta = RidgeFactor::new(&k_hat, T::from_usize_lossy(m) * xi)?.solve_vec(&transformed_y);
    if beta.iter().any(|v| !v.is_finite_value()) {
        return Err(KarError::IllConditioned("non-finite dual coefficients".into()));
    }
    let folded = &weights * &beta;
    Ok(KarModel {
        gamma,
        xi,
        regression_x: reg.x().clone(),
        regression_z: reg.z().clone(),
        transformed_y,
        weights,
        beta,
        folded,
        offset,
        kernel_x: *proj_x.kernel_x(),
        proj_x,
        proj_y,
    })
}

/// Three-stage kernel anchor regression.
///
/// A seeded random partition gives the `x`-projection set, the
/// `y`-projection set and the regression set. `y` is centered by the mean of
/// each set that uses it; the regression-stage mean is added back at
/// prediction time.
pub fn fit_kar<T: Scalar>(data: &Dataset<T>, config: &KarConfig<T>, seed: u64) -> Result<KarModel<T>> {
    check_gamma(config.gamma)?;
    check_positive("alpha_x", config.alpha_x)?;
    check_positive("alpha_y", config.alpha_y)?;
    check_positive("xi", config.xi)?;
    let stages = three_way(data.len(), config.split, seed)?;
    let set_x = data.select(&stages.x_set);
    let set_y = data.select(&stages.y_set);
    let reg = data.select(&stages.reg_set);

    let kernel_z = config.kernels.z.resolve(set_x.z())?;
    let kernel_x = config.kernels.x.resolve(&vstack(set_x.x(), reg.x()))?;
    let proj_x = fit_projection_x(set_x.x(), set_x.z(), config.alpha_x, kernel_z, kernel_x)?;
    let y_centered = set_y.y().add_scalar(-mean(set_y.y()));
    let proj_y = fit_projection_y(&y_centered, set_y.z(), config.alpha_y, kernel_z)?;
    regression_stage(config.gamma, config.xi, &reg, proj_x, proj_y)
}

/// Two-stage kernel anchor regression: both projections share one sample set.
pub fn fit_kar2<T: Scalar>(data: &Dataset<T>, config: &Kar2Config<T>, seed: u64) -> Result<KarModel<T>> {
    check_gamma(config.gamma)?;
    check_positive("alpha", config.alpha)?;
    check_positive("xi", config.xi)?;
    let (proj_idx, reg_idx) = two_way(data.len(), config.split, seed)?;
    let proj = data.select(&proj_idx);
    let reg = data.select(&reg_idx);

    let kernel_z = config.kernels.z.resolve(proj.z())?;
    let kernel_x = config.kernels.x.resolve(&vstack(proj.x(), reg.x()))?;
    let y_centered = proj.y().add_scalar(-mean(proj.y()));
    let (proj_x, proj_y) =
        fit_projections_joint(proj.x(), &y_centered, proj.z(), config.alpha, kernel_z, kernel_x)?;
    regression_stage(config.gamma, config.xi, &reg, proj_x, proj_y)
}

/// Kernel partialling out: KAR with `γ = 0`.
pub fn fit_kpa<T: Scalar>(data: &Dataset<T>, config: &KarConfig<T>, seed: u64) -> Result<KarModel<T>> {
    fit_kar(data, &KarConfig { gamma: T::zero(), ..*config }, seed)
}

/// Kernel ridge regression of `y` on `x` over the regression-stage set; this
/// is KAR with `γ = 1`, where the projection terms cancel.
pub fn fit_kreg<T: Scalar>(data: &Dataset<T>, config: &KarConfig<T>, seed: u64) -> Result<KarModel<T>> {
    fit_kar(data, &KarConfig { gamma: T::one(), ..*config }, seed)
}
