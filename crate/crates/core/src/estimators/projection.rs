//! Projection stage: kernel ridge regressions of `ψ(X)` and `Y` on `φ(Z)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::check_positive;
use crate::error::{KarError, Result};
use crate::kernel::{gram, gram_self, kernel_column, KernelSpec, RidgeFactor};
use crate::scalar::Scalar;

/// Conditional mean embedding of `ψ(X)` given `Z`, learned by ridge regression.
///
/// `Ê_X φ(z) = Σᵢ w(z)ᵢ ψ(xᵢ)` with `w(z) = (K_ZZ + n·α·I)⁻¹ k_Z(Z, z)`.
#[derive(Debug, Clone)]
pub struct ProjectionOperatorX<T: Scalar> {
    anchors: DMatrix<T>,
    inputs: DMatrix<T>,
    factor: Arc<RidgeFactor<T>>,
    input_gram: DMatrix<T>,
    kernel_z: KernelSpec<T>,
    kernel_x: KernelSpec<T>,
    alpha: T,
}

impl<T: Scalar> ProjectionOperatorX<T> {
    /// Coefficient vector `w(z)` over the stage-1 inputs.
    pub fn project_x(&self, z: &[T]) -> Result<DVector<T>> {
        if z.len() != self.anchors.ncols() {
            return Err(KarError::invalid(format!(
                "anchor point has dimension {}, expected {}",
                z.len(),
                self.anchors.ncols()
            )));
        }
        if z.iter().any(|v| !v.is_finite_value()) {
            return Err(KarError::invalid("anchor point is not finite"));
        }
        Ok(self.factor.solve_vec(&kernel_column(&self.kernel_z, &self.anchors, z)))
    }

    /// `n₁ × m` matrix whose columns are `w(z_l)` for each row of `zs`.
    pub fn project_many(&self, zs: &DMatrix<T>) -> Result<DMatrix<T>> {
        let kz = gram(&self.kernel_z, &self.anchors, zs)?;
        Ok(self.factor.solve(&kz))
    }

    /// `(Ê_X φ(z))(x) = Σᵢ w(z)ᵢ k_X(xᵢ, x)`.
    pub fn embedding_at(&self, z: &[T], x: &[T]) -> Result<T> {
        let w = self.project_x(z)?;
        Ok(w.dot(&kernel_column(&self.kernel_x, &self.inputs, x)))
    }

    /// The explicit solve matrix `(K_ZZ + n·α·I)⁻¹`.
    pub fn solve_matrix(&self) -> DMatrix<T> {
        self.factor.inverse()
    }

    pub fn anchors(&self) -> &DMatrix<T> {
        &self.anchors
    }

    pub fn inputs(&self) -> &DMatrix<T> {
        &self.inputs
    }

    /// `K_XX` over the stage-1 inputs.
    pub fn input_gram(&self) -> &DMatrix<T> {
        &self.input_gram
    }

    pub fn kernel_z(&self) -> &KernelSpec<T> {
        &self.kernel_z
    }

    pub fn kernel_x(&self) -> &KernelSpec<T> {
        &self.kernel_x
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.anchors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.nrows() == 0
    }

    /// True when both operators were built on one factorization of the
    /// anchor gram (see [`fit_projections_joint`]).
    pub fn shares_factorization_with(&self, other: &ProjectionOperatorY<T>) -> bool {
        Arc::ptr_eq(&self.factor, &other.factor)
    }
}

/// Kernel ridge regression of `Y` on `φ(Z)`.
#[derive(Debug, Clone)]
pub struct ProjectionOperatorY<T: Scalar> {
    anchors: DMatrix<T>,
    outputs: DVector<T>,
    dual: DVector<T>,
    factor: Arc<RidgeFactor<T>>,
    kernel_z: KernelSpec<T>,
    alpha: T,
}

impl<T: Scalar> ProjectionOperatorY<T> {
    pub fn predict(&self, z: &[T]) -> Result<T> {
        if z.len() != self.anchors.ncols() {
            return Err(KarError::invalid(format!(
                "anchor point has dimension {}, expected {}",
                z.len(),
                self.anchors.ncols()
            )));
        }
        Ok(self.dual.dot(&kernel_column(&self.kernel_z, &self.anchors, z)))
    }

    pub fn predict_many(&self, zs: &DMatrix<T>) -> Result<DVector<T>> {
        let kz = gram(&self.kernel_z, zs, &self.anchors)?;
        Ok(kz * &self.dual)
    }

    /// `(K_ZZ + n·α·I)⁻¹ Y`.
    pub fn dual_weights(&self) -> &DVector<T> {
        &self.dual
    }

    pub fn outputs(&self) -> &DVector<T> {
        &self.outputs
    }

    pub fn anchors(&self) -> &DMatrix<T> {
        &self.anchors
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

}

fn check_stage(n: usize, other: usize, what: &str) -> Result<()> {
    if n < 2 {
        return Err(KarError::invalid(format!("{what} needs at least 2 samples, got {n}")));
    }
    if other != n {
        return Err(KarError::invalid(format!("{what}: {n} anchors but {other} paired samples")));
    }
    Ok(())
}

fn factor_anchor_gram<T: Scalar>(kernel_z: &KernelSpec<T>, z: &DMatrix<T>, alpha: T) -> Result<RidgeFactor<T>> {
    let kzz = gram_self(kernel_z, z)?;
    RidgeFactor::new(&kzz, T::from_usize_lossy(z.nrows()) * alpha)
}

/// Fits `Ê_X` on the pairs `(xᵢ, zᵢ)`.
pub fn fit_projection_x<T: Scalar>(
    x: &DMatrix<T>,
    z: &DMatrix<T>,
    alpha: T,
    kernel_z: KernelSpec<T>,
    kernel_x: KernelSpec<T>,
) -> Result<ProjectionOperatorX<T>> {
    check_stage(z.nrows(), x.nrows(), "x-projection")?;
    check_positive("alpha", alpha)?;
    let factor = Arc::new(factor_anchor_gram(&kernel_z, z, alpha)?);
    build_x(x, z, factor, kernel_z, kernel_x, alpha)
}

fn build_x<T: Scalar>(
    x: &DMatrix<T>,
    z: &DMatrix<T>,
    factor: Arc<RidgeFactor<T>>,
    kernel_z: KernelSpec<T>,
    kernel_x: KernelSpec<T>,
    alpha: T,
) -> Result<ProjectionOperatorX<T>> {
    Ok(ProjectionOperatorX {
        anchors: z.clone(),
        inputs: x.clone(),
        input_gram: gram_self(&kernel_x, x)?,
        factor,
        kernel_z,
        kernel_x,
        alpha,
    })
}

/// Fits `Ê_Y` on the pairs `(yⱼ, zⱼ)`.
pub fn fit_projection_y<T: Scalar>(
    y: &DVector<T>,
    z: &DMatrix<T>,
    alpha: T,
    kernel_z: KernelSpec<T>,
) -> Result<ProjectionOperatorY<T>> {
    check_stage(z.nrows(), y.len(), "y-projection")?;
    check_positive("alpha", alpha)?;
    let factor = Arc::new(factor_anchor_gram(&kernel_z, z, alpha)?);
    Ok(build_y(y, z, factor, kernel_z, alpha))
}

fn build_y<T: Scalar>(
    y: &DVector<T>,
    z: &DMatrix<T>,
    factor: Arc<RidgeFactor<T>>,
    kernel_z: KernelSpec<T>,
    alpha: T,
) -> ProjectionOperatorY<T> {
    ProjectionOperatorY {
        anchors: z.clone(),
        outputs: y.clone(),
        dual: factor.solve_vec(y),
        factor,
        kernel_z,
        alpha,
    }
}

/// Both projections from one sample set, sharing a single factorization of
/// `K_ZZ + n·α·I`.
pub fn fit_projections_joint<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    z: &DMatrix<T>,
    alpha: T,
    kernel_z: KernelSpec<T>,
    kernel_x: KernelSpec<T>,
) -> Result<(ProjectionOperatorX<T>, ProjectionOperatorY<T>)> {
    check_stage(z.nrows(), x.nrows(), "joint projection")?;
    check_stage(z.nrows(), y.len(), "joint projection")?;
    check_positive("alpha", alpha)?;
    let factor = Arc::new(factor_anchor_gram(&kernel_z, z, alpha)?);
    let px = build_x(x, z, Arc::clone(&factor), kernel_z, kernel_x, alpha)?;
    let py = build_y(y, z, factor, kernel_z, alpha);
    Ok((px, py))
}
